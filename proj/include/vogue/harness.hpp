#pragma once

// Training driver, ablation matrix and plot emission behind the CLI.

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "vogue/checkpoint.hpp"
#include "vogue/config.hpp"
#include "vogue/eval.hpp"
#include "vogue/grpo.hpp"
#include "vogue/records.hpp"

namespace vogue {

std::string code_version();

// Default output root: $VOGUE_OUT_ROOT, else "runs".
std::string default_out_root();

std::vector<std::pair<Family, double>> family_mix(const EnvConfig& env);

// The step's training inputs, from root.derive("data", step).
std::vector<TaskInstance> data_batch(const RunConfig& config, const RngStream& root, std::uint64_t step);

// Supervised pass over well-formed responses with uniformly random answers,
// so RL starts from a policy that emits the answer format but no preference
// among answers. Returns the final mean token NLL.
template <class Real>
double format_warmup(const PolicyConfig& policy, PolicyParams<Real>& params, const RunConfig& config,
                     const RngStream& rng);

// Warmup target for one task: <think> k content tokens </think> <answer> a </answer> EOS.
Tokens warmup_target(Family family, std::size_t max_think, RngStream& rng);

std::vector<TaskInstance> eval_suite(const RunConfig& config, std::string* suite_id = nullptr);

template <class Real>
struct RunResult {
  std::string status;  // "complete" or "numeric-abort"
  std::string error;
  std::uint64_t steps_completed = 0;
  std::vector<StepMetrics> metrics;
  std::vector<std::string> metric_lines;  // serialized records, as written
  std::optional<EvalReport> final_eval;
  double warmup_nll = 0;
  TrainState<Real> state;
};

// Runs warmup and config.steps steps. With a non-empty out_dir writes
// manifest.json, metrics.jsonl, checkpoints and eval_final.json there.
template <class Real>
RunResult<Real> run_training(const RunConfig& config, const std::string& out_dir, std::ostream* log = nullptr);

json make_manifest(const RunConfig& config, const std::string& status, std::uint64_t steps_completed,
                   std::size_t parameter_count);

// Ablation ---------------------------------------------------------------

const std::vector<std::string>& ablation_variants();  // the eight named variants
// Baselines "grpo" and "vogue" are accepted alongside the variants.
json variant_overrides(const std::string& name);

struct AblationOptions {
  std::vector<std::string> variants;  // empty = all eight
  std::size_t seeds = 1;              // seeds config.seed .. config.seed+seeds-1
  bool check_equivalence = true;
};

struct VariantSummary {
  std::string name;
  std::vector<double> pass1, pass_k_top, final_accuracy;  // one entry per seed
  std::map<std::string, std::vector<double>> family_pass1;
};

struct AblationReport {
  std::size_t k_top = 0;
  std::vector<VariantSummary> rows;
  bool equivalence_checked = false;
  bool equivalence_holds = false;
  std::string equivalence_detail;
};

// Runs {grpo, vogue} baselines plus the variants under shared seeds into
// out_dir/<variant>/seed<k>/, then writes comparison.{md,csv,json}.
AblationReport run_ablation(const json& base_doc, const AblationOptions& options, const std::string& out_dir,
                            std::ostream* log = nullptr);

std::string comparison_markdown(const AblationReport& report);
std::string comparison_csv(const AblationReport& report);
json comparison_json(const AblationReport& report);

// Plotting ---------------------------------------------------------------

struct RunSeries {
  std::string label;
  std::vector<ojson> records;
};

RunSeries load_run(const std::string& run_dir);

// Writes <key>.csv and <key>.svg per key into out_dir; returns written paths.
std::vector<std::string> plot_runs(const std::vector<RunSeries>& runs, const std::vector<std::string>& keys,
                                   const std::string& out_dir);

std::string render_svg(const std::vector<RunSeries>& runs, const std::string& key);

}  // namespace vogue
