// vogue: train, eval, ablate, plot and suite subcommands.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "vogue/error.hpp"
#include "vogue/harness.hpp"

namespace fs = std::filesystem;
using namespace vogue;

namespace {

std::vector<std::size_t> parse_ks(const std::string& text) {
  std::vector<std::size_t> ks;
  std::stringstream in(text);
  std::string part;
  while (std::getline(in, part, ',')) {
    if (part.empty()) continue;
    try {
      ks.push_back(std::stoul(part));
    } catch (const std::exception&) {
      throw ConfigError("--k: '" + part + "' is not a positive integer");
    }
  }
  if (ks.empty()) throw ConfigError("--k: at least one k is required");
  return ks;
}

json config_doc(const std::string& path, const std::vector<std::string>& sets) {
  if (!path.empty()) return load_config_document(path, sets);
  json doc = json::object();
  for (const auto& s : sets) apply_override(doc, s);
  return doc;
}

int cmd_train(const std::string& config_path, const std::vector<std::string>& sets, std::string out, bool quiet) {
  const RunConfig config = config_from_json(config_doc(config_path, sets));
  if (out.empty()) {
    out = (fs::path(default_out_root()) /
           (std::string(algorithm_name(config.algorithm)) + "-seed" + std::to_string(config.seed)))
              .string();
  }
  std::ostream* log = quiet ? nullptr : &std::cerr;
  std::string status;
  std::optional<EvalReport> report;
  if (config.precision == "f64") {
    auto r = run_training<double>(config, out, log);
    status = r.status, report = r.final_eval;
  } else {
    auto r = run_training<float>(config, out, log);
    status = r.status, report = r.final_eval;
  }
  if (status != "complete") {
    std::cerr << "run aborted (" << status << "), partial results in " << out << "\n";
    return 3;
  }
  std::printf("run complete: %s\n", out.c_str());
  std::printf("final pass@1 %.4f", report->pass1);
  for (const auto& [k, v] : report->pass_k) std::printf("  pass@%zu %.4f", k, v);
  std::printf("\n");
  return 0;
}

void print_report(const EvalReport& r) {
  std::printf("%-16s %6s %8s", "family", "tasks", "pass@1");
  for (const auto& [k, v] : r.pass_k) std::printf("   pass@%-2zu", k);
  std::printf("\n");
  for (const auto& [name, f] : r.per_family) {
    std::printf("%-16s %6zu %8.4f", name.c_str(), f.tasks, f.pass1);
    for (const auto& [k, v] : f.pass_k) std::printf(" %9.4f", v);
    std::printf("\n");
  }
  std::printf("%-16s %6zu %8.4f", "all", r.correct.size(), r.pass1);
  for (const auto& [k, v] : r.pass_k) std::printf(" %9.4f", v);
  std::printf("\n");
}

template <class Real>
Responder checkpoint_responder(const std::string& path, const EvalOptions& options, PolicyConfig& policy,
                               std::shared_ptr<void>& keep) {
  auto ck = std::make_shared<Checkpoint<Real>>(load_checkpoint<Real>(path));
  keep = ck;
  policy = ck->policy;
  return policy_responder(ck->policy, ck->params, options);
}

int cmd_eval(const std::string& ckpt, const std::string& suite_path, bool oracle, std::size_t n, const std::string& k,
             double temperature, bool greedy, std::size_t max_len, std::uint64_t seed, const std::string& pass1,
             std::string out) {
  EvalOptions options;
  options.n = n;
  options.ks = parse_ks(k);
  options.temperature = temperature;
  options.greedy = greedy;
  options.max_response_len = max_len;
  if (pass1 != "mean" && pass1 != "first") throw ConfigError("--pass1: expected mean or first");
  options.pass1 = pass1 == "first" ? Pass1Mode::first : Pass1Mode::mean;
  const auto suite = read_suite(suite_path);

  Responder responder;
  PolicyConfig policy;
  std::shared_ptr<void> keep;
  if (oracle) {
    responder = oracle_responder();
  } else {
    if (ckpt.empty()) throw ConfigError("eval: --ckpt is required unless --oracle is given");
    responder = checkpoint_precision(ckpt) == "f64" ? checkpoint_responder<double>(ckpt, options, policy, keep)
                                                    : checkpoint_responder<float>(ckpt, options, policy, keep);
  }
  const EvalReport report = evaluate_suite(responder, suite, suite_path, options, RngStream(seed).derive("eval"));
  if (out.empty()) {
    out = oracle ? "eval_oracle.json" : (fs::path(ckpt).parent_path() / "eval_report.json").string();
  }
  std::ofstream(out) << report_to_json(report).dump(2) << "\n";
  print_report(report);
  std::printf("report: %s\n", out.c_str());
  return 0;
}

int cmd_ablate(const std::string& config_path, const std::vector<std::string>& sets, const std::string& variants,
               std::size_t seeds, std::string out, bool quiet) {
  AblationOptions options;
  options.seeds = seeds;
  std::stringstream in(variants);
  std::string v;
  while (std::getline(in, v, ',')) {
    if (v == "all") {
      options.variants = ablation_variants();
    } else if (!v.empty()) {
      options.variants.push_back(v);
    }
  }
  if (out.empty()) out = (fs::path(default_out_root()) / "ablate").string();
  const json doc = config_doc(config_path, sets);
  const AblationReport report = run_ablation(doc, options, out, quiet ? nullptr : &std::cerr);
  std::cout << comparison_markdown(report);
  std::printf("\ncomparison written to %s\n", out.c_str());
  return 0;
}

int cmd_plot(const std::vector<std::string>& runs, const std::vector<std::string>& keys, std::string out) {
  std::vector<RunSeries> series;
  for (const auto& r : runs) series.push_back(load_run(r));
  if (out.empty()) out = (fs::path(default_out_root()) / "plots").string();
  for (const auto& f : plot_runs(series, keys, out)) std::printf("%s\n", f.c_str());
  return 0;
}

int cmd_suite(const std::string& config_path, const std::vector<std::string>& sets, const std::string& out,
              std::size_t size, std::int64_t seed) {
  RunConfig config = config_from_json(config_doc(config_path, sets));
  if (size) config.eval.suite_size = size;
  if (seed >= 0) config.eval.suite_seed = static_cast<std::uint64_t>(seed);
  config.eval.suite.clear();
  const auto suite = eval_suite(config);
  write_suite(out, suite);
  std::printf("%zu tasks written to %s\n", suite.size(), out.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"GRPO and VOGUE trainer on synthetic visual tasks"};
  app.require_subcommand(1);

  std::string config_path, out;
  std::vector<std::string> sets;
  bool quiet = false;

  auto* train = app.add_subcommand("train", "train one run");
  train->add_option("--config", config_path, "JSON config or run manifest");
  train->add_option("--set", sets, "dotted-key override, e.g. grpo.group_size=4");
  train->add_option("--out", out, "run directory (default $VOGUE_OUT_ROOT/<algorithm>-seed<seed>)");
  train->add_flag("--quiet", quiet, "no progress log");

  std::string ckpt, suite_path, ks = "1,4", pass1 = "mean";
  std::size_t n = 4, max_len = 12;
  double temperature = 1.0;
  bool greedy = false, oracle = false;
  std::uint64_t eval_seed = 0;
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on a suite");
  eval->add_option("--ckpt", ckpt, "checkpoint file");
  eval->add_option("--suite", suite_path, "suite file")->required();
  eval->add_option("--n", n, "samples per task");
  eval->add_option("--k", ks, "comma-separated k values");
  eval->add_option("--temperature", temperature);
  eval->add_flag("--greedy", greedy);
  eval->add_option("--max-len", max_len, "response token budget");
  eval->add_option("--seed", eval_seed, "sampling seed");
  eval->add_option("--pass1", pass1, "mean or first");
  eval->add_flag("--oracle", oracle, "score the always-correct responder instead of a checkpoint");
  eval->add_option("--out", out, "report path");

  std::string variants = "all";
  std::size_t seeds = 1;
  auto* ablate = app.add_subcommand("ablate", "run the ablation matrix");
  ablate->add_option("--config", config_path, "base config");
  ablate->add_option("--set", sets, "dotted-key override applied to every run");
  ablate->add_option("--variants", variants, "comma-separated variant names, or all");
  ablate->add_option("--seeds", seeds, "seeds per variant, starting at the config seed");
  ablate->add_option("--out", out, "output directory");
  ablate->add_flag("--quiet", quiet);

  std::vector<std::string> runs, keys;
  auto* plot = app.add_subcommand("plot", "CSV and SVG charts from metrics");
  plot->add_option("--runs", runs, "run directories or metrics files")->required()->delimiter(',');
  plot->add_option("--keys", keys, "metric keys")->required()->delimiter(',');
  plot->add_option("--out", out, "output directory");

  std::size_t suite_size = 0;
  std::int64_t suite_seed = -1;
  auto* suite = app.add_subcommand("suite", "write an evaluation suite");
  suite->add_option("--config", config_path, "config supplying env settings");
  suite->add_option("--set", sets);
  suite->add_option("--out", out, "suite file")->required();
  suite->add_option("--size", suite_size);
  suite->add_option("--seed", suite_seed);

  CLI11_PARSE(app, argc, argv);
  try {
    if (*train) return cmd_train(config_path, sets, out, quiet);
    if (*eval) {
      return cmd_eval(ckpt, suite_path, oracle, n, ks, temperature, greedy, max_len, eval_seed, pass1, out);
    }
    if (*ablate) return cmd_ablate(config_path, sets, variants, seeds, out, quiet);
    if (*plot) return cmd_plot(runs, keys, out);
    if (*suite) return cmd_suite(config_path, sets, out, suite_size, suite_seed);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
