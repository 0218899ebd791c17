#pragma once

// Run configuration. Parsing is strict: the user document is merged over the
// full default tree and any key the defaults do not have is rejected with its
// dotted path. The merged tree is what lands in the manifest.

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "vogue/adamw.hpp"
#include "vogue/augment.hpp"
#include "vogue/env.hpp"
#include "vogue/eval.hpp"
#include "vogue/grpo.hpp"
#include "vogue/policy.hpp"
#include "vogue/shaping.hpp"

namespace vogue {

using json = nlohmann::json;

enum class Algorithm { grpo, vogue };
std::string_view algorithm_name(Algorithm a);
Algorithm parse_algorithm(std::string_view name);

// Supervised format pretraining that precedes RL (the stand-in for a base model).
struct WarmupConfig {
  std::size_t steps = 300;
  std::size_t batch_size = 16;
  double lr = 3e-3;
  std::size_t max_think = 2;
};

struct EnvConfig {
  std::map<std::string, double> family_mix{{"shape-count", 1.0}};
  std::size_t difficulty = 2;
  double ambiguous_fraction = 0.3;
  std::size_t image_size = 16;
  std::size_t grid = 4;

  EnvOptions options() const { return {image_size, grid, ambiguous_fraction}; }
};

struct EvalConfig {
  std::size_t every = 0;  // 0: final evaluation only
  std::string suite;      // path to a suite file; empty generates one
  std::size_t suite_size = 64;
  std::uint64_t suite_seed = 12345;
  std::size_t n = 4;
  std::vector<std::size_t> ks{1, 4};
  double temperature = 1.0;
  bool greedy = false;
  std::string pass1 = "mean";
};

struct RunConfig {
  std::uint64_t seed = 0;
  Algorithm algorithm = Algorithm::vogue;
  std::uint64_t steps = 200;
  std::string precision = "f32";
  std::size_t checkpoint_every = 50;
  std::size_t metrics_flush_every = 1;
  PolicyConfig policy;
  AdamWConfig optim;
  WarmupConfig warmup;
  EnvConfig env;
  AugmentSpec augment;
  GrpoConfig grpo;
  ShapingConfig vogue;  // total_steps mirrors `steps`
  EvalConfig eval;
};

json config_to_json(const RunConfig& config);
// Strict: `doc` may be partial; every key must exist in the default tree.
RunConfig config_from_json(const json& doc);
void validate(const RunConfig& config);

// `key=value`; value parsed as JSON when possible, as a bare string otherwise.
void apply_override(json& doc, std::string_view assignment);

// Accepts a config file or a run manifest (its "config" member is used).
RunConfig load_config(const std::string& path, const std::vector<std::string>& overrides = {});
// The same document, overrides applied, before parsing.
json load_config_document(const std::string& path, const std::vector<std::string>& overrides = {});

json policy_to_json(const PolicyConfig& c);
PolicyConfig policy_from_json(const json& j);

EvalOptions eval_options(const EvalConfig& c, std::size_t max_response_len);

}  // namespace vogue
