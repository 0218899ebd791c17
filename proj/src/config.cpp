#include "vogue/config.hpp"

#include <fstream>
#include <sstream>

#include "vogue/error.hpp"

namespace vogue {

std::string_view algorithm_name(Algorithm a) { return a == Algorithm::grpo ? "grpo" : "vogue"; }

Algorithm parse_algorithm(std::string_view name) {
  if (name == "grpo") return Algorithm::grpo;
  if (name == "vogue") return Algorithm::vogue;
  throw ConfigError("algorithm: unknown value '" + std::string(name) + "' (valid: grpo, vogue)");
}

json policy_to_json(const PolicyConfig& c) {
  return {{"vocab_size", c.vocab_size},
          {"embed_dim", c.embed_dim},
          {"heads", c.heads},
          {"context_len", c.context_len},
          {"mlp_dim", c.mlp_dim},
          {"image_height", c.image_height},
          {"image_width", c.image_width},
          {"image_channels", c.image_channels},
          {"image_tokens", c.image_tokens},
          {"image_hidden", c.image_hidden},
          {"architecture", std::string(architecture_name(c.architecture))},
          {"temperature", c.temperature},
          {"init_scale", c.init_scale}};
}

json config_to_json(const RunConfig& c) {
  json j;
  j["seed"] = c.seed;
  j["algorithm"] = std::string(algorithm_name(c.algorithm));
  j["steps"] = c.steps;
  j["precision"] = c.precision;
  j["checkpoint_every"] = c.checkpoint_every;
  j["metrics_flush_every"] = c.metrics_flush_every;
  j["policy"] = policy_to_json(c.policy);
  j["optim"] = {{"lr", c.optim.lr},
                {"weight_decay", c.optim.weight_decay},
                {"beta1", c.optim.beta1},
                {"beta2", c.optim.beta2},
                {"eps", c.optim.eps}};
  j["warmup"] = {{"steps", c.warmup.steps},
                 {"batch_size", c.warmup.batch_size},
                 {"lr", c.warmup.lr},
                 {"max_think", c.warmup.max_think}};
  j["env"] = {{"family_mix", c.env.family_mix},
              {"difficulty", c.env.difficulty},
              {"ambiguous_fraction", c.env.ambiguous_fraction},
              {"image_size", c.env.image_size},
              {"grid", c.env.grid}};
  j["augment"] = {{"p_hflip", c.augment.p_hflip},   {"p_vflip", c.augment.p_vflip},
                  {"p_rotate", c.augment.p_rotate}, {"rotations", c.augment.rotations},
                  {"jitter", c.augment.jitter},     {"sigma", c.augment.sigma}};
  j["grpo"] = {{"rollout_batch_size", c.grpo.rollout_batch_size},
               {"group_size", c.grpo.group_size},
               {"minibatch_size", c.grpo.minibatch_size},
               {"epochs", c.grpo.epochs},
               {"snapshot_period", c.grpo.snapshot_period},
               {"max_response_len", c.grpo.max_response_len},
               {"clip_eps", c.grpo.clip_eps},
               {"sample_std", c.grpo.sample_std},
               {"entropy_bonus", c.grpo.entropy_bonus}};
  j["vogue"] = {{"alpha_v", c.vogue.alpha_v},
                {"beta_v", c.vogue.beta_v},
                {"alpha_e", c.vogue.alpha_e},
                {"beta_e", c.vogue.beta_e},
                {"p_start", c.vogue.p_start},
                {"p_end", c.vogue.p_end},
                {"divergence", std::string(divergence_name(c.vogue.divergence))},
                {"granularity", std::string(granularity_name(c.vogue.granularity))},
                {"enable_uv", c.vogue.enable_uv},
                {"enable_entropy", c.vogue.enable_entropy},
                {"lazy_noisy", c.vogue.lazy_noisy}};
  j["eval"] = {{"every", c.eval.every},
               {"suite", c.eval.suite},
               {"suite_size", c.eval.suite_size},
               {"suite_seed", c.eval.suite_seed},
               {"n", c.eval.n},
               {"ks", c.eval.ks},
               {"temperature", c.eval.temperature},
               {"greedy", c.eval.greedy},
               {"pass1", c.eval.pass1}};
  return j;
}

namespace {

// Maps whose keys are data rather than schema.
bool open_map(const std::string& path) { return path == "env.family_mix"; }

std::string join(const std::string& prefix, const std::string& key) { return prefix.empty() ? key : prefix + "." + key; }

void merge(json& base, const json& user, const std::string& path) {
  if (!user.is_object()) throw ConfigError("config: '" + (path.empty() ? std::string("<root>") : path) + "' must be an object");
  for (auto it = user.begin(); it != user.end(); ++it) {
    const std::string key = join(path, it.key());
    if (!base.contains(it.key())) throw ConfigError("config: unknown key '" + key + "'");
    json& slot = base[it.key()];
    if (slot.is_object() && !open_map(key)) {
      merge(slot, it.value(), key);
    } else {
      slot = it.value();
    }
  }
}

struct Reader {
  const json& root;

  const json& at(const std::string& path) const {
    const json* j = &root;
    std::size_t start = 0;
    while (true) {
      const auto dot = path.find('.', start);
      const std::string part = path.substr(start, dot - start);
      j = &j->at(part);
      if (dot == std::string::npos) break;
      start = dot + 1;
    }
    return *j;
  }
  std::uint64_t uint(const std::string& path) const {
    const json& j = at(path);
    if (!j.is_number_integer() || (j.is_number_integer() && !j.is_number_unsigned() && j.get<std::int64_t>() < 0)) {
      throw ConfigError("config: '" + path + "' must be a non-negative integer, got " + j.dump());
    }
    return j.get<std::uint64_t>();
  }
  std::size_t size(const std::string& path) const { return static_cast<std::size_t>(uint(path)); }
  double real(const std::string& path) const {
    const json& j = at(path);
    if (!j.is_number()) throw ConfigError("config: '" + path + "' must be a number, got " + j.dump());
    return j.get<double>();
  }
  bool boolean(const std::string& path) const {
    const json& j = at(path);
    if (!j.is_boolean()) throw ConfigError("config: '" + path + "' must be true or false, got " + j.dump());
    return j.get<bool>();
  }
  std::string string(const std::string& path) const {
    const json& j = at(path);
    if (!j.is_string()) throw ConfigError("config: '" + path + "' must be a string, got " + j.dump());
    return j.get<std::string>();
  }
};

template <class F>
auto named(const std::string& path, F&& f) {
  try {
    return f();
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError("config: '" + path + "': " + e.what());
  }
}

}  // namespace

PolicyConfig policy_from_json(const json& j) {
  json base = policy_to_json(PolicyConfig{});
  merge(base, j, "policy");
  json wrapped = {{"policy", base}};
  Reader r{wrapped};
  PolicyConfig c;
  c.vocab_size = r.size("policy.vocab_size");
  c.embed_dim = r.size("policy.embed_dim");
  c.heads = r.size("policy.heads");
  c.context_len = r.size("policy.context_len");
  c.mlp_dim = r.size("policy.mlp_dim");
  c.image_height = r.size("policy.image_height");
  c.image_width = r.size("policy.image_width");
  c.image_channels = r.size("policy.image_channels");
  c.image_tokens = r.size("policy.image_tokens");
  c.image_hidden = r.size("policy.image_hidden");
  c.architecture = named("policy.architecture", [&] { return parse_architecture(r.string("policy.architecture")); });
  c.temperature = r.real("policy.temperature");
  c.init_scale = r.real("policy.init_scale");
  return c;
}

RunConfig config_from_json(const json& doc) {
  json merged = config_to_json(RunConfig{});
  merge(merged, doc, "");
  Reader r{merged};
  RunConfig c;
  c.seed = r.uint("seed");
  c.algorithm = parse_algorithm(r.string("algorithm"));
  c.steps = r.uint("steps");
  c.precision = r.string("precision");
  c.checkpoint_every = r.size("checkpoint_every");
  c.metrics_flush_every = r.size("metrics_flush_every");
  c.policy = policy_from_json(merged.at("policy"));
  c.optim.lr = r.real("optim.lr");
  c.optim.weight_decay = r.real("optim.weight_decay");
  c.optim.beta1 = r.real("optim.beta1");
  c.optim.beta2 = r.real("optim.beta2");
  c.optim.eps = r.real("optim.eps");
  c.warmup.steps = r.size("warmup.steps");
  c.warmup.batch_size = r.size("warmup.batch_size");
  c.warmup.lr = r.real("warmup.lr");
  c.warmup.max_think = r.size("warmup.max_think");

  const json& mix = merged.at("env").at("family_mix");
  if (!mix.is_object() || mix.empty()) throw ConfigError("config: 'env.family_mix' must be a non-empty object");
  c.env.family_mix.clear();
  for (auto it = mix.begin(); it != mix.end(); ++it) {
    named("env.family_mix." + it.key(), [&] { return parse_family(it.key()); });
    c.env.family_mix[it.key()] = r.real("env.family_mix." + it.key());
  }
  c.env.difficulty = r.size("env.difficulty");
  c.env.ambiguous_fraction = r.real("env.ambiguous_fraction");
  c.env.image_size = r.size("env.image_size");
  c.env.grid = r.size("env.grid");

  c.augment.p_hflip = r.real("augment.p_hflip");
  c.augment.p_vflip = r.real("augment.p_vflip");
  c.augment.p_rotate = r.real("augment.p_rotate");
  c.augment.rotations.clear();
  const json& rot = merged.at("augment").at("rotations");
  if (!rot.is_array()) throw ConfigError("config: 'augment.rotations' must be an array");
  for (const auto& v : rot) {
    if (!v.is_number_integer()) throw ConfigError("config: 'augment.rotations' entries must be integers");
    c.augment.rotations.push_back(v.get<int>());
  }
  c.augment.jitter = r.real("augment.jitter");
  c.augment.sigma = r.real("augment.sigma");

  c.grpo.rollout_batch_size = r.size("grpo.rollout_batch_size");
  c.grpo.group_size = r.size("grpo.group_size");
  c.grpo.minibatch_size = r.size("grpo.minibatch_size");
  c.grpo.epochs = r.size("grpo.epochs");
  c.grpo.snapshot_period = r.size("grpo.snapshot_period");
  c.grpo.max_response_len = r.size("grpo.max_response_len");
  c.grpo.clip_eps = r.real("grpo.clip_eps");
  c.grpo.sample_std = r.boolean("grpo.sample_std");
  c.grpo.entropy_bonus = r.boolean("grpo.entropy_bonus");

  c.vogue.alpha_v = r.real("vogue.alpha_v");
  c.vogue.beta_v = r.real("vogue.beta_v");
  c.vogue.alpha_e = r.real("vogue.alpha_e");
  c.vogue.beta_e = r.real("vogue.beta_e");
  c.vogue.p_start = r.real("vogue.p_start");
  c.vogue.p_end = r.real("vogue.p_end");
  c.vogue.divergence = parse_divergence(r.string("vogue.divergence"));
  c.vogue.granularity = parse_granularity(r.string("vogue.granularity"));
  c.vogue.enable_uv = r.boolean("vogue.enable_uv");
  c.vogue.enable_entropy = r.boolean("vogue.enable_entropy");
  c.vogue.lazy_noisy = r.boolean("vogue.lazy_noisy");
  c.vogue.total_steps = c.steps;

  c.eval.every = r.size("eval.every");
  c.eval.suite = r.string("eval.suite");
  c.eval.suite_size = r.size("eval.suite_size");
  c.eval.suite_seed = r.uint("eval.suite_seed");
  c.eval.n = r.size("eval.n");
  c.eval.ks.clear();
  const json& ks = merged.at("eval").at("ks");
  if (!ks.is_array() || ks.empty()) throw ConfigError("config: 'eval.ks' must be a non-empty array");
  for (const auto& k : ks) {
    if (!k.is_number_integer() || k.get<std::int64_t>() < 1) {
      throw ConfigError("config: 'eval.ks' entries must be positive integers");
    }
    c.eval.ks.push_back(k.get<std::size_t>());
  }
  c.eval.temperature = r.real("eval.temperature");
  c.eval.greedy = r.boolean("eval.greedy");
  c.eval.pass1 = r.string("eval.pass1");
  validate(c);
  return c;
}

void validate(const RunConfig& c) {
  if (c.steps == 0) throw ConfigError("config: 'steps' must be positive");
  if (c.precision != "f32" && c.precision != "f64") throw ConfigError("config: 'precision' must be f32 or f64");
  if (c.metrics_flush_every == 0) throw ConfigError("config: 'metrics_flush_every' must be positive");
  validate(c.policy);
  try {
    validate(c.optim);
  } catch (const ContractError& e) {
    throw ConfigError(std::string("config: optim: ") + e.what());
  }
  if (!(c.warmup.lr >= 0)) throw ConfigError("config: 'warmup.lr' must be >= 0");
  if (c.warmup.steps > 0 && c.warmup.batch_size == 0) throw ConfigError("config: 'warmup.batch_size' must be positive");
  double mix = 0;
  for (const auto& [name, w] : c.env.family_mix) {
    if (!(w >= 0)) throw ConfigError("config: 'env.family_mix." + name + "' must be >= 0");
    mix += w;
  }
  if (!(mix > 0)) throw ConfigError("config: 'env.family_mix' weights sum to zero");
  if (c.env.difficulty < 1 || c.env.difficulty > kMaxDifficulty) {
    throw ConfigError("config: 'env.difficulty' must lie in [1, " + std::to_string(kMaxDifficulty) + "]");
  }
  if (!(c.env.ambiguous_fraction >= 0 && c.env.ambiguous_fraction <= 1)) {
    throw ConfigError("config: 'env.ambiguous_fraction' must lie in [0,1]");
  }
  if (c.env.grid == 0 || c.env.image_size % c.env.grid != 0) {
    throw ConfigError("config: 'env.image_size' must be a multiple of 'env.grid'");
  }
  if (c.env.image_size != c.policy.image_height || c.env.image_size != c.policy.image_width ||
      c.policy.image_channels != 3) {
    throw ConfigError("config: 'env.image_size' must match policy.image_height/width with 3 channels");
  }
  validate(c.augment);
  validate(c.grpo);
  validate(c.vogue);
  if (c.grpo.max_response_len + 3 + c.policy.image_tokens > c.policy.context_len) {
    throw ConfigError("config: 'grpo.max_response_len' does not fit policy.context_len with the image prefix and question");
  }
  if (c.eval.n == 0) throw ConfigError("config: 'eval.n' must be positive");
  for (auto k : c.eval.ks) {
    if (k == 0 || k > c.eval.n) throw ConfigError("config: 'eval.ks' entries must lie in [1, eval.n]");
  }
  if (c.eval.pass1 != "mean" && c.eval.pass1 != "first") throw ConfigError("config: 'eval.pass1' must be mean or first");
  if (!(c.eval.temperature > 0)) throw ConfigError("config: 'eval.temperature' must be positive");
  if (c.eval.suite.empty() && c.eval.suite_size == 0) throw ConfigError("config: 'eval.suite_size' must be positive");
}

void apply_override(json& doc, std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos || eq == 0) {
    throw ConfigError("override '" + std::string(assignment) + "' must look like key=value");
  }
  const std::string key(assignment.substr(0, eq));
  const std::string text(assignment.substr(eq + 1));
  json value = json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;
  json* slot = &doc;
  std::size_t start = 0;
  while (true) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (part.empty()) throw ConfigError("override key '" + key + "' has an empty component");
    if (!slot->is_object()) *slot = json::object();
    slot = &(*slot)[part];
    if (dot == std::string::npos) break;
    start = dot + 1;
  }
  *slot = value;
}

json load_config_document(const std::string& path, const std::vector<std::string>& overrides) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  json doc = json::parse(buf.str(), nullptr, false);
  if (doc.is_discarded()) throw ConfigError("config: '" + path + "' is not valid JSON");
  if (doc.is_object() && doc.contains("config") && doc.contains("rng_mixer")) doc = doc["config"];
  for (const auto& o : overrides) apply_override(doc, o);
  return doc;
}

RunConfig load_config(const std::string& path, const std::vector<std::string>& overrides) {
  return config_from_json(load_config_document(path, overrides));
}

EvalOptions eval_options(const EvalConfig& c, std::size_t max_response_len) {
  EvalOptions o;
  o.n = c.n;
  o.ks = c.ks;
  o.temperature = c.temperature;
  o.greedy = c.greedy;
  o.max_response_len = max_response_len;
  o.pass1 = c.pass1 == "first" ? Pass1Mode::first : Pass1Mode::mean;
  return o;
}

}  // namespace vogue
