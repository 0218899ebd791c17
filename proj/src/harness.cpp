#include "vogue/harness.hpp"

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <ostream>

#include "vogue/error.hpp"
#include "vogue/vogue.hpp"

#ifndef VOGUE_CODE_VERSION
#define VOGUE_CODE_VERSION "dev"
#endif

namespace vogue {

namespace fs = std::filesystem;

std::string code_version() { return VOGUE_CODE_VERSION; }

std::string default_out_root() {
  const char* env = std::getenv("VOGUE_OUT_ROOT");
  return env && *env ? env : "runs";
}

std::vector<std::pair<Family, double>> family_mix(const EnvConfig& env) {
  std::vector<std::pair<Family, double>> mix;
  for (const auto& [name, w] : env.family_mix) mix.emplace_back(parse_family(name), w);
  return mix;
}

namespace {

Family pick_family(const std::vector<std::pair<Family, double>>& mix, RngStream& rng) {
  std::vector<double> w;
  for (const auto& [f, x] : mix) w.push_back(x);
  return mix[rng.categorical(w)].first;
}

void write_text(const fs::path& path, const std::string& text) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::trunc);
    if (!out) throw Error("cannot write '" + tmp.string() + "'");
    out << text;
  }
  fs::rename(tmp, path);
}

ojson eval_summary(const EvalReport& r) {
  ojson j;
  j["pass1"] = r.pass1;
  ojson pk = ojson::object();
  for (const auto& [k, v] : r.pass_k) pk[std::to_string(k)] = v;
  j["pass_k"] = pk;
  return j;
}

}  // namespace

std::vector<TaskInstance> data_batch(const RunConfig& config, const RngStream& root, std::uint64_t step) {
  const auto mix = family_mix(config.env);
  const RngStream data = root.derive("data", step);
  std::vector<TaskInstance> batch;
  for (std::size_t i = 0; i < config.grpo.rollout_batch_size; ++i) {
    RngStream rng = data.derive("input", i);
    const Family f = pick_family(mix, rng);
    batch.push_back(generate_task(f, config.env.difficulty, rng, config.env.options()));
  }
  return batch;
}

Tokens warmup_target(Family family, std::size_t max_think, RngStream& rng) {
  Tokens t{tok::THINK_OPEN};
  const std::size_t k = rng.uniform_index(max_think + 1);
  // Think filler from digits, colors and parity words; question markers are left out.
  for (std::size_t i = 0; i < k; ++i) t.push_back(static_cast<TokenId>(tok::DIGIT0 + rng.uniform_index(16)));
  const auto space = answer_space(family);
  t.push_back(tok::THINK_CLOSE);
  t.push_back(tok::ANS_OPEN);
  t.push_back(space[rng.uniform_index(space.size())]);
  t.push_back(tok::ANS_CLOSE);
  t.push_back(tok::EOS);
  return t;
}

template <class Real>
double format_warmup(const PolicyConfig& policy, PolicyParams<Real>& params, const RunConfig& config,
                     const RngStream& rng) {
  const WarmupConfig& w = config.warmup;
  if (w.steps == 0) return 0.0;
  if (w.max_think + 6 > config.grpo.max_response_len) {
    throw ConfigError("warmup.max_think: targets of up to " + std::to_string(w.max_think + 6) +
                      " tokens exceed grpo.max_response_len");
  }
  AdamWConfig optim = config.optim;
  optim.lr = w.lr;
  AdamWState<Real> adam;
  const auto mix = family_mix(config.env);
  double last = 0;
  for (std::size_t s = 0; s < w.steps; ++s) {
    const RngStream srng = rng.derive("step", s);
    std::vector<TaskInstance> tasks;
    std::vector<Tokens> seqs;
    double tokens = 0;
    for (std::size_t i = 0; i < w.batch_size; ++i) {
      RngStream r = srng.derive("input", i);
      const Family f = pick_family(mix, r);
      tasks.push_back(generate_task(f, config.env.difficulty, r, config.env.options()));
      Tokens seq = tasks.back().question;
      const Tokens target = warmup_target(f, w.max_think, r);
      seq.insert(seq.end(), target.begin(), target.end());
      tokens += static_cast<double>(target.size());
      seqs.push_back(std::move(seq));
    }
    for (auto& [name, p] : params) p.clear_grad();
    last = 0;
    for (std::size_t i = 0; i < tasks.size(); ++i) {
      ad::Tape<Real> tape;
      auto vars = bind_parameters(tape, params);
      auto loss = ad::scale(sequence_nll(tape, vars, policy, tasks[i].image, seqs[i], tasks[i].question.size()),
                            1.0 / tokens);
      last += static_cast<double>(loss.item());
      tape.backward(loss);
    }
    adamw_step(params, adam, optim);
  }
  for (auto& [name, p] : params) p.clear_grad();
  return last;
}

std::vector<TaskInstance> eval_suite(const RunConfig& config, std::string* suite_id) {
  if (!config.eval.suite.empty()) {
    if (suite_id) *suite_id = config.eval.suite;
    return read_suite(config.eval.suite);
  }
  if (suite_id) {
    *suite_id = "generated:seed=" + std::to_string(config.eval.suite_seed) +
                ":size=" + std::to_string(config.eval.suite_size);
  }
  return generate_suite(family_mix(config.env), config.env.difficulty, config.env.options(), config.eval.suite_size,
                        config.eval.suite_seed);
}

json make_manifest(const RunConfig& config, const std::string& status, std::uint64_t steps_completed,
                   std::size_t parameter_count) {
  return {{"config", config_to_json(config)},
          {"code_version", code_version()},
          {"rng_mixer", std::string(RngStream::mixer_name)},
          {"augment", {{"describe", describe(config.augment)}, {"order", std::string(kAugmentOrder)}}},
          {"metrics_schema", kMetricsSchema},
          {"parameter_count", parameter_count},
          {"status", status},
          {"steps_completed", steps_completed}};
}

template <class Real>
RunResult<Real> run_training(const RunConfig& config, const std::string& out_dir, std::ostream* log) {
  validate(config);
  const bool persist = !out_dir.empty();
  const fs::path dir(out_dir);
  const RngStream root(config.seed);

  RunResult<Real> result;
  PolicyParams<Real> params = init_params<Real>(config.policy, root.derive("init"));
  const std::size_t nparams = parameter_count(params);
  auto write_manifest = [&](const std::string& status) {
    if (!persist) return;
    json m = make_manifest(config, status, result.steps_completed, nparams);
    m["warmup_nll"] = result.warmup_nll;
    if (!result.error.empty()) m["error"] = result.error;
    write_text(dir / "manifest.json", m.dump(2) + "\n");
  };
  if (persist) fs::create_directories(dir);
  write_manifest("running");

  result.warmup_nll = format_warmup(config.policy, params, config, root.derive("warmup"));
  if (log) *log << "warmup: final token nll " << result.warmup_nll << "\n";
  result.state = make_train_state(config.policy, std::move(params), config.optim);

  std::string suite_id;
  const std::vector<TaskInstance> suite = eval_suite(config, &suite_id);
  const EvalOptions eopts = eval_options(config.eval, config.grpo.max_response_len);
  auto evaluate = [&](std::uint64_t step) {
    return evaluate_suite(policy_responder(config.policy, result.state.params, eopts), suite, suite_id, eopts,
                          root.derive("eval", step));
  };
  auto save = [&](const std::string& name) {
    if (!persist) return;
    Checkpoint<Real> ck{config.policy, snapshot(result.state.params), result.state.adam,
                        {{"steps_completed", result.steps_completed},
                         {"seed", config.seed},
                         {"algorithm", std::string(algorithm_name(config.algorithm))}}};
    save_checkpoint((dir / name).string(), ck);
  };

  std::optional<MetricsWriter> writer;
  if (persist) writer.emplace((dir / "metrics.jsonl").string(), config.metrics_flush_every);
  ShapingConfig shaping = config.vogue;
  shaping.total_steps = config.steps;

  try {
    for (std::uint64_t step = 0; step < config.steps; ++step) {
      const auto batch = data_batch(config, root, step);
      StepMetrics m = config.algorithm == Algorithm::grpo
                          ? grpo_train_step(result.state, batch, config.grpo, shaping, root, step)
                          : vogue_train_step(result.state, batch, config.grpo, shaping, config.augment, root, step);
      ojson record = metrics_to_json(m);
      if (config.eval.every > 0 && (step + 1) % config.eval.every == 0) {
        record["eval"] = eval_summary(evaluate(step));
      }
      result.metric_lines.push_back(record.dump());
      if (writer) writer->write(record);
      result.metrics.push_back(m);
      result.steps_completed = step + 1;
      if (log && (step % 10 == 0 || step + 1 == config.steps)) {
        char buf[160];
        std::snprintf(buf, sizeof buf, "step %4llu  reward %.3f  acc %.3f  uv %.4f  p_noi %.3f  clip %.3f\n",
                      static_cast<unsigned long long>(step), m.reward_mean, m.accuracy_reward_mean, m.uv_mean,
                      m.p_noi, m.clip_fraction);
        *log << buf;
      }
      if (config.checkpoint_every > 0 && result.steps_completed % config.checkpoint_every == 0 &&
          result.steps_completed != config.steps) {
        char name[64];
        std::snprintf(name, sizeof name, "ckpt_step%06llu.bin",
                      static_cast<unsigned long long>(result.steps_completed));
        save(name);
      }
    }
  } catch (const NumericError& e) {
    if (writer) writer->flush();
    result.status = "numeric-abort";
    result.error = e.what();
    write_manifest(result.status);
    if (log) *log << "numeric abort after " << result.steps_completed << " steps: " << e.what() << "\n";
    return result;
  }
  if (writer) writer->flush();
  save("ckpt_final.bin");
  result.final_eval = evaluate(config.steps);
  if (persist) write_text(dir / "eval_final.json", report_to_json(*result.final_eval).dump(2) + "\n");
  result.status = "complete";
  write_manifest(result.status);
  return result;
}

#define VOGUE_INSTANTIATE_HARNESS(R)                                                                           \
  template double format_warmup(const PolicyConfig&, PolicyParams<R>&, const RunConfig&, const RngStream&); \
  template RunResult<R> run_training(const RunConfig&, const std::string&, std::ostream*);

VOGUE_INSTANTIATE_HARNESS(float)
VOGUE_INSTANTIATE_HARNESS(double)

}  // namespace vogue
