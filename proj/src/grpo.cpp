#include "vogue/grpo.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <string>

#include "vogue/error.hpp"

namespace vogue {

void validate(const GrpoConfig& c) {
  if (c.rollout_batch_size == 0) throw ConfigError("grpo.rollout_batch_size must be positive");
  if (c.group_size < 2) throw ConfigError("grpo.group_size must be at least 2");
  if (c.epochs == 0) throw ConfigError("grpo.epochs must be positive");
  if (c.snapshot_period == 0) throw ConfigError("grpo.snapshot_period must be positive");
  if (c.max_response_len == 0) throw ConfigError("grpo.max_response_len must be positive");
  if (!(c.clip_eps > 0 && c.clip_eps < 1)) throw ConfigError("grpo.clip_eps must lie in (0,1)");
}

std::vector<double> normalize_advantages(std::span<const double> rewards, bool sample_std) {
  const std::size_t g = rewards.size();
  if (g < 2) throw ContractError("normalize_advantages: group of " + std::to_string(g) + " needs at least 2");
  double mean = 0;
  for (double r : rewards) mean += r;
  mean /= static_cast<double>(g);
  double ss = 0;
  for (double r : rewards) ss += (r - mean) * (r - mean);
  const double sd = std::sqrt(ss / static_cast<double>(sample_std ? g - 1 : g));
  std::vector<double> a(g, 0.0);
  if (sd < 1e-8) return a;
  for (std::size_t i = 0; i < g; ++i) a[i] = (rewards[i] - mean) / sd;
  return a;
}

std::vector<double> token_ratios(std::span<const double> new_lp, std::span<const double> old_lp) {
  if (new_lp.size() != old_lp.size()) {
    throw ShapeError("token_ratios: " + std::to_string(new_lp.size()) + " new vs " + std::to_string(old_lp.size()) +
                     " old log-probs");
  }
  std::vector<double> r(new_lp.size());
  for (std::size_t t = 0; t < r.size(); ++t) {
    r[t] = std::exp(new_lp[t] - old_lp[t]);
    if (!std::isfinite(r[t])) throw NumericError("token_ratios: non-finite ratio at token " + std::to_string(t));
  }
  return r;
}

template <class Real>
ad::Var<Real> token_ratios(ad::Tape<Real>& tape, const ad::Var<Real>& new_lp, std::span<const double> old_lp) {
  if (new_lp.numel() != old_lp.size()) {
    throw ShapeError("token_ratios: " + std::to_string(new_lp.numel()) + " new vs " +
                     std::to_string(old_lp.size()) + " old log-probs");
  }
  Tensor<Real> old(new_lp.shape());
  for (std::size_t t = 0; t < old_lp.size(); ++t) old[t] = static_cast<Real>(old_lp[t]);
  auto ratio = ad::exp(ad::sub(new_lp, tape.constant(std::move(old))));
  const auto& v = ratio.value();
  for (std::size_t t = 0; t < v.numel(); ++t) {
    if (!std::isfinite(v[t])) throw NumericError("token_ratios: non-finite ratio at token " + std::to_string(t));
  }
  return ratio;
}

double clipped_term(double ratio, double advantage, double eps) {
  const double clipped = std::clamp(ratio, 1.0 - eps, 1.0 + eps);
  return std::min(ratio * advantage, clipped * advantage);
}

double clipped_surrogate(std::span<const double> ratios, std::span<const double> advantages, double eps) {
  if (ratios.size() != advantages.size()) throw ShapeError("clipped_surrogate: length mismatch");
  if (ratios.empty()) return 0;
  double s = 0;
  for (std::size_t t = 0; t < ratios.size(); ++t) s += clipped_term(ratios[t], advantages[t], eps);
  return s / static_cast<double>(ratios.size());
}

template <class Real>
RolloutGroup sample_group(const PolicyConfig& policy, const PolicyParams<Real>& params, const Image& image,
                          const TaskInstance& instance, const GrpoConfig& config, const RngStream& stream) {
  const auto emb = encode_image(policy, params, image);
  RolloutGroup g;
  std::vector<double> rewards;
  for (std::size_t j = 0; j < config.group_size; ++j) {
    RngStream rng = stream.derive("member", j);
    Response r = sample_response(policy, params, emb, instance.question, config.max_response_len, policy.temperature, rng);
    r.reward = verify(r.tokens, instance);
    rewards.push_back(r.reward.total);
    g.responses.push_back(std::move(r));
  }
  g.advantages = normalize_advantages(rewards, config.sample_std);
  return g;
}

template <class Real>
ad::Var<Real> surrogate_objective(ad::Tape<Real>& tape, const ParamVars<Real>& vars, const PolicyConfig& policy,
                                  std::span<const TrainSample* const> samples, double clip_eps, double total_tokens,
                                  SurrogateStats* stats) {
  if (!(total_tokens > 0)) throw ContractError("surrogate_objective: no tokens");
  std::map<const Image*, ad::Var<Real>> encoded;
  ad::Var<Real> total;
  bool have_total = false;
  double constant = 0;
  for (const TrainSample* s : samples) {
    const auto& r = s->response;
    if (r.tokens.empty()) continue;
    if (s->advantages.size() != r.tokens.size() || r.log_probs.size() != r.tokens.size()) {
      throw ShapeError("surrogate_objective: sample arrays disagree in length");
    }
    auto it = encoded.find(s->image.get());
    if (it == encoded.end()) it = encoded.emplace(s->image.get(), encode_image(tape, vars, policy, *s->image)).first;
    Tokens seq = s->question;
    seq.insert(seq.end(), r.tokens.begin(), r.tokens.end());
    auto logp = sequence_log_probs(tape, vars, policy, it->second, seq, s->question.size(), policy.temperature);
    auto ratio = token_ratios(tape, logp, r.log_probs);

    // Tokens whose clip branch is active contribute a constant and no gradient.
    Tensor<Real> weight(ratio.shape());
    for (std::size_t t = 0; t < r.tokens.size(); ++t) {
      const double rho = static_cast<double>(ratio.value()[t]);
      const double a = s->advantages[t];
      const bool frozen = (a > 0 && rho > 1 + clip_eps) || (a < 0 && rho < 1 - clip_eps);
      if (frozen) {
        constant += std::clamp(rho, 1 - clip_eps, 1 + clip_eps) * a;
      } else {
        weight[t] = static_cast<Real>(a);
      }
      if (stats) {
        stats->objective += clipped_term(rho, a, clip_eps);
        stats->clip_fraction += std::abs(rho - 1) > clip_eps ? 1.0 : 0.0;
        stats->mean_ratio += rho;
        stats->tokens += 1;
      }
    }
    auto term = ad::sum(ad::mul(ratio, tape.constant(std::move(weight))));
    total = have_total ? ad::add(total, term) : term;
    have_total = true;
  }
  if (!have_total) return tape.constant(Tensor<Real>::scalar(Real(0)));
  total = ad::add(total, tape.constant(Tensor<Real>::scalar(static_cast<Real>(constant))));
  return ad::scale(total, 1.0 / total_tokens);
}

template <class Real>
TrainState<Real> make_train_state(const PolicyConfig& policy, PolicyParams<Real> params, const AdamWConfig& optim) {
  TrainState<Real> s;
  s.policy = policy;
  s.params = std::move(params);
  s.old = snapshot(s.params);
  s.optim = optim;
  return s;
}

template <class Real>
SurrogateStats policy_update(TrainState<Real>& state, std::span<const TrainSample> samples, const GrpoConfig& config) {
  SurrogateStats stats;
  if (samples.empty()) return stats;
  const PolicyParams<Real> saved_params = snapshot(state.params);
  const AdamWState<Real> saved_adam = state.adam;
  auto rollback = [&] {
    state.params = snapshot(saved_params);
    state.adam = saved_adam;
  };
  const std::size_t mb = config.minibatch_size == 0 ? samples.size() : config.minibatch_size;
  try {
    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
      for (std::size_t begin = 0; begin < samples.size(); begin += mb) {
        const std::size_t end = std::min(samples.size(), begin + mb);
        double tokens = 0;
        for (std::size_t i = begin; i < end; ++i) tokens += static_cast<double>(samples[i].response.length());
        if (tokens == 0) continue;
        for (auto& [name, p] : state.params) p.clear_grad();
        for (std::size_t i = begin; i < end; ++i) {
          ad::Tape<Real> tape;
          auto vars = bind_parameters(tape, state.params);
          const TrainSample* one[] = {&samples[i]};
          auto objective = surrogate_objective(tape, vars, state.policy, std::span<const TrainSample* const>(one),
                                               config.clip_eps, tokens, epoch == 0 ? &stats : nullptr);
          // Ascent on the objective.
          tape.backward(ad::scale(objective, -1.0));
        }
        for (const auto& [name, p] : state.params) {
          for (Real g : p.grad()) {
            if (!std::isfinite(g)) throw NumericError("policy_update: non-finite gradient in '" + name + "'");
          }
        }
        adamw_step(state.params, state.adam, state.optim);
        for (const auto& [name, p] : state.params) {
          if (!p.all_finite()) throw NumericError("policy_update: update made '" + name + "' non-finite");
        }
      }
    }
  } catch (const NumericError&) {
    rollback();
    throw;
  }
  for (auto& [name, p] : state.params) p.clear_grad();
  if (stats.tokens) {
    const double n = static_cast<double>(stats.tokens);
    stats.objective /= n;
    stats.clip_fraction /= n;
    stats.mean_ratio /= n;
  }
  return stats;
}

void selected_token_means(std::span<const TrainSample> samples, double& entropy_mean, double& be_mean) {
  double h = 0, be = 0, n = 0;
  for (const auto& s : samples) {
    for (std::size_t t = 0; t < s.response.length(); ++t) {
      h += s.response.entropies[t];
      be += s.bonus_e.empty() ? 0.0 : s.bonus_e[t];
      n += 1;
    }
  }
  entropy_mean = n > 0 ? h / n : 0.0;
  be_mean = n > 0 ? be / n : 0.0;
}

void RewardSums::add(const RolloutGroup& group) {
  for (const auto& r : group.responses) {
    total += r.reward.total;
    accuracy += r.reward.accuracy;
    format += r.reward.format;
    length += static_cast<double>(r.length());
    count += 1;
  }
}

template <class Real>
void maybe_refresh_snapshot(TrainState<Real>& state, const GrpoConfig& config, std::uint64_t step) {
  if ((step + 1) % config.snapshot_period == 0) state.old = snapshot(state.params);
}

template <class Real>
StepMetrics grpo_train_step(TrainState<Real>& state, const std::vector<TaskInstance>& batch, const GrpoConfig& config,
                            const ShapingConfig& shaping, const RngStream& root, std::uint64_t step) {
  StepMetrics m;
  m.step = step;
  const RngStream raw_stream = root.derive("rollout.raw", step);
  RewardSums raw;
  std::vector<TrainSample> samples;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const TaskInstance& inst = batch[i];
    auto image = std::make_shared<const Image>(inst.image);
    RolloutGroup group = sample_group(state.policy, state.old, *image, inst, config, raw_stream.derive("input", i));
    raw.add(group);
    for (std::size_t j = 0; j < group.responses.size(); ++j) {
      TrainSample s;
      s.image = image;
      s.question = inst.question;
      s.response = std::move(group.responses[j]);
      const double a = group.advantages[j];
      for (double h : s.response.entropies) {
        const double be = config.entropy_bonus ? entropy_bonus(a, h, shaping.alpha_e, shaping.beta_e) : 0.0;
        s.bonus_e.push_back(be);
        s.advantages.push_back(a + be);
      }
      samples.push_back(std::move(s));
    }
  }
  const SurrogateStats stats = policy_update(state, std::span<const TrainSample>(samples), config);
  maybe_refresh_snapshot(state, config, step);

  m.reward_mean = raw.mean(raw.total);
  m.accuracy_reward_mean = raw.mean(raw.accuracy);
  m.format_reward_mean = raw.mean(raw.format);
  m.response_len_mean = raw.mean(raw.length);
  selected_token_means(samples, m.entropy_mean, m.be_mean);
  m.clip_fraction = stats.clip_fraction;
  m.objective = stats.objective;
  m.mean_ratio = stats.mean_ratio;
  return m;
}

#define VOGUE_INSTANTIATE_GRPO(R)                                                                                 \
  template ad::Var<R> token_ratios(ad::Tape<R>&, const ad::Var<R>&, std::span<const double>);                     \
  template RolloutGroup sample_group(const PolicyConfig&, const PolicyParams<R>&, const Image&, const TaskInstance&, \
                                     const GrpoConfig&, const RngStream&);                                        \
  template ad::Var<R> surrogate_objective(ad::Tape<R>&, const ParamVars<R>&, const PolicyConfig&,                 \
                                          std::span<const TrainSample* const>, double, double, SurrogateStats*);  \
  template TrainState<R> make_train_state(const PolicyConfig&, PolicyParams<R>, const AdamWConfig&);              \
  template SurrogateStats policy_update(TrainState<R>&, std::span<const TrainSample>, const GrpoConfig&);         \
  template void maybe_refresh_snapshot(TrainState<R>&, const GrpoConfig&, std::uint64_t);                         \
  template StepMetrics grpo_train_step(TrainState<R>&, const std::vector<TaskInstance>&, const GrpoConfig&,       \
                                       const ShapingConfig&, const RngStream&, std::uint64_t);

VOGUE_INSTANTIATE_GRPO(float)
VOGUE_INSTANTIATE_GRPO(double)

#undef VOGUE_INSTANTIATE_GRPO

}  // namespace vogue
