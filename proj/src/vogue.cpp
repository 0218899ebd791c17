#include "vogue/vogue.hpp"

#include <string>

#include "vogue/error.hpp"

namespace vogue {

template <class Real>
std::vector<double> visual_uncertainty(const PolicyConfig& policy, const PolicyParams<Real>& old,
                                       const Tensor<Real>& raw_embedding, const Tensor<Real>& noisy_embedding,
                                       const Tokens& question, const Tokens& response, Divergence kind) {
  if (response.empty()) return {};
  Tokens seq = question;
  seq.insert(seq.end(), response.begin(), response.end());
  const auto p = next_token_dists(policy, old, raw_embedding, seq, question.size(), policy.temperature);
  const auto q = next_token_dists(policy, old, noisy_embedding, seq, question.size(), policy.temperature);
  std::vector<double> u(p.size());
  for (std::size_t t = 0; t < p.size(); ++t) u[t] = divergence(kind, p[t], q[t]);
  return u;
}

template <class Real>
std::vector<double> visual_uncertainty(const PolicyConfig& policy, const PolicyParams<Real>& old, const Image& raw,
                                       const Image& noisy, const Tokens& question, const Tokens& response,
                                       Divergence kind, double* sequence_mean) {
  auto u = visual_uncertainty(policy, old, encode_image(policy, old, raw), encode_image(policy, old, noisy), question,
                              response, kind);
  if (sequence_mean) {
    double s = 0;
    for (double v : u) s += v;
    *sequence_mean = u.empty() ? 0.0 : s / static_cast<double>(u.size());
  }
  return u;
}

ShapedAdvantages shape_advantages(const BranchPair& pair, const ShapingConfig& c) {
  ShapedAdvantages out;
  const auto& raw = pair.raw;
  for (std::size_t i = 0; i < raw.responses.size(); ++i) {
    const double a = raw.advantages.at(i);
    std::vector<double> adv, be;
    for (double h : raw.responses[i].entropies) {
      const double b = c.enable_entropy ? entropy_bonus(a, h, c.alpha_e, c.beta_e) : 0.0;
      be.push_back(b);
      adv.push_back(a + b);
    }
    out.raw.push_back(std::move(adv));
    out.raw_be.push_back(std::move(be));
  }
  const auto& noisy = pair.noisy;
  if (pair.uv.size() != noisy.responses.size()) {
    throw ShapeError("shape_advantages: " + std::to_string(pair.uv.size()) + " uncertainty arrays for " +
                     std::to_string(noisy.responses.size()) + " noisy responses");
  }
  for (std::size_t i = 0; i < noisy.responses.size(); ++i) {
    const auto& r = noisy.responses[i];
    const auto& uv = pair.uv[i];
    if (uv.size() != r.length()) throw ShapeError("shape_advantages: uncertainty length differs from response");
    double uv_mean = 0;
    for (double u : uv) uv_mean += u;
    if (!uv.empty()) uv_mean /= static_cast<double>(uv.size());
    const double a = noisy.advantages.at(i);
    std::vector<double> adv, be, bv;
    for (std::size_t t = 0; t < r.length(); ++t) {
      const double e = c.enable_entropy ? entropy_bonus(a, r.entropies[t], c.alpha_e, c.beta_e) : 0.0;
      const double u = c.granularity == Granularity::per_token ? uv[t] : uv_mean;
      const double v = c.enable_uv ? uncertainty_bonus(a, u, c.alpha_v, c.beta_v) : 0.0;
      be.push_back(e);
      bv.push_back(v);
      adv.push_back(a + e + v);
    }
    out.noisy.push_back(std::move(adv));
    out.noisy_be.push_back(std::move(be));
    out.noisy_bv.push_back(std::move(bv));
  }
  return out;
}

bool select_branch(double p_noi, RngStream& rng) { return rng.bernoulli(p_noi); }

template <class Real>
VogueRollout collect_vogue_rollout(const TrainState<Real>& state, const std::vector<TaskInstance>& batch,
                                   const GrpoConfig& config, const ShapingConfig& shaping, const AugmentSpec& augment,
                                   const RngStream& root, std::uint64_t step) {
  VogueRollout out;
  StepMetrics& m = out.metrics;
  std::vector<TrainSample>& samples = out.samples;
  m.step = step;
  m.p_noi = anneal_p(step, shaping.total_steps, shaping.p_start, shaping.p_end);
  const bool draw_noisy = !shaping.lazy_noisy || m.p_noi > 0;
  const RngStream raw_stream = root.derive("rollout.raw", step);
  const RngStream noisy_stream = root.derive("rollout.noisy", step);
  const RngStream aug_stream = root.derive("aug", step);
  const RngStream select_stream = root.derive("select", step);

  RewardSums raw_sums, noisy_sums;
  double uv_sum = 0, bv_sum = 0, noisy_tokens = 0;
  std::size_t noisy_selected = 0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const TaskInstance& inst = batch[i];
    BranchPair pair;
    pair.raw_image = std::make_shared<const Image>(inst.image);
    pair.raw = sample_group(state.policy, state.old, *pair.raw_image, inst, config, raw_stream.derive("input", i));
    raw_sums.add(pair.raw);
    if (draw_noisy) {
      RngStream aug_rng = aug_stream.derive("input", i);
      pair.noisy_image = std::make_shared<const Image>(perturb(inst, augment, aug_rng));
      // Verified against the original answer: the perturbation keeps it.
      pair.noisy = sample_group(state.policy, state.old, *pair.noisy_image, inst, config, noisy_stream.derive("input", i));
      noisy_sums.add(pair.noisy);
      const auto raw_emb = encode_image(state.policy, state.old, *pair.raw_image);
      const auto noisy_emb = encode_image(state.policy, state.old, *pair.noisy_image);
      for (const auto& r : pair.noisy.responses) {
        pair.uv.push_back(visual_uncertainty(state.policy, state.old, raw_emb, noisy_emb, inst.question, r.tokens,
                                             shaping.divergence));
      }
    }
    ShapedAdvantages shaped = shape_advantages(pair, shaping);
    for (std::size_t j = 0; j < pair.noisy.responses.size(); ++j) {
      for (std::size_t t = 0; t < pair.uv[j].size(); ++t) {
        uv_sum += pair.uv[j][t];
        bv_sum += shaped.noisy_bv[j][t];
        noisy_tokens += 1;
      }
    }
    RngStream select_rng = select_stream.derive("input", i);
    for (std::size_t j = 0; j < pair.raw.responses.size(); ++j) {
      const bool noisy = draw_noisy && select_branch(m.p_noi, select_rng);
      TrainSample s;
      s.question = inst.question;
      s.noisy = noisy;
      if (noisy) {
        s.image = pair.noisy_image;
        s.response = std::move(pair.noisy.responses[j]);
        s.advantages = std::move(shaped.noisy[j]);
        s.bonus_e = std::move(shaped.noisy_be[j]);
        s.bonus_v = std::move(shaped.noisy_bv[j]);
        noisy_selected += 1;
      } else {
        s.image = pair.raw_image;
        s.response = std::move(pair.raw.responses[j]);
        s.advantages = std::move(shaped.raw[j]);
        s.bonus_e = std::move(shaped.raw_be[j]);
      }
      samples.push_back(std::move(s));
    }
  }
  m.reward_mean = raw_sums.mean(raw_sums.total);
  m.accuracy_reward_mean = raw_sums.mean(raw_sums.accuracy);
  m.format_reward_mean = raw_sums.mean(raw_sums.format);
  m.response_len_mean = raw_sums.mean(raw_sums.length);
  m.noisy_reward_mean = noisy_sums.mean(noisy_sums.total);
  m.noisy_accuracy_reward_mean = noisy_sums.mean(noisy_sums.accuracy);
  m.uv_mean = noisy_tokens > 0 ? uv_sum / noisy_tokens : 0.0;
  m.bv_mean = noisy_tokens > 0 ? bv_sum / noisy_tokens : 0.0;
  m.noisy_fraction = samples.empty() ? 0.0 : static_cast<double>(noisy_selected) / static_cast<double>(samples.size());
  selected_token_means(samples, m.entropy_mean, m.be_mean);
  return out;
}

template <class Real>
StepMetrics vogue_train_step(TrainState<Real>& state, const std::vector<TaskInstance>& batch, const GrpoConfig& config,
                             const ShapingConfig& shaping, const AugmentSpec& augment, const RngStream& root,
                             std::uint64_t step) {
  VogueRollout rollout = collect_vogue_rollout(state, batch, config, shaping, augment, root, step);
  const SurrogateStats stats = policy_update(state, std::span<const TrainSample>(rollout.samples), config);
  maybe_refresh_snapshot(state, config, step);
  StepMetrics m = rollout.metrics;
  m.clip_fraction = stats.clip_fraction;
  m.objective = stats.objective;
  m.mean_ratio = stats.mean_ratio;
  return m;
}

#define VOGUE_INSTANTIATE_VOGUE(R)                                                                                  \
  template std::vector<double> visual_uncertainty(const PolicyConfig&, const PolicyParams<R>&, const Tensor<R>&,    \
                                                  const Tensor<R>&, const Tokens&, const Tokens&, Divergence);      \
  template std::vector<double> visual_uncertainty(const PolicyConfig&, const PolicyParams<R>&, const Image&,        \
                                                  const Image&, const Tokens&, const Tokens&, Divergence, double*); \
  template VogueRollout collect_vogue_rollout(const TrainState<R>&, const std::vector<TaskInstance>&,                \
                                             const GrpoConfig&, const ShapingConfig&, const AugmentSpec&,             \
                                             const RngStream&, std::uint64_t);                                        \
  template StepMetrics vogue_train_step(TrainState<R>&, const std::vector<TaskInstance>&, const GrpoConfig&,        \
                                        const ShapingConfig&, const AugmentSpec&, const RngStream&, std::uint64_t);

VOGUE_INSTANTIATE_VOGUE(float)
VOGUE_INSTANTIATE_VOGUE(double)

#undef VOGUE_INSTANTIATE_VOGUE

}  // namespace vogue
