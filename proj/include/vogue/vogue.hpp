#pragma once

// Dual-branch training step: rollouts on the raw image and on a perturbed
// copy, per-token visual uncertainty of the noisy responses, capped bonuses,
// and a per-response coin flip deciding which branch feeds the update.

#include <memory>
#include <vector>

#include "vogue/augment.hpp"
#include "vogue/grpo.hpp"
#include "vogue/shaping.hpp"

namespace vogue {

// U_t = D(pi_old(.|x, o'_<t), pi_old(.|x', o'_<t)) along the noisy response o'.
template <class Real>
std::vector<double> visual_uncertainty(const PolicyConfig& policy, const PolicyParams<Real>& old,
                                       const Tensor<Real>& raw_embedding, const Tensor<Real>& noisy_embedding,
                                       const Tokens& question, const Tokens& response, Divergence kind);

template <class Real>
std::vector<double> visual_uncertainty(const PolicyConfig& policy, const PolicyParams<Real>& old, const Image& raw,
                                       const Image& noisy, const Tokens& question, const Tokens& response,
                                       Divergence kind, double* sequence_mean = nullptr);

struct BranchPair {
  std::shared_ptr<const Image> raw_image;
  std::shared_ptr<const Image> noisy_image;
  RolloutGroup raw;
  RolloutGroup noisy;
  std::vector<std::vector<double>> uv;  // per noisy response, per token
};

struct ShapedAdvantages {
  std::vector<std::vector<double>> raw;
  std::vector<std::vector<double>> noisy;
  std::vector<std::vector<double>> raw_be;
  std::vector<std::vector<double>> noisy_be;
  std::vector<std::vector<double>> noisy_bv;
};

ShapedAdvantages shape_advantages(const BranchPair& pair, const ShapingConfig& config);

// true selects the noisy triple.
bool select_branch(double p_noi, RngStream& rng);

// Everything before the update: both branches, U_v, shaping and selection.
// metrics carries the rollout-side fields.
struct VogueRollout {
  std::vector<TrainSample> samples;
  StepMetrics metrics;
};

template <class Real>
VogueRollout collect_vogue_rollout(const TrainState<Real>& state, const std::vector<TaskInstance>& batch,
                                   const GrpoConfig& config, const ShapingConfig& shaping, const AugmentSpec& augment,
                                   const RngStream& root, std::uint64_t step);

template <class Real>
StepMetrics vogue_train_step(TrainState<Real>& state, const std::vector<TaskInstance>& batch,
                             const GrpoConfig& config, const ShapingConfig& shaping, const AugmentSpec& augment,
                             const RngStream& root, std::uint64_t step);

}  // namespace vogue
