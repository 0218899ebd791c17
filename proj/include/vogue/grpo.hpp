#pragma once

// Group rollouts, group-normalized advantages and the clipped token-level
// surrogate, plus the training state and update shared by both algorithms.

#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include "vogue/adamw.hpp"
#include "vogue/env.hpp"
#include "vogue/policy.hpp"
#include "vogue/rng.hpp"
#include "vogue/shaping.hpp"

namespace vogue {

struct GrpoConfig {
  std::size_t rollout_batch_size = 16;  // inputs per step
  std::size_t group_size = 8;           // responses per input
  std::size_t minibatch_size = 0;       // selected responses per update; 0 = all
  std::size_t epochs = 1;
  std::size_t snapshot_period = 1;      // steps between old-policy refreshes
  std::size_t max_response_len = 12;
  double clip_eps = 0.2;
  bool sample_std = false;
  bool entropy_bonus = false;
};

void validate(const GrpoConfig& config);

// (r - mean) / std over the group; all zeros when std < 1e-8.
std::vector<double> normalize_advantages(std::span<const double> rewards, bool sample_std = false);

// exp(new - old) per token.
std::vector<double> token_ratios(std::span<const double> new_log_probs, std::span<const double> old_log_probs);

template <class Real>
ad::Var<Real> token_ratios(ad::Tape<Real>& tape, const ad::Var<Real>& new_log_probs,
                           std::span<const double> old_log_probs);

// Per-token min(rho*A, clip(rho, 1-eps, 1+eps)*A).
double clipped_term(double ratio, double advantage, double eps);
// Mean of clipped_term over tokens.
double clipped_surrogate(std::span<const double> ratios, std::span<const double> advantages, double eps);

struct SurrogateStats {
  double objective = 0;
  double clip_fraction = 0;
  double mean_ratio = 0;
  std::size_t tokens = 0;
};

struct RolloutGroup {
  std::vector<Response> responses;
  std::vector<double> advantages;
};

template <class Real>
RolloutGroup sample_group(const PolicyConfig& policy, const PolicyParams<Real>& params, const Image& image,
                          const TaskInstance& instance, const GrpoConfig& config, const RngStream& stream);

// One response chosen for the update, with per-token shaped advantages.
struct TrainSample {
  std::shared_ptr<const Image> image;
  Tokens question;
  Response response;
  std::vector<double> advantages;
  // Logged bonus components per token (bonus_v empty on the raw branch).
  std::vector<double> bonus_e;
  std::vector<double> bonus_v;
  bool noisy = false;
};

// Surrogate over `samples` recorded on one tape, divided by total_tokens (the
// token count of the whole update, so per-group tapes sum to the batch mean).
// `stats` receives value-side sums: objective, clipped count, ratio sum.
template <class Real>
ad::Var<Real> surrogate_objective(ad::Tape<Real>& tape, const ParamVars<Real>& vars, const PolicyConfig& policy,
                                  std::span<const TrainSample* const> samples, double clip_eps, double total_tokens,
                                  SurrogateStats* stats = nullptr);

template <class Real>
struct TrainState {
  PolicyConfig policy;
  PolicyParams<Real> params;
  PolicyParams<Real> old;  // rollout policy
  AdamWState<Real> adam;
  AdamWConfig optim;
};

template <class Real>
TrainState<Real> make_train_state(const PolicyConfig& policy, PolicyParams<Real> params, const AdamWConfig& optim);

// Gradient ascent on the surrogate over the selected samples (minibatches x
// epochs). On a numeric failure params and optimizer state are restored.
template <class Real>
SurrogateStats policy_update(TrainState<Real>& state, std::span<const TrainSample> samples, const GrpoConfig& config);

// Token-weighted entropy and B_e means over the selected samples.
void selected_token_means(std::span<const TrainSample> samples, double& entropy_mean, double& be_mean);

// Per-step record; fields a given algorithm does not produce stay 0.
struct StepMetrics {
  std::uint64_t step = 0;
  double reward_mean = 0;
  double accuracy_reward_mean = 0;
  double format_reward_mean = 0;
  double noisy_reward_mean = 0;
  double noisy_accuracy_reward_mean = 0;
  double uv_mean = 0;
  double entropy_mean = 0;
  double bv_mean = 0;
  double be_mean = 0;
  double p_noi = 0;
  double noisy_fraction = 0;
  double clip_fraction = 0;
  double objective = 0;
  double mean_ratio = 0;
  double response_len_mean = 0;
};

// Running reward means over one branch's responses.
struct RewardSums {
  double total = 0, accuracy = 0, format = 0, length = 0;
  std::size_t count = 0;

  void add(const RolloutGroup& group);
  double mean(double sum) const { return count ? sum / static_cast<double>(count) : 0.0; }
};

// Refreshes state.old when the step closes a snapshot period.
template <class Real>
void maybe_refresh_snapshot(TrainState<Real>& state, const GrpoConfig& config, std::uint64_t step);

template <class Real>
StepMetrics grpo_train_step(TrainState<Real>& state, const std::vector<TaskInstance>& batch,
                            const GrpoConfig& config, const ShapingConfig& shaping, const RngStream& root,
                            std::uint64_t step);

}  // namespace vogue
