#pragma once

// Scalar pieces of the exploration scheme: divergences between token
// distributions, the two capped advantage bonuses, and the branch schedule.

#include <cstdint>
#include <string_view>

#include "vogue/policy.hpp"

namespace vogue {

enum class Divergence { symmetric_kl, forward_kl };
enum class Granularity { per_token, sequence_mean };

std::string_view divergence_name(Divergence d);
Divergence parse_divergence(std::string_view name);
std::string_view granularity_name(Granularity g);
Granularity parse_granularity(std::string_view name);

struct ShapingConfig {
  double alpha_v = 1.0;
  double beta_v = 2.0;
  double alpha_e = 0.4;
  double beta_e = 2.0;
  double p_start = 1.0;
  double p_end = 0.0;
  std::uint64_t total_steps = 200;
  Divergence divergence = Divergence::symmetric_kl;
  Granularity granularity = Granularity::per_token;
  bool enable_uv = true;
  bool enable_entropy = true;
  // Skip noisy-branch sampling entirely while p_noi is 0.
  bool lazy_noisy = true;
};

void validate(const ShapingConfig& config);

// KL(P || Q) in nats.
double forward_kl(const TokenDist& p, const TokenDist& q);
// (KL(P||Q) + KL(Q||P)) / 2
double symmetric_kl(const TokenDist& p, const TokenDist& q);
double divergence(Divergence kind, const TokenDist& p, const TokenDist& q);

// min(|A| / beta_v, alpha_v * U); U is a detached number.
double uncertainty_bonus(double advantage, double uv, double alpha_v, double beta_v);
// min(|A| / beta_e, alpha_e * H)
double entropy_bonus(double advantage, double entropy, double alpha_e, double beta_e);

// p_end + (p_start - p_end) * max(0, 1 - s / S_total); s counts from 0.
double anneal_p(std::uint64_t step, std::uint64_t total_steps, double p_start, double p_end);

}  // namespace vogue
