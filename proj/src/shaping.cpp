#include "vogue/shaping.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "vogue/error.hpp"

namespace vogue {

std::string_view divergence_name(Divergence d) {
  return d == Divergence::symmetric_kl ? "symmetric-kl" : "forward-kl";
}

Divergence parse_divergence(std::string_view name) {
  if (name == "symmetric-kl") return Divergence::symmetric_kl;
  if (name == "forward-kl") return Divergence::forward_kl;
  throw ConfigError("unknown divergence '" + std::string(name) + "' (valid: symmetric-kl, forward-kl)");
}

std::string_view granularity_name(Granularity g) {
  return g == Granularity::per_token ? "per-token" : "sequence-mean";
}

Granularity parse_granularity(std::string_view name) {
  if (name == "per-token") return Granularity::per_token;
  if (name == "sequence-mean") return Granularity::sequence_mean;
  throw ConfigError("unknown granularity '" + std::string(name) + "' (valid: per-token, sequence-mean)");
}

void validate(const ShapingConfig& c) {
  if (!(c.alpha_v >= 0) || !(c.alpha_e >= 0)) throw ConfigError("vogue.alpha_v / vogue.alpha_e must be >= 0");
  if (!(c.beta_v > 0)) throw ConfigError("vogue.beta_v must be positive");
  if (!(c.beta_e > 0)) throw ConfigError("vogue.beta_e must be positive");
  if (!(c.p_start >= 0 && c.p_start <= 1)) throw ConfigError("vogue.p_start must lie in [0,1]");
  if (!(c.p_end >= 0 && c.p_end <= 1)) throw ConfigError("vogue.p_end must lie in [0,1]");
  if (c.total_steps == 0) throw ConfigError("steps must be positive");
}

double forward_kl(const TokenDist& p, const TokenDist& q) {
  if (p.probs.size() != q.probs.size()) throw ShapeError("kl: distributions over different vocabularies");
  double kl = 0;
  for (std::size_t i = 0; i < p.probs.size(); ++i) kl += p.probs[i] * (p.log_probs[i] - q.log_probs[i]);
  return std::max(kl, 0.0);
}

double symmetric_kl(const TokenDist& p, const TokenDist& q) {
  if (p.probs.size() != q.probs.size()) throw ShapeError("kl: distributions over different vocabularies");
  // Summed as one expression so swapping P and Q gives the same bits.
  double s = 0;
  for (std::size_t i = 0; i < p.probs.size(); ++i) s += (p.probs[i] - q.probs[i]) * (p.log_probs[i] - q.log_probs[i]);
  return std::max(0.5 * s, 0.0);
}

double divergence(Divergence kind, const TokenDist& p, const TokenDist& q) {
  return kind == Divergence::symmetric_kl ? symmetric_kl(p, q) : forward_kl(p, q);
}

double uncertainty_bonus(double advantage, double uv, double alpha_v, double beta_v) {
  if (!(beta_v > 0)) throw ContractError("uncertainty_bonus: beta_v must be positive");
  return std::min(std::abs(advantage) / beta_v, alpha_v * uv);
}

double entropy_bonus(double advantage, double entropy, double alpha_e, double beta_e) {
  if (!(beta_e > 0)) throw ContractError("entropy_bonus: beta_e must be positive");
  return std::min(std::abs(advantage) / beta_e, alpha_e * entropy);
}

double anneal_p(std::uint64_t step, std::uint64_t total_steps, double p_start, double p_end) {
  if (total_steps == 0) throw ContractError("anneal_p: total_steps must be positive");
  const double frac = static_cast<double>(step) / static_cast<double>(total_steps);
  return p_end + (p_start - p_end) * std::max(0.0, 1.0 - frac);
}

}  // namespace vogue
