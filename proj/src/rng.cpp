#include "vogue/rng.hpp"

#include <cmath>
#include <numbers>

#include "vogue/error.hpp"

namespace vogue {

namespace {
constexpr std::uint64_t kGamma = 0x9E3779B97F4A7C15ULL;
}

std::uint64_t splitmix64_mix(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t basis) {
  std::uint64_t h = basis;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

RngStream::RngStream(std::uint64_t seed) : seed_(seed), key_(splitmix64_mix(seed + kGamma)) {}

RngStream RngStream::derive(std::string_view label) const {
  if (label.empty()) throw ContractError("rng: derive needs a non-empty label");
  RngStream child = *this;
  child.counter_ = 0;
  child.key_ = splitmix64_mix(splitmix64_mix(key_ ^ fnv1a64(label)) + kGamma);
  child.path_.emplace_back(label);
  return child;
}

RngStream RngStream::derive(std::string_view label, std::uint64_t index) const {
  std::string full(label);
  full += '/';
  full += std::to_string(index);
  return derive(full);
}

std::uint64_t RngStream::next_u64() {
  ++counter_;
  return splitmix64_mix(key_ + counter_ * kGamma);
}

double RngStream::uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

std::size_t RngStream::uniform_index(std::size_t n) {
  if (n == 0) throw ContractError("rng: uniform_index over an empty range");
  const auto i = static_cast<std::size_t>(uniform01() * static_cast<double>(n));
  return i < n ? i : n - 1;
}

double RngStream::uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

double RngStream::standard_normal() {
  const double u1 = 1.0 - uniform01();  // (0, 1]
  const double u2 = uniform01();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

bool RngStream::bernoulli(double p) {
  if (!(p >= 0.0 && p <= 1.0)) throw ContractError("rng: bernoulli p must lie in [0,1]");
  return uniform01() < p;
}

std::size_t RngStream::categorical(std::span<const double> weights) {
  if (weights.empty()) throw ContractError("rng: categorical over no weights");
  double total = 0;
  for (double w : weights) {
    if (!(w >= 0) || !std::isfinite(w)) throw ContractError("rng: categorical weights must be finite and >= 0");
    total += w;
  }
  if (!(total > 0)) throw ContractError("rng: categorical weights sum to zero");
  const double r = uniform01() * total;
  double cum = 0;
  std::size_t last_positive = 0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (weights[i] <= 0) continue;
    cum += weights[i];
    last_positive = i;
    if (r < cum) return i;
  }
  return last_positive;  // r landed on total through rounding
}

std::string RngStream::path_string() const {
  std::string s;
  for (const auto& p : path_) {
    if (!s.empty()) s += '.';
    s += p;
  }
  return s;
}

}  // namespace vogue
