#pragma once

// Counter-based splittable random streams. A stream is a 64-bit key plus a
// draw counter; a child's key is a hash of the parent key and the child label,
// so deriving never touches the parent and siblings never share state.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace vogue {

class RngStream {
 public:
  static constexpr std::string_view mixer_name = "splitmix64";

  explicit RngStream(std::uint64_t seed = 0);

  RngStream derive(std::string_view label) const;
  // Shorthand for derive(label + "/" + index), used for per-step / per-item streams.
  RngStream derive(std::string_view label, std::uint64_t index) const;

  std::uint64_t next_u64();
  // 53-bit resolution in [0, 1).
  double uniform01();
  // Uniform over {0, .., n-1}; n > 0.
  std::size_t uniform_index(std::size_t n);
  double uniform(double lo, double hi);
  // Box-Muller on two fresh uniforms; no cached second value.
  double standard_normal();
  bool bernoulli(double p);
  // Inverse CDF over the normalized weights; ties resolve toward the lower index.
  std::size_t categorical(std::span<const double> weights);

  std::uint64_t seed() const { return seed_; }
  const std::vector<std::string>& path() const { return path_; }
  std::string path_string() const;
  std::uint64_t counter() const { return counter_; }

 private:
  std::uint64_t seed_ = 0;
  std::uint64_t key_ = 0;
  std::uint64_t counter_ = 0;
  std::vector<std::string> path_;
};

std::uint64_t splitmix64_mix(std::uint64_t z);
std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t basis = 0xcbf29ce484222325ULL);

}  // namespace vogue
