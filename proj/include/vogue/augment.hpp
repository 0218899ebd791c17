#pragma once

// Image perturbation T: hflip -> vflip -> rotation -> color jitter -> noise,
// then clamp to [0,1]. Every stage draws its random numbers whether or not it
// fires, so two specs that differ in one knob see the same underlying draws.

#include <array>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "vogue/env.hpp"
#include "vogue/image.hpp"
#include "vogue/rng.hpp"

namespace vogue {

struct AugmentSpec {
  double p_hflip = 0.5;
  double p_vflip = 0.5;
  double p_rotate = 0.5;
  std::vector<int> rotations{90, 180, 270};
  double jitter = 0.08;  // per-channel shift drawn from U(-jitter, jitter)
  double sigma = 0.4;

  bool operator==(const AugmentSpec&) const = default;
};

inline constexpr std::string_view kAugmentOrder = "hflip>vflip>rotate>jitter>noise";

void validate(const AugmentSpec& spec);
// Spec with every stage switched off.
AugmentSpec identity_spec();

struct AugmentTrace {
  std::vector<Transform> applied;
  Color jitter_shift{};
};

// jitter_bound: the consuming instance's bound; jitter >= bound is refused
// when color-jitter is among the safe transforms.
Image perturb(const Image& image, const AugmentSpec& spec, std::span<const Transform> safe, RngStream& rng,
              AugmentTrace* trace = nullptr, double jitter_bound = 1.0);

Image perturb(const TaskInstance& instance, const AugmentSpec& spec, RngStream& rng, AugmentTrace* trace = nullptr);

// Deterministic geometric maps, shared with the semantics tests.
Image apply_geometric(const Image& image, Transform t);

std::string describe(const AugmentSpec& spec);
AugmentSpec parse_augment_spec(std::string_view text);

}  // namespace vogue
