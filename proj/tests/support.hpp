#pragma once

// Shared fixtures for the unit tests and the acceptance binary.

#include <vector>

#include "vogue/autodiff.hpp"
#include "vogue/env.hpp"
#include "vogue/image.hpp"
#include "vogue/policy.hpp"
#include "vogue/rng.hpp"

namespace vt {

using vogue::Image;
using vogue::Primitive;
using vogue::RngStream;
using vogue::Shape;
using T64 = vogue::Tensor<double>;

T64 random_tensor(const Shape& shape, RngStream& rng, double lo = -1.0, double hi = 1.0);

// One randomized finite-difference check of a primitive (random shapes and
// operands, loss = sum(out * W) for a random constant W). Returns the
// relative error reported by check_gradients.
double primitive_case(Primitive kind, RngStream& rng);

Image random_image(const vogue::PolicyConfig& cfg, RngStream& rng);

// Init, then every tensor (the zero output projection included) jittered so
// all gradients are nonzero.
vogue::PolicyParams<double> randomized_params(const vogue::PolicyConfig& cfg, RngStream rng, double spread = 0.3);

// Finite-difference check of the full sequence NLL on a random image and a
// random question + response; max_coords bounds the probed coordinates.
double policy_nll_case(const vogue::PolicyConfig& cfg, RngStream& rng, std::size_t response_len,
                       std::size_t max_coords);

// A config with under 1k parameters for whole-step checks.
vogue::PolicyConfig tiny_policy();

// tiny_policy params after a short format warmup on one family (4 px images,
// responses of at most 6 tokens), so sampled groups have varied rewards.
vogue::PolicyParams<double> warmed_tiny_params(vogue::Family family, std::uint64_t seed);

}  // namespace vt

#include "vogue/env.hpp"

namespace vt {

// The answer recomputed from the image after applying transform t (parsed
// back into a scene). Gaussian noise is checked at scene level: it moves no
// cell and changes no color class, so the scene is the original one.
vogue::Tokens relabel(const vogue::TaskInstance& inst, vogue::Transform t, RngStream& rng);

}  // namespace vt
