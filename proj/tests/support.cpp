#include "support.hpp"

#include <cmath>

#include "vogue/augment.hpp"
#include "vogue/harness.hpp"
#include "vogue/vocab.hpp"

namespace vt {

using namespace vogue;
using Tape = ad::Tape<double>;
using V = ad::Var<double>;

T64 random_tensor(const Shape& shape, RngStream& rng, double lo, double hi) {
  T64 t(shape);
  for (auto& x : t.data()) x = rng.uniform(lo, hi);
  return t;
}

namespace {

std::size_t extent(RngStream& rng) { return 1 + rng.uniform_index(4); }

// Magnitudes in [0.05, 1] with random sign, away from relu's kink.
T64 kink_free(const Shape& shape, RngStream& rng) {
  T64 t(shape);
  for (auto& x : t.data()) x = (rng.bernoulli(0.5) ? 1.0 : -1.0) * rng.uniform(0.05, 1.0);
  return t;
}

}  // namespace

double primitive_case(Primitive kind, RngStream& rng) {
  std::vector<T64> in;
  ad::PrimitiveArgs args;
  const std::size_t m = extent(rng), k = extent(rng), n = extent(rng);
  switch (kind) {
    case Primitive::matmul:
      in = {random_tensor({m, k}, rng), random_tensor({k, n}, rng)};
      break;
    case Primitive::add:
      if (rng.bernoulli(0.5)) {
        in = {random_tensor({m, n}, rng), random_tensor({m, n}, rng)};
      } else {
        in = {random_tensor({m, n}, rng), random_tensor({n}, rng)};
      }
      break;
    case Primitive::sub:
    case Primitive::mul:
      in = {random_tensor({m, n}, rng), random_tensor({m, n}, rng)};
      break;
    case Primitive::scale:
      in = {random_tensor({m, n}, rng)};
      args.factor = rng.uniform(-2.0, 2.0);
      break;
    case Primitive::exp:
      in = {random_tensor({m, n}, rng)};
      break;
    case Primitive::log:
      in = {random_tensor({m, n}, rng, 0.5, 2.0)};
      break;
    case Primitive::relu:
      in = {kink_free({m, n}, rng)};
      break;
    case Primitive::softmax:
    case Primitive::log_softmax:
      in = {random_tensor({m, n + 1}, rng, -2.0, 2.0)};
      break;
    case Primitive::gather:
      in = {random_tensor({m, n + 1}, rng)};
      for (std::size_t r = 0; r < m; ++r) args.indices.push_back(rng.uniform_index(n + 1));
      break;
    case Primitive::sum:
    case Primitive::mean:
      in = {random_tensor({m, n}, rng)};
      break;
    case Primitive::concat: {
      const std::size_t parts = 1 + rng.uniform_index(3);
      for (std::size_t p = 0; p < parts; ++p) in.push_back(random_tensor({extent(rng), n}, rng));
      break;
    }
    case Primitive::reshape:
      in = {random_tensor({m, k * n}, rng)};
      args.shape = {m * k, n};
      break;
    case Primitive::transpose:
      in = {random_tensor({m, n}, rng)};
      break;
    case Primitive::embedding: {
      const std::size_t rows = 2 + rng.uniform_index(4);
      in = {random_tensor({rows, n}, rng)};
      const std::size_t ids = 1 + rng.uniform_index(5);
      for (std::size_t i = 0; i < ids; ++i) args.indices.push_back(rng.uniform_index(rows));
      break;
    }
    default:
      throw ContractError("primitive_case: not a primitive");
  }
  // Probe the output shape once to size the weighting tensor.
  Shape out_shape;
  {
    Tape tape;
    std::vector<V> vars;
    for (auto& t : in) vars.push_back(tape.reference(t));
    out_shape = ad::apply_primitive<double>(kind, vars, args).shape();
  }
  const T64 w = random_tensor(out_shape, rng);
  std::vector<T64*> ptrs;
  for (auto& t : in) ptrs.push_back(&t);
  auto f = [&](Tape& tape) {
    std::vector<V> vars;
    for (auto& t : in) vars.push_back(tape.parameter(t));
    V out = ad::apply_primitive<double>(kind, vars, args);
    return sum(mul(out, tape.reference(w)));
  };
  return ad::check_gradients<double>(f, std::span<T64* const>(ptrs), ad::GradCheckOptions{1e-6, 0, 0});
}

Image random_image(const PolicyConfig& cfg, RngStream& rng) {
  Image img(cfg.image_height, cfg.image_width, cfg.image_channels);
  for (auto& p : img.pixels) p = rng.uniform01();
  return img;
}

PolicyParams<double> randomized_params(const PolicyConfig& cfg, RngStream rng, double spread) {
  auto params = init_params<double>(cfg, rng.derive("init"));
  RngStream j = rng.derive("jitter");
  for (auto& [name, t] : params)
    for (auto& x : t.data()) x += spread * j.standard_normal() / std::sqrt(static_cast<double>(cfg.embed_dim));
  return params;
}

double policy_nll_case(const PolicyConfig& cfg, RngStream& rng, std::size_t response_len, std::size_t max_coords) {
  auto params = randomized_params(cfg, rng.derive("params"));
  const Image img = random_image(cfg, rng);
  Tokens seq{tok::BOS, tok::Q_COUNT};
  const std::size_t first = seq.size();
  for (std::size_t i = 0; i < response_len; ++i) seq.push_back(rng.uniform_index(cfg.vocab_size));
  std::vector<T64*> ptrs;
  for (auto& [name, t] : params) ptrs.push_back(&t);
  auto f = [&](Tape& tape) {
    auto vars = bind_parameters(tape, params);
    return sequence_nll(tape, vars, cfg, img, seq, first);
  };
  ad::GradCheckOptions opt;
  opt.eps = 1e-6;
  opt.max_coords = max_coords;
  opt.coord_seed = rng.next_u64();
  return ad::check_gradients<double>(f, std::span<T64* const>(ptrs), opt);
}

PolicyConfig tiny_policy() {
  PolicyConfig c;
  c.embed_dim = 6;
  c.heads = 1;
  c.context_len = 12;
  c.mlp_dim = 8;
  c.image_height = 4;
  c.image_width = 4;
  c.image_channels = 3;
  c.image_tokens = 1;
  c.image_hidden = 4;
  return c;
}

PolicyParams<double> warmed_tiny_params(Family family, std::uint64_t seed) {
  RunConfig rc;
  rc.policy = tiny_policy();
  rc.env.family_mix = {{std::string(family_name(family)), 1.0}};
  rc.env.image_size = 4;
  rc.env.grid = 4;
  rc.grpo.max_response_len = 6;
  rc.warmup = {150, 8, 0.03, 0};
  const RngStream root(seed);
  auto params = init_params<double>(rc.policy, root.derive("init"));
  format_warmup(rc.policy, params, rc, root.derive("warmup"));
  return params;
}

Tokens relabel(const TaskInstance& inst, Transform t, RngStream& rng) {
  switch (t) {
    case Transform::hflip:
    case Transform::vflip:
    case Transform::rot90:
    case Transform::rot180:
    case Transform::rot270: {
      const Scene parsed = parse_image(apply_geometric(inst.image, t), inst.scene);
      return answer_for(inst.family, parsed, inst.question);
    }
    case Transform::color_jitter: {
      AugmentSpec spec = identity_spec();
      // Largest shift perturb() accepts for this instance.
      spec.jitter = std::nextafter(inst.jitter_bound, 0.0);
      const Transform only[] = {Transform::color_jitter};
      const Image shifted = perturb(inst.image, spec, only, rng, nullptr, inst.jitter_bound);
      return answer_for(inst.family, parse_image(shifted, inst.scene), inst.question);
    }
    case Transform::gaussian_noise:
      return answer_for(inst.family, inst.scene, inst.question);
  }
  return {};
}

}  // namespace vt

