#include "vogue/adamw.hpp"

#include <cmath>

#include "vogue/error.hpp"

namespace vogue {

void validate(const AdamWConfig& c) {
  if (!(c.lr >= 0) || !std::isfinite(c.lr)) throw ContractError("adamw: lr must be finite and >= 0");
  if (!(c.weight_decay >= 0)) throw ContractError("adamw: weight_decay must be >= 0");
  if (!(c.beta1 >= 0 && c.beta1 < 1) || !(c.beta2 >= 0 && c.beta2 < 1)) {
    throw ContractError("adamw: betas must lie in [0,1)");
  }
  if (!(c.eps > 0)) throw ContractError("adamw: eps must be positive");
}

template <class Real>
void adamw_step(TensorMap<Real>& params, AdamWState<Real>& state, const AdamWConfig& config) {
  validate(config);
  if (state.step == 0 && state.m.empty()) {
    for (const auto& [name, p] : params) {
      state.m.emplace(name, Tensor<Real>(p.shape()));
      state.v.emplace(name, Tensor<Real>(p.shape()));
    }
  }
  if (state.m.size() != params.size() || state.v.size() != params.size()) {
    throw ShapeError("adamw: optimizer state tracks " + std::to_string(state.m.size()) +
                     " tensors, params have " + std::to_string(params.size()));
  }
  for (const auto& [name, p] : params) {
    auto mi = state.m.find(name);
    auto vi = state.v.find(name);
    if (mi == state.m.end() || vi == state.v.end()) {
      throw ShapeError("adamw: no optimizer state for '" + name + "'");
    }
    if (mi->second.shape() != p.shape() || vi->second.shape() != p.shape()) {
      throw ShapeError("adamw: '" + name + "' has shape " + shape_string(p.shape()) +
                       " but its moments have " + shape_string(mi->second.shape()));
    }
    if (p.has_grad() && p.grad().size() != p.numel()) {
      throw ShapeError("adamw: gradient length mismatch for '" + name + "'");
    }
  }

  state.step += 1;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(config.beta1, t);
  const double c2 = 1.0 - std::pow(config.beta2, t);
  const double decay = 1.0 - config.lr * config.weight_decay;

  for (auto& [name, p] : params) {
    auto m = state.m.at(name).data();
    auto v = state.v.at(name).data();
    auto w = p.data();
    auto g = p.grad();
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double gi = g.empty() ? 0.0 : static_cast<double>(g[i]);
      const double mi = config.beta1 * m[i] + (1.0 - config.beta1) * gi;
      const double vi = config.beta2 * v[i] + (1.0 - config.beta2) * gi * gi;
      m[i] = static_cast<Real>(mi);
      v[i] = static_cast<Real>(vi);
      if (config.lr == 0) continue;
      const double update = (mi / c1) / (std::sqrt(vi / c2) + config.eps);
      w[i] = static_cast<Real>(static_cast<double>(w[i]) * decay - config.lr * update);
    }
  }
}

template void adamw_step(TensorMap<float>&, AdamWState<float>&, const AdamWConfig&);
template void adamw_step(TensorMap<double>&, AdamWState<double>&, const AdamWConfig&);

}  // namespace vogue
