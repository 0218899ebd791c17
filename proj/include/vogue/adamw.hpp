#pragma once

#include <cstdint>

#include "vogue/tensor.hpp"

namespace vogue {

struct AdamWConfig {
  double lr = 1e-3;
  double weight_decay = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

void validate(const AdamWConfig& config);

template <class Real>
struct AdamWState {
  TensorMap<Real> m;
  TensorMap<Real> v;
  std::uint64_t step = 0;
};

// One decoupled-decay Adam update of every tensor in params, reading each
// tensor's grad slot (a missing slot counts as zero). Moments are created on the
// first call. lr may be 0, in which case params are left bit-identical.
template <class Real>
void adamw_step(TensorMap<Real>& params, AdamWState<Real>& state, const AdamWConfig& config);

extern template void adamw_step(TensorMap<float>&, AdamWState<float>&, const AdamWConfig&);
extern template void adamw_step(TensorMap<double>&, AdamWState<double>&, const AdamWConfig&);

}  // namespace vogue
