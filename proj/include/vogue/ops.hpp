#pragma once

// Eager (tape-free) primitives over Tensor. The recording variants in
// autodiff.hpp call these for their forward values, so both paths produce
// bit-identical results for the same inputs.

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

#include "vogue/tensor.hpp"

namespace vogue {

enum class Primitive {
  leaf,
  constant,
  matmul,
  add,
  sub,
  mul,
  scale,
  exp,
  log,
  relu,
  softmax,
  log_softmax,
  gather,
  sum,
  mean,
  concat,
  reshape,
  transpose,
  embedding,
};

std::string_view primitive_name(Primitive kind);

// Every primitive a caller can apply (excludes the leaf/constant markers).
std::span<const Primitive> all_primitives();

// [m,k] x [k,n] -> [m,n]
template <class Real>
Tensor<Real> matmul(const Tensor<Real>& a, const Tensor<Real>& b);

// Same shape, or b is a bias of shape [n] added to every row of a [.., n].
template <class Real>
Tensor<Real> add(const Tensor<Real>& a, const Tensor<Real>& b);

template <class Real>
Tensor<Real> sub(const Tensor<Real>& a, const Tensor<Real>& b);

template <class Real>
Tensor<Real> mul(const Tensor<Real>& a, const Tensor<Real>& b);

template <class Real>
Tensor<Real> scale(const Tensor<Real>& a, double factor);

template <class Real>
Tensor<Real> exp(const Tensor<Real>& a);

template <class Real>
Tensor<Real> log(const Tensor<Real>& a);

template <class Real>
Tensor<Real> relu(const Tensor<Real>& a);

// Along the last axis.
template <class Real>
Tensor<Real> softmax(const Tensor<Real>& a);

template <class Real>
Tensor<Real> log_softmax(const Tensor<Real>& a);

// Picks one entry of the last axis per leading row: [.., n] -> [..].
template <class Real>
Tensor<Real> gather(const Tensor<Real>& a, std::span<const std::size_t> index);

template <class Real>
Tensor<Real> sum(const Tensor<Real>& a);

template <class Real>
Tensor<Real> mean(const Tensor<Real>& a);

// Along axis 0; trailing extents must agree.
template <class Real>
Tensor<Real> concat(std::span<const Tensor<Real>* const> parts);

template <class Real>
Tensor<Real> reshape(const Tensor<Real>& a, Shape shape);

// 2-D only.
template <class Real>
Tensor<Real> transpose(const Tensor<Real>& a);

// Row lookup: table [V,d], ids -> [n,d].
template <class Real>
Tensor<Real> embedding(const Tensor<Real>& table, std::span<const std::size_t> ids);

namespace detail {

[[noreturn]] void shape_mismatch(Primitive kind, const Shape& a, const Shape& b);
[[noreturn]] void shape_invalid(Primitive kind, const Shape& a, std::string_view why);

template <class Real>
void require_finite(Primitive kind, const Tensor<Real>& out);

// Row count / row width when viewing a tensor as [outer, last].
inline std::size_t last_extent(const Shape& s) { return s.empty() ? 1 : s.back(); }

}  // namespace detail

}  // namespace vogue
