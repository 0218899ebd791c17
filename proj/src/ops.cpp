#include "vogue/ops.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <string>

#include "vogue/error.hpp"

namespace vogue {

std::string_view primitive_name(Primitive kind) {
  switch (kind) {
    case Primitive::leaf: return "leaf";
    case Primitive::constant: return "constant";
    case Primitive::matmul: return "matmul";
    case Primitive::add: return "add";
    case Primitive::sub: return "sub";
    case Primitive::mul: return "mul";
    case Primitive::scale: return "scale";
    case Primitive::exp: return "exp";
    case Primitive::log: return "log";
    case Primitive::relu: return "relu";
    case Primitive::softmax: return "softmax";
    case Primitive::log_softmax: return "log_softmax";
    case Primitive::gather: return "gather";
    case Primitive::sum: return "sum";
    case Primitive::mean: return "mean";
    case Primitive::concat: return "concat";
    case Primitive::reshape: return "reshape";
    case Primitive::transpose: return "transpose";
    case Primitive::embedding: return "embedding";
  }
  return "?";
}

std::span<const Primitive> all_primitives() {
  static constexpr std::array kinds{
      Primitive::matmul,  Primitive::add,     Primitive::sub,         Primitive::mul,
      Primitive::scale,   Primitive::exp,     Primitive::log,         Primitive::relu,
      Primitive::softmax, Primitive::log_softmax, Primitive::gather,  Primitive::sum,
      Primitive::mean,    Primitive::concat,  Primitive::reshape,     Primitive::transpose,
      Primitive::embedding,
  };
  return kinds;
}

namespace detail {

void shape_mismatch(Primitive kind, const Shape& a, const Shape& b) {
  throw ShapeError(std::string(primitive_name(kind)) + ": shape mismatch " + shape_string(a) +
                   " vs " + shape_string(b));
}

void shape_invalid(Primitive kind, const Shape& a, std::string_view why) {
  throw ShapeError(std::string(primitive_name(kind)) + ": invalid shape " + shape_string(a) +
                   " (" + std::string(why) + ")");
}

template <class Real>
void require_finite(Primitive kind, const Tensor<Real>& out) {
  const auto d = out.data();
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (!std::isfinite(d[i])) {
      throw NumericError(std::string(primitive_name(kind)) + ": non-finite output at index " +
                         std::to_string(i));
    }
  }
}

template void require_finite(Primitive, const Tensor<float>&);
template void require_finite(Primitive, const Tensor<double>&);

}  // namespace detail

using detail::last_extent;
using detail::require_finite;
using detail::shape_invalid;
using detail::shape_mismatch;

template <class Real>
Tensor<Real> matmul(const Tensor<Real>& a, const Tensor<Real>& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    shape_mismatch(Primitive::matmul, a.shape(), b.shape());
  }
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  Tensor<Real> out(Shape{m, n});
  const Real* pa = a.data().data();
  const Real* pb = b.data().data();
  Real* pc = out.data().data();
  // Row i of the result depends on row i of a only, in a fixed order; the
  // sampler relies on this to match teacher-forced evaluation bit for bit.
  for (std::size_t i = 0; i < m; ++i) {
    Real* crow = pc + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const Real av = pa[i * k + p];
      const Real* brow = pb + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
  require_finite(Primitive::matmul, out);
  return out;
}

template <class Real>
Tensor<Real> add(const Tensor<Real>& a, const Tensor<Real>& b) {
  if (a.shape() == b.shape()) {
    Tensor<Real> out(a.shape());
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] = a[i] + b[i];
    require_finite(Primitive::add, out);
    return out;
  }
  // Bias-add: b is [n] and a is [.., n].
  if (b.rank() == 1 && a.rank() >= 1 && a.shape().back() == b.dim(0)) {
    Tensor<Real> out(a.shape());
    const std::size_t n = b.dim(0);
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] = a[i] + b[i % n];
    require_finite(Primitive::add, out);
    return out;
  }
  shape_mismatch(Primitive::add, a.shape(), b.shape());
}

template <class Real>
Tensor<Real> sub(const Tensor<Real>& a, const Tensor<Real>& b) {
  if (a.shape() != b.shape()) shape_mismatch(Primitive::sub, a.shape(), b.shape());
  Tensor<Real> out(a.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = a[i] - b[i];
  require_finite(Primitive::sub, out);
  return out;
}

template <class Real>
Tensor<Real> mul(const Tensor<Real>& a, const Tensor<Real>& b) {
  if (a.shape() != b.shape()) shape_mismatch(Primitive::mul, a.shape(), b.shape());
  Tensor<Real> out(a.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = a[i] * b[i];
  require_finite(Primitive::mul, out);
  return out;
}

template <class Real>
Tensor<Real> scale(const Tensor<Real>& a, double factor) {
  Tensor<Real> out(a.shape());
  const Real f = static_cast<Real>(factor);
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = a[i] * f;
  require_finite(Primitive::scale, out);
  return out;
}

template <class Real>
Tensor<Real> exp(const Tensor<Real>& a) {
  Tensor<Real> out(a.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = std::exp(a[i]);
  require_finite(Primitive::exp, out);
  return out;
}

template <class Real>
Tensor<Real> log(const Tensor<Real>& a) {
  Tensor<Real> out(a.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) {
    if (!(a[i] > Real(0))) {
      throw NumericError("log: non-positive input " + std::to_string(double(a[i])) +
                         " at index " + std::to_string(i));
    }
    out[i] = std::log(a[i]);
  }
  require_finite(Primitive::log, out);
  return out;
}

template <class Real>
Tensor<Real> relu(const Tensor<Real>& a) {
  Tensor<Real> out(a.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = a[i] > Real(0) ? a[i] : Real(0);
  return out;
}

template <class Real>
Tensor<Real> softmax(const Tensor<Real>& a) {
  Tensor<Real> out(a.shape());
  const std::size_t n = last_extent(a.shape());
  const std::size_t rows = a.numel() / n;
  for (std::size_t r = 0; r < rows; ++r) {
    const Real* x = a.data().data() + r * n;
    Real* y = out.data().data() + r * n;
    Real mx = x[0];
    for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, x[j]);
    Real total = 0;
    for (std::size_t j = 0; j < n; ++j) {
      y[j] = std::exp(x[j] - mx);
      total += y[j];
    }
    for (std::size_t j = 0; j < n; ++j) y[j] /= total;
  }
  require_finite(Primitive::softmax, out);
  return out;
}

template <class Real>
Tensor<Real> log_softmax(const Tensor<Real>& a) {
  Tensor<Real> out(a.shape());
  const std::size_t n = last_extent(a.shape());
  const std::size_t rows = a.numel() / n;
  for (std::size_t r = 0; r < rows; ++r) {
    const Real* x = a.data().data() + r * n;
    Real* y = out.data().data() + r * n;
    Real mx = x[0];
    for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, x[j]);
    Real total = 0;
    for (std::size_t j = 0; j < n; ++j) total += std::exp(x[j] - mx);
    const Real lse = mx + std::log(total);
    for (std::size_t j = 0; j < n; ++j) y[j] = x[j] - lse;
  }
  require_finite(Primitive::log_softmax, out);
  return out;
}

template <class Real>
Tensor<Real> gather(const Tensor<Real>& a, std::span<const std::size_t> index) {
  if (a.rank() == 0) shape_invalid(Primitive::gather, a.shape(), "needs rank >= 1");
  const std::size_t n = a.shape().back();
  const std::size_t rows = a.numel() / n;
  if (index.size() != rows) {
    shape_mismatch(Primitive::gather, a.shape(), Shape{index.size()});
  }
  Shape out_shape(a.shape().begin(), a.shape().end() - 1);
  Tensor<Real> out(out_shape);
  for (std::size_t r = 0; r < rows; ++r) {
    if (index[r] >= n) {
      throw ContractError("gather: index " + std::to_string(index[r]) + " out of range for axis of " +
                          std::to_string(n));
    }
    out[r] = a[r * n + index[r]];
  }
  return out;
}

template <class Real>
Tensor<Real> sum(const Tensor<Real>& a) {
  Real total = 0;
  for (Real v : a.data()) total += v;
  auto out = Tensor<Real>::scalar(total);
  require_finite(Primitive::sum, out);
  return out;
}

template <class Real>
Tensor<Real> mean(const Tensor<Real>& a) {
  Real total = 0;
  for (Real v : a.data()) total += v;
  auto out = Tensor<Real>::scalar(total / static_cast<Real>(a.numel()));
  require_finite(Primitive::mean, out);
  return out;
}

template <class Real>
Tensor<Real> concat(std::span<const Tensor<Real>* const> parts) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  const Shape& first = parts[0]->shape();
  if (first.empty()) shape_invalid(Primitive::concat, first, "needs rank >= 1");
  std::size_t rows = 0;
  for (const auto* p : parts) {
    const Shape& s = p->shape();
    if (s.size() != first.size() || !std::equal(s.begin() + 1, s.end(), first.begin() + 1)) {
      shape_mismatch(Primitive::concat, first, s);
    }
    rows += s[0];
  }
  Shape out_shape = first;
  out_shape[0] = rows;
  std::vector<Real> data;
  data.reserve(shape_numel(out_shape));
  for (const auto* p : parts) data.insert(data.end(), p->data().begin(), p->data().end());
  return Tensor<Real>(std::move(out_shape), std::move(data));
}

template <class Real>
Tensor<Real> reshape(const Tensor<Real>& a, Shape shape) {
  if (shape_numel(shape) != a.numel()) shape_mismatch(Primitive::reshape, a.shape(), shape);
  return Tensor<Real>(std::move(shape), a.values());
}

template <class Real>
Tensor<Real> transpose(const Tensor<Real>& a) {
  if (a.rank() != 2) shape_invalid(Primitive::transpose, a.shape(), "needs rank 2");
  const std::size_t m = a.dim(0), n = a.dim(1);
  Tensor<Real> out(Shape{n, m});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = a[i * n + j];
  return out;
}

template <class Real>
Tensor<Real> embedding(const Tensor<Real>& table, std::span<const std::size_t> ids) {
  if (table.rank() != 2) shape_invalid(Primitive::embedding, table.shape(), "table needs rank 2");
  if (ids.empty()) throw ShapeError("embedding: empty id list");
  const std::size_t rows = table.dim(0), d = table.dim(1);
  Tensor<Real> out(Shape{ids.size(), d});
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] >= rows) {
      throw ContractError("embedding: id " + std::to_string(ids[i]) + " out of range for table of " +
                          std::to_string(rows) + " rows");
    }
    std::copy_n(table.data().data() + ids[i] * d, d, out.data().data() + i * d);
  }
  return out;
}

#define VOGUE_INSTANTIATE_OPS(R)                                                        \
  template Tensor<R> matmul(const Tensor<R>&, const Tensor<R>&);                        \
  template Tensor<R> add(const Tensor<R>&, const Tensor<R>&);                           \
  template Tensor<R> sub(const Tensor<R>&, const Tensor<R>&);                           \
  template Tensor<R> mul(const Tensor<R>&, const Tensor<R>&);                           \
  template Tensor<R> scale(const Tensor<R>&, double);                                   \
  template Tensor<R> exp(const Tensor<R>&);                                             \
  template Tensor<R> log(const Tensor<R>&);                                             \
  template Tensor<R> relu(const Tensor<R>&);                                            \
  template Tensor<R> softmax(const Tensor<R>&);                                         \
  template Tensor<R> log_softmax(const Tensor<R>&);                                     \
  template Tensor<R> gather(const Tensor<R>&, std::span<const std::size_t>);            \
  template Tensor<R> sum(const Tensor<R>&);                                             \
  template Tensor<R> mean(const Tensor<R>&);                                            \
  template Tensor<R> concat(std::span<const Tensor<R>* const>);                         \
  template Tensor<R> reshape(const Tensor<R>&, Shape);                                  \
  template Tensor<R> transpose(const Tensor<R>&);                                       \
  template Tensor<R> embedding(const Tensor<R>&, std::span<const std::size_t>);

VOGUE_INSTANTIATE_OPS(float)
VOGUE_INSTANTIATE_OPS(double)

#undef VOGUE_INSTANTIATE_OPS

}  // namespace vogue
