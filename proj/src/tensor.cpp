#include "vogue/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "vogue/error.hpp"

namespace vogue {

std::string shape_string(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << ',';
    out << shape[i];
  }
  out << ']';
  return out.str();
}

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto e : shape) n *= e;
  return n;
}

namespace {

void require_positive_extents(const Shape& shape) {
  for (auto e : shape) {
    if (e == 0) throw ShapeError("tensor: zero extent in shape " + shape_string(shape));
  }
}

}  // namespace

template <class Real>
Tensor<Real>::Tensor() : data_(1, Real(0)) {}

template <class Real>
Tensor<Real>::Tensor(Shape shape, Real fill) : shape_(std::move(shape)) {
  require_positive_extents(shape_);
  data_.assign(shape_numel(shape_), fill);
}

template <class Real>
Tensor<Real>::Tensor(Shape shape, std::vector<Real> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  require_positive_extents(shape_);
  if (data_.size() != shape_numel(shape_)) {
    throw ShapeError("tensor: shape " + shape_string(shape_) + " needs " +
                     std::to_string(shape_numel(shape_)) + " values, got " +
                     std::to_string(data_.size()));
  }
}

template <class Real>
Tensor<Real> Tensor<Real>::scalar(Real value) {
  return Tensor(Shape{}, std::vector<Real>{value});
}

template <class Real>
Real Tensor<Real>::item() const {
  if (data_.size() != 1) {
    throw ShapeError("tensor: item() on shape " + shape_string(shape_));
  }
  return data_[0];
}

template <class Real>
std::span<const Real> Tensor<Real>::grad() const {
  if (!grad_) return {};
  return *grad_;
}

template <class Real>
std::span<Real> Tensor<Real>::grad() {
  if (!grad_) return {};
  return *grad_;
}

template <class Real>
void Tensor<Real>::accumulate_grad(std::span<const Real> delta) {
  if (delta.size() != data_.size()) {
    throw ShapeError("tensor: gradient of length " + std::to_string(delta.size()) +
                     " for shape " + shape_string(shape_));
  }
  if (!grad_) grad_.emplace(data_.size(), Real(0));
  auto& g = *grad_;
  for (std::size_t i = 0; i < g.size(); ++i) g[i] += delta[i];
}

template <class Real>
void Tensor<Real>::zero_grad() {
  if (grad_) std::fill(grad_->begin(), grad_->end(), Real(0));
}

template <class Real>
bool Tensor<Real>::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](Real v) { return std::isfinite(v); });
}

template class Tensor<float>;
template class Tensor<double>;

}  // namespace vogue
