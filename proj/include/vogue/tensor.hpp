#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace vogue {

using Shape = std::vector<std::size_t>;

std::string shape_string(const Shape& shape);
std::size_t shape_numel(const Shape& shape);

// Dense row-major array with an optional gradient slot. An empty shape is a
// scalar holding one element.
template <class Real>
class Tensor {
 public:
  using value_type = Real;

  Tensor();
  explicit Tensor(Shape shape, Real fill = Real(0));
  Tensor(Shape shape, std::vector<Real> data);

  static Tensor scalar(Real value);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t numel() const { return data_.size(); }

  std::span<Real> data() { return data_; }
  std::span<const Real> data() const { return data_; }
  const std::vector<Real>& values() const { return data_; }
  Real& operator[](std::size_t i) { return data_[i]; }
  Real operator[](std::size_t i) const { return data_[i]; }
  Real item() const;

  bool requires_grad() const { return requires_grad_; }
  void set_requires_grad(bool on) { requires_grad_ = on; }

  bool has_grad() const { return grad_.has_value(); }
  std::span<const Real> grad() const;
  std::span<Real> grad();
  void accumulate_grad(std::span<const Real> delta);
  void zero_grad();
  void clear_grad() { grad_.reset(); }

  bool all_finite() const;

 private:
  Shape shape_;
  std::vector<Real> data_;
  bool requires_grad_ = false;
  std::optional<std::vector<Real>> grad_;
};

// Named parameter collection; std::map keeps iteration order stable, which
// the checkpoint format and the optimizer both rely on.
template <class Real>
using TensorMap = std::map<std::string, Tensor<Real>>;

template <class Real>
std::size_t parameter_count(const TensorMap<Real>& tensors) {
  std::size_t total = 0;
  for (const auto& [name, t] : tensors) total += t.numel();
  return total;
}

extern template class Tensor<float>;
extern template class Tensor<double>;

}  // namespace vogue
