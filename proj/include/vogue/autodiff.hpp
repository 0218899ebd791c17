#pragma once

// Reverse-mode differentiation over Tensor. A Tape records primitive
// applications in execution order; Var is a cheap handle to one recorded
// value. Parameters enter as leaves and receive their gradients in
// Tensor::grad when backward() runs.

#include <cstddef>
#include <cstdint>
#include <deque>
#include <functional>
#include <span>
#include <vector>

#include "vogue/error.hpp"
#include "vogue/ops.hpp"
#include "vogue/tensor.hpp"

namespace vogue::ad {

template <class Real>
class Tape;

template <class Real>
class Var {
 public:
  Var() = default;
  Var(Tape<Real>* tape, std::size_t id) : tape_(tape), id_(id) {}

  const Tensor<Real>& value() const;
  const Shape& shape() const { return value().shape(); }
  std::size_t numel() const { return value().numel(); }
  Real item() const { return value().item(); }
  bool needs_grad() const;

  Tape<Real>* tape() const { return tape_; }
  std::size_t id() const { return id_; }

 private:
  Tape<Real>* tape_ = nullptr;
  std::size_t id_ = 0;
};

template <class Real>
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::size_t self)>;

  struct Node {
    Primitive kind = Primitive::constant;
    std::vector<std::size_t> inputs;
    Tensor<Real> owned;
    const Tensor<Real>* external = nullptr;
    Tensor<Real>* sink = nullptr;
    bool needs_grad = false;
    BackwardFn backward;

    const Tensor<Real>& value() const { return external ? *external : owned; }
  };

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Leaf whose gradient lands in t.grad (when t.requires_grad()).
  Var<Real> parameter(Tensor<Real>& t);
  // Constant that references t without copying; t must outlive the tape.
  Var<Real> reference(const Tensor<Real>& t);
  Var<Real> constant(Tensor<Real> t);

  Var<Real> record(Primitive kind, std::vector<std::size_t> inputs, Tensor<Real> value,
                   BackwardFn backward);

  void backward(const Var<Real>& loss);

  const Node& node(std::size_t id) const { return nodes_[id]; }
  const Tensor<Real>& value(std::size_t id) const { return nodes_[id].value(); }
  bool needs_grad(std::size_t id) const { return nodes_[id].needs_grad; }
  std::size_t size() const { return nodes_.size(); }
  bool consumed() const { return consumed_; }

  // Gradient buffer of a node; allocated (zeros) on first access during backward.
  std::vector<Real>& grad(std::size_t id);

 private:
  std::deque<Node> nodes_;
  std::deque<std::vector<Real>> grads_;
  bool consumed_ = false;
};

template <class Real>
const Tensor<Real>& Var<Real>::value() const {
  return tape_->value(id_);
}

template <class Real>
bool Var<Real>::needs_grad() const {
  return tape_->needs_grad(id_);
}

template <class Real>
Var<Real> matmul(const Var<Real>& a, const Var<Real>& b);
template <class Real>
Var<Real> add(const Var<Real>& a, const Var<Real>& b);
template <class Real>
Var<Real> sub(const Var<Real>& a, const Var<Real>& b);
template <class Real>
Var<Real> mul(const Var<Real>& a, const Var<Real>& b);
template <class Real>
Var<Real> scale(const Var<Real>& a, double factor);
template <class Real>
Var<Real> exp(const Var<Real>& a);
template <class Real>
Var<Real> log(const Var<Real>& a);
template <class Real>
Var<Real> relu(const Var<Real>& a);
template <class Real>
Var<Real> softmax(const Var<Real>& a);
template <class Real>
Var<Real> log_softmax(const Var<Real>& a);
template <class Real>
Var<Real> gather(const Var<Real>& a, std::span<const std::size_t> index);
template <class Real>
Var<Real> sum(const Var<Real>& a);
template <class Real>
Var<Real> mean(const Var<Real>& a);
template <class Real>
Var<Real> concat(std::span<const Var<Real>> parts);
template <class Real>
Var<Real> reshape(const Var<Real>& a, Shape shape);
template <class Real>
Var<Real> transpose(const Var<Real>& a);
template <class Real>
Var<Real> embedding(const Var<Real>& table, std::span<const std::size_t> ids);

// Extra operands some primitives need besides their tensor inputs.
struct PrimitiveArgs {
  double factor = 1.0;                // scale
  std::vector<std::size_t> indices;   // gather, embedding
  Shape shape;                        // reshape
};

// Uniform entry point over the primitive set (used by generic property tests).
template <class Real>
Var<Real> apply_primitive(Primitive kind, std::span<const Var<Real>> inputs,
                          const PrimitiveArgs& args = {});

// Scalar-valued function of the tensors bound on the given tape.
template <class Real>
using ScalarFn = std::function<Var<Real>(Tape<Real>&, const Var<Real>&)>;

struct GradCheckOptions {
  double eps = 1e-6;
  // 0 checks every coordinate; otherwise a deterministic subset of this size.
  std::size_t max_coords = 0;
  std::uint64_t coord_seed = 0;
};

// max over coordinates of |analytic - central difference| / max(1, |analytic|).
template <class Real>
double check_gradients(const ScalarFn<Real>& f, const Tensor<Real>& x, double eps);

// Same measure over several tensors at once. f must bind each tensor through
// tape.parameter(); the tensors are perturbed in place and restored.
template <class Real>
double check_gradients(const std::function<Var<Real>(Tape<Real>&)>& f,
                       std::span<Tensor<Real>* const> params, const GradCheckOptions& options);

}  // namespace vogue::ad
