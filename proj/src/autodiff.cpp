#include "vogue/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace vogue::ad {

template <class Real>
Var<Real> Tape<Real>::parameter(Tensor<Real>& t) {
  Node& n = nodes_.emplace_back();
  grads_.emplace_back();
  n.kind = Primitive::leaf;
  n.external = &t;
  n.sink = t.requires_grad() ? &t : nullptr;
  n.needs_grad = t.requires_grad();
  return Var<Real>(this, nodes_.size() - 1);
}

template <class Real>
Var<Real> Tape<Real>::reference(const Tensor<Real>& t) {
  Node& n = nodes_.emplace_back();
  grads_.emplace_back();
  n.kind = Primitive::constant;
  n.external = &t;
  return Var<Real>(this, nodes_.size() - 1);
}

template <class Real>
Var<Real> Tape<Real>::constant(Tensor<Real> t) {
  Node& n = nodes_.emplace_back();
  grads_.emplace_back();
  n.kind = Primitive::constant;
  n.owned = std::move(t);
  return Var<Real>(this, nodes_.size() - 1);
}

template <class Real>
Var<Real> Tape<Real>::record(Primitive kind, std::vector<std::size_t> inputs, Tensor<Real> value,
                             BackwardFn backward) {
  bool needs = false;
  for (auto id : inputs) needs = needs || nodes_[id].needs_grad;
  Node& n = nodes_.emplace_back();
  grads_.emplace_back();
  n.kind = kind;
  n.inputs = std::move(inputs);
  n.owned = std::move(value);
  n.needs_grad = needs;
  if (needs) n.backward = std::move(backward);
  return Var<Real>(this, nodes_.size() - 1);
}

template <class Real>
std::vector<Real>& Tape<Real>::grad(std::size_t id) {
  auto& g = grads_[id];
  if (g.empty()) g.assign(nodes_[id].value().numel(), Real(0));
  return g;
}

template <class Real>
void Tape<Real>::backward(const Var<Real>& loss) {
  if (loss.tape() != this) throw ContractError("backward: loss belongs to a different tape");
  if (consumed_) throw ReuseError("backward: tape already consumed by an earlier backward pass");
  if (loss.numel() != 1) {
    throw ContractError("backward: loss must be scalar, got shape " + shape_string(loss.shape()));
  }
  consumed_ = true;
  if (!nodes_[loss.id()].needs_grad) return;
  grad(loss.id())[0] = Real(1);
  for (std::size_t id = loss.id() + 1; id-- > 0;) {
    Node& n = nodes_[id];
    if (!n.needs_grad || grads_[id].empty()) continue;
    if (n.sink) {
      n.sink->accumulate_grad(grads_[id]);
    } else if (n.backward) {
      n.backward(*this, id);
    }
    // Interior gradients are no longer needed once propagated.
    if (!n.sink) std::vector<Real>().swap(grads_[id]);
  }
}

namespace {

template <class Real>
Tape<Real>& same_tape(Primitive kind, std::initializer_list<const Var<Real>*> vars) {
  Tape<Real>* tape = (*vars.begin())->tape();
  if (!tape) throw ContractError(std::string(primitive_name(kind)) + ": unbound variable");
  for (const auto* v : vars) {
    if (v->tape() != tape) {
      throw ContractError(std::string(primitive_name(kind)) + ": operands live on different tapes");
    }
  }
  return *tape;
}

template <class Real>
void accumulate(std::vector<Real>& dst, std::span<const Real> src) {
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

}  // namespace

template <class Real>
Var<Real> matmul(const Var<Real>& a, const Var<Real>& b) {
  auto& tape = same_tape(Primitive::matmul, {&a, &b});
  auto out = vogue::matmul(a.value(), b.value());
  const std::size_t ia = a.id(), ib = b.id();
  return tape.record(Primitive::matmul, {ia, ib}, std::move(out), [ia, ib](Tape<Real>& t, std::size_t self) {
    const auto& A = t.value(ia);
    const auto& B = t.value(ib);
    const auto& G = t.grad(self);
    const std::size_t m = A.dim(0), k = A.dim(1), n = B.dim(1);
    if (t.needs_grad(ia)) {
      auto& dA = t.grad(ia);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          Real acc = 0;
          for (std::size_t j = 0; j < n; ++j) acc += G[i * n + j] * B[p * n + j];
          dA[i * k + p] += acc;
        }
    }
    if (t.needs_grad(ib)) {
      auto& dB = t.grad(ib);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          const Real av = A[i * k + p];
          for (std::size_t j = 0; j < n; ++j) dB[p * n + j] += av * G[i * n + j];
        }
    }
  });
}

template <class Real>
Var<Real> add(const Var<Real>& a, const Var<Real>& b) {
  auto& tape = same_tape(Primitive::add, {&a, &b});
  auto out = vogue::add(a.value(), b.value());
  const std::size_t ia = a.id(), ib = b.id();
  const bool bias = a.shape() != b.shape();
  return tape.record(Primitive::add, {ia, ib}, std::move(out), [ia, ib, bias](Tape<Real>& t, std::size_t self) {
    const auto& G = t.grad(self);
    if (t.needs_grad(ia)) accumulate<Real>(t.grad(ia), G);
    if (t.needs_grad(ib)) {
      auto& dB = t.grad(ib);
      if (!bias) {
        accumulate<Real>(dB, G);
      } else {
        const std::size_t n = dB.size();
        for (std::size_t i = 0; i < G.size(); ++i) dB[i % n] += G[i];
      }
    }
  });
}

template <class Real>
Var<Real> sub(const Var<Real>& a, const Var<Real>& b) {
  auto& tape = same_tape(Primitive::sub, {&a, &b});
  auto out = vogue::sub(a.value(), b.value());
  const std::size_t ia = a.id(), ib = b.id();
  return tape.record(Primitive::sub, {ia, ib}, std::move(out), [ia, ib](Tape<Real>& t, std::size_t self) {
    const auto& G = t.grad(self);
    if (t.needs_grad(ia)) accumulate<Real>(t.grad(ia), G);
    if (t.needs_grad(ib)) {
      auto& dB = t.grad(ib);
      for (std::size_t i = 0; i < G.size(); ++i) dB[i] -= G[i];
    }
  });
}

template <class Real>
Var<Real> mul(const Var<Real>& a, const Var<Real>& b) {
  auto& tape = same_tape(Primitive::mul, {&a, &b});
  auto out = vogue::mul(a.value(), b.value());
  const std::size_t ia = a.id(), ib = b.id();
  return tape.record(Primitive::mul, {ia, ib}, std::move(out), [ia, ib](Tape<Real>& t, std::size_t self) {
    const auto& G = t.grad(self);
    const auto& A = t.value(ia);
    const auto& B = t.value(ib);
    if (t.needs_grad(ia)) {
      auto& dA = t.grad(ia);
      for (std::size_t i = 0; i < G.size(); ++i) dA[i] += G[i] * B[i];
    }
    if (t.needs_grad(ib)) {
      auto& dB = t.grad(ib);
      for (std::size_t i = 0; i < G.size(); ++i) dB[i] += G[i] * A[i];
    }
  });
}

template <class Real>
Var<Real> scale(const Var<Real>& a, double factor) {
  auto& tape = same_tape(Primitive::scale, {&a});
  auto out = vogue::scale(a.value(), factor);
  const std::size_t ia = a.id();
  const Real f = static_cast<Real>(factor);
  return tape.record(Primitive::scale, {ia}, std::move(out), [ia, f](Tape<Real>& t, std::size_t self) {
    const auto& G = t.grad(self);
    auto& dA = t.grad(ia);
    for (std::size_t i = 0; i < G.size(); ++i) dA[i] += G[i] * f;
  });
}

template <class Real>
Var<Real> exp(const Var<Real>& a) {
  auto& tape = same_tape(Primitive::exp, {&a});
  auto out = vogue::exp(a.value());
  const std::size_t ia = a.id();
  return tape.record(Primitive::exp, {ia}, std::move(out), [ia](Tape<Real>& t, std::size_t self) {
    const auto& G = t.grad(self);
    const auto& Y = t.value(self);
    auto& dA = t.grad(ia);
    for (std::size_t i = 0; i < G.size(); ++i) dA[i] += G[i] * Y[i];
  });
}

template <class Real>
Var<Real> log(const Var<Real>& a) {
  auto& tape = same_tape(Primitive::log, {&a});
  auto out = vogue::log(a.value());
  const std::size_t ia = a.id();
  return tape.record(Primitive::log, {ia}, std::move(out), [ia](Tape<Real>& t, std::size_t self) {
    const auto& G = t.grad(self);
    const auto& X = t.value(ia);
    auto& dA = t.grad(ia);
    for (std::size_t i = 0; i < G.size(); ++i) dA[i] += G[i] / X[i];
  });
}

template <class Real>
Var<Real> relu(const Var<Real>& a) {
  auto& tape = same_tape(Primitive::relu, {&a});
  auto out = vogue::relu(a.value());
  const std::size_t ia = a.id();
  return tape.record(Primitive::relu, {ia}, std::move(out), [ia](Tape<Real>& t, std::size_t self) {
    const auto& G = t.grad(self);
    const auto& X = t.value(ia);
    auto& dA = t.grad(ia);
    for (std::size_t i = 0; i < G.size(); ++i)
      if (X[i] > Real(0)) dA[i] += G[i];
  });
}

template <class Real>
Var<Real> softmax(const Var<Real>& a) {
  auto& tape = same_tape(Primitive::softmax, {&a});
  auto out = vogue::softmax(a.value());
  const std::size_t ia = a.id();
  return tape.record(Primitive::softmax, {ia}, std::move(out), [ia](Tape<Real>& t, std::size_t self) {
    const auto& G = t.grad(self);
    const auto& Y = t.value(self);
    auto& dA = t.grad(ia);
    const std::size_t n = detail::last_extent(Y.shape());
    for (std::size_t r = 0; r < Y.numel() / n; ++r) {
      Real dot = 0;
      for (std::size_t j = 0; j < n; ++j) dot += G[r * n + j] * Y[r * n + j];
      for (std::size_t j = 0; j < n; ++j) dA[r * n + j] += Y[r * n + j] * (G[r * n + j] - dot);
    }
  });
}

template <class Real>
Var<Real> log_softmax(const Var<Real>& a) {
  auto& tape = same_tape(Primitive::log_softmax, {&a});
  auto out = vogue::log_softmax(a.value());
  const std::size_t ia = a.id();
  return tape.record(Primitive::log_softmax, {ia}, std::move(out), [ia](Tape<Real>& t, std::size_t self) {
    const auto& G = t.grad(self);
    const auto& Y = t.value(self);
    auto& dA = t.grad(ia);
    const std::size_t n = detail::last_extent(Y.shape());
    for (std::size_t r = 0; r < Y.numel() / n; ++r) {
      Real total = 0;
      for (std::size_t j = 0; j < n; ++j) total += G[r * n + j];
      for (std::size_t j = 0; j < n; ++j)
        dA[r * n + j] += G[r * n + j] - std::exp(Y[r * n + j]) * total;
    }
  });
}

template <class Real>
Var<Real> gather(const Var<Real>& a, std::span<const std::size_t> index) {
  auto& tape = same_tape(Primitive::gather, {&a});
  auto out = vogue::gather(a.value(), index);
  const std::size_t ia = a.id();
  std::vector<std::size_t> idx(index.begin(), index.end());
  const std::size_t n = a.shape().back();
  return tape.record(Primitive::gather, {ia}, std::move(out),
                     [ia, idx = std::move(idx), n](Tape<Real>& t, std::size_t self) {
                       const auto& G = t.grad(self);
                       auto& dA = t.grad(ia);
                       for (std::size_t r = 0; r < idx.size(); ++r) dA[r * n + idx[r]] += G[r];
                     });
}

template <class Real>
Var<Real> sum(const Var<Real>& a) {
  auto& tape = same_tape(Primitive::sum, {&a});
  auto out = vogue::sum(a.value());
  const std::size_t ia = a.id();
  return tape.record(Primitive::sum, {ia}, std::move(out), [ia](Tape<Real>& t, std::size_t self) {
    const Real g = t.grad(self)[0];
    for (auto& v : t.grad(ia)) v += g;
  });
}

template <class Real>
Var<Real> mean(const Var<Real>& a) {
  auto& tape = same_tape(Primitive::mean, {&a});
  auto out = vogue::mean(a.value());
  const std::size_t ia = a.id();
  const Real inv = Real(1) / static_cast<Real>(a.numel());
  return tape.record(Primitive::mean, {ia}, std::move(out), [ia, inv](Tape<Real>& t, std::size_t self) {
    const Real g = t.grad(self)[0] * inv;
    for (auto& v : t.grad(ia)) v += g;
  });
}

template <class Real>
Var<Real> concat(std::span<const Var<Real>> parts) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  Tape<Real>* tape = parts[0].tape();
  std::vector<const Tensor<Real>*> values;
  std::vector<std::size_t> ids;
  for (const auto& p : parts) {
    if (p.tape() != tape) throw ContractError("concat: operands live on different tapes");
    values.push_back(&p.value());
    ids.push_back(p.id());
  }
  auto out = vogue::concat<Real>(std::span<const Tensor<Real>* const>(values));
  auto inputs = ids;
  return tape->record(Primitive::concat, std::move(inputs), std::move(out),
                      [ids = std::move(ids)](Tape<Real>& t, std::size_t self) {
                        const auto& G = t.grad(self);
                        std::size_t offset = 0;
                        for (auto id : ids) {
                          const std::size_t n = t.value(id).numel();
                          if (t.needs_grad(id)) {
                            auto& d = t.grad(id);
                            for (std::size_t i = 0; i < n; ++i) d[i] += G[offset + i];
                          }
                          offset += n;
                        }
                      });
}

template <class Real>
Var<Real> reshape(const Var<Real>& a, Shape shape) {
  auto& tape = same_tape(Primitive::reshape, {&a});
  auto out = vogue::reshape(a.value(), std::move(shape));
  const std::size_t ia = a.id();
  return tape.record(Primitive::reshape, {ia}, std::move(out), [ia](Tape<Real>& t, std::size_t self) {
    accumulate<Real>(t.grad(ia), t.grad(self));
  });
}

template <class Real>
Var<Real> transpose(const Var<Real>& a) {
  auto& tape = same_tape(Primitive::transpose, {&a});
  auto out = vogue::transpose(a.value());
  const std::size_t ia = a.id();
  return tape.record(Primitive::transpose, {ia}, std::move(out), [ia](Tape<Real>& t, std::size_t self) {
    const auto& G = t.grad(self);
    const auto& X = t.value(ia);
    auto& dA = t.grad(ia);
    const std::size_t m = X.dim(0), n = X.dim(1);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) dA[i * n + j] += G[j * m + i];
  });
}

template <class Real>
Var<Real> embedding(const Var<Real>& table, std::span<const std::size_t> ids) {
  auto& tape = same_tape(Primitive::embedding, {&table});
  auto out = vogue::embedding(table.value(), ids);
  const std::size_t it = table.id();
  std::vector<std::size_t> rows(ids.begin(), ids.end());
  const std::size_t d = table.value().dim(1);
  return tape.record(Primitive::embedding, {it}, std::move(out),
                     [it, rows = std::move(rows), d](Tape<Real>& t, std::size_t self) {
                       const auto& G = t.grad(self);
                       auto& dT = t.grad(it);
                       for (std::size_t i = 0; i < rows.size(); ++i)
                         for (std::size_t j = 0; j < d; ++j) dT[rows[i] * d + j] += G[i * d + j];
                     });
}

template <class Real>
Var<Real> apply_primitive(Primitive kind, std::span<const Var<Real>> in, const PrimitiveArgs& args) {
  auto arity = [&](std::size_t n) {
    if (in.size() != n) {
      throw ContractError(std::string(primitive_name(kind)) + ": expects " + std::to_string(n) +
                          " inputs, got " + std::to_string(in.size()));
    }
  };
  switch (kind) {
    case Primitive::matmul: arity(2); return matmul(in[0], in[1]);
    case Primitive::add: arity(2); return add(in[0], in[1]);
    case Primitive::sub: arity(2); return sub(in[0], in[1]);
    case Primitive::mul: arity(2); return mul(in[0], in[1]);
    case Primitive::scale: arity(1); return scale(in[0], args.factor);
    case Primitive::exp: arity(1); return exp(in[0]);
    case Primitive::log: arity(1); return log(in[0]);
    case Primitive::relu: arity(1); return relu(in[0]);
    case Primitive::softmax: arity(1); return softmax(in[0]);
    case Primitive::log_softmax: arity(1); return log_softmax(in[0]);
    case Primitive::gather: arity(1); return gather(in[0], std::span<const std::size_t>(args.indices));
    case Primitive::sum: arity(1); return sum(in[0]);
    case Primitive::mean: arity(1); return mean(in[0]);
    case Primitive::concat: return concat(in);
    case Primitive::reshape: arity(1); return reshape(in[0], args.shape);
    case Primitive::transpose: arity(1); return transpose(in[0]);
    case Primitive::embedding:
      arity(1);
      return embedding(in[0], std::span<const std::size_t>(args.indices));
    case Primitive::leaf:
    case Primitive::constant: break;
  }
  throw ContractError(std::string(primitive_name(kind)) + ": not an applicable primitive");
}

namespace {

template <class Real>
double evaluate(const std::function<Var<Real>(Tape<Real>&)>& f) {
  Tape<Real> tape;
  return static_cast<double>(f(tape).item());
}

std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace

template <class Real>
double check_gradients(const std::function<Var<Real>(Tape<Real>&)>& f,
                       std::span<Tensor<Real>* const> params, const GradCheckOptions& options) {
  if (!(options.eps > 0)) throw ContractError("check_gradients: eps must be positive");
  std::vector<bool> saved_flags;
  for (auto* p : params) {
    saved_flags.push_back(p->requires_grad());
    p->set_requires_grad(true);
    p->clear_grad();
  }
  {
    Tape<Real> tape;
    auto loss = f(tape);
    tape.backward(loss);
  }
  const double base_a = evaluate(f);
  const double base_b = evaluate(f);
  if (base_a != base_b) {
    throw OracleError("check_gradients: f is not deterministic across two probes");
  }

  // (tensor, coordinate) pairs to probe.
  std::vector<std::pair<std::size_t, std::size_t>> coords;
  for (std::size_t t = 0; t < params.size(); ++t)
    for (std::size_t i = 0; i < params[t]->numel(); ++i) coords.emplace_back(t, i);
  if (options.max_coords && coords.size() > options.max_coords) {
    // Deterministic partial Fisher-Yates.
    std::uint64_t state = options.coord_seed;
    for (std::size_t i = 0; i < options.max_coords; ++i) {
      state += 0x9E3779B97F4A7C15ULL;
      const std::size_t j = i + mix64(state) % (coords.size() - i);
      std::swap(coords[i], coords[j]);
    }
    coords.resize(options.max_coords);
  }

  double worst = 0;
  for (auto [t, i] : coords) {
    Tensor<Real>& p = *params[t];
    const double analytic = p.has_grad() ? static_cast<double>(p.grad()[i]) : 0.0;
    const Real original = p[i];
    p[i] = static_cast<Real>(static_cast<double>(original) + options.eps);
    const double up = evaluate(f);
    p[i] = static_cast<Real>(static_cast<double>(original) - options.eps);
    const double down = evaluate(f);
    p[i] = original;
    const double numeric = (up - down) / (2 * options.eps);
    worst = std::max(worst, std::abs(analytic - numeric) / std::max(1.0, std::abs(analytic)));
  }
  for (std::size_t t = 0; t < params.size(); ++t) {
    params[t]->set_requires_grad(saved_flags[t]);
    params[t]->clear_grad();
  }
  return worst;
}

template <class Real>
double check_gradients(const ScalarFn<Real>& f, const Tensor<Real>& x, double eps) {
  Tensor<Real> probe = x;
  std::function<Var<Real>(Tape<Real>&)> bound = [&](Tape<Real>& tape) {
    return f(tape, tape.parameter(probe));
  };
  Tensor<Real>* ptr = &probe;
  GradCheckOptions options;
  options.eps = eps;
  return check_gradients<Real>(bound, std::span<Tensor<Real>* const>(&ptr, 1), options);
}

#define VOGUE_INSTANTIATE_AD(R)                                                              \
  template class Tape<R>;                                                                    \
  template Var<R> matmul(const Var<R>&, const Var<R>&);                                      \
  template Var<R> add(const Var<R>&, const Var<R>&);                                         \
  template Var<R> sub(const Var<R>&, const Var<R>&);                                         \
  template Var<R> mul(const Var<R>&, const Var<R>&);                                         \
  template Var<R> scale(const Var<R>&, double);                                              \
  template Var<R> exp(const Var<R>&);                                                        \
  template Var<R> log(const Var<R>&);                                                        \
  template Var<R> relu(const Var<R>&);                                                       \
  template Var<R> softmax(const Var<R>&);                                                    \
  template Var<R> log_softmax(const Var<R>&);                                                \
  template Var<R> gather(const Var<R>&, std::span<const std::size_t>);                       \
  template Var<R> sum(const Var<R>&);                                                        \
  template Var<R> mean(const Var<R>&);                                                       \
  template Var<R> concat(std::span<const Var<R>>);                                           \
  template Var<R> reshape(const Var<R>&, Shape);                                             \
  template Var<R> transpose(const Var<R>&);                                                  \
  template Var<R> embedding(const Var<R>&, std::span<const std::size_t>);                    \
  template Var<R> apply_primitive(Primitive, std::span<const Var<R>>, const PrimitiveArgs&); \
  template double check_gradients(const std::function<Var<R>(Tape<R>&)>&,                    \
                                  std::span<Tensor<R>* const>, const GradCheckOptions&);     \
  template double check_gradients(const ScalarFn<R>&, const Tensor<R>&, double);

VOGUE_INSTANTIATE_AD(float)
VOGUE_INSTANTIATE_AD(double)

#undef VOGUE_INSTANTIATE_AD

}  // namespace vogue::ad
