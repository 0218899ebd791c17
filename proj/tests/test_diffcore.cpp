#include <cmath>

#include "doctest.h"
#include "support.hpp"
#include "vogue/adamw.hpp"
#include "vogue/error.hpp"
#include "vogue/ops.hpp"

using namespace vogue;
using T = Tensor<double>;
using Tape = ad::Tape<double>;

TEST_CASE("softmax of zeros is uniform") {
  const T out = softmax(T({4}, 0.0));
  for (double p : out.values()) CHECK(p == doctest::Approx(0.25).epsilon(1e-15));
}

TEST_CASE("matmul by identity") {
  const T eye({2, 2}, {1, 0, 0, 1});
  const T b({2, 2}, {3, 1, 2, 5});
  CHECK(matmul(eye, b).values() == b.values());
}

TEST_CASE("gather of log_softmax picks ln 0.5") {
  const std::size_t idx[] = {0};
  const T out = gather(log_softmax(T({1, 2}, {1, 1})), idx);
  CHECK(out[0] == doctest::Approx(std::log(0.5)).epsilon(1e-14));
  CHECK(out[0] == doctest::Approx(-0.6931).epsilon(1e-4));
}

TEST_CASE("shape mismatch names the primitive and both shapes") {
  try {
    matmul(T({2, 3}), T({2, 3}));
    FAIL("expected ShapeError");
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("matmul") != std::string::npos);
    CHECK(msg.find("[2,3]") != std::string::npos);
  }
  CHECK_THROWS_AS(add(T({2, 3}), T({2})), ShapeError);
}

TEST_CASE("log of a non-positive input is a numeric error") {
  CHECK_THROWS_AS(vogue::log(T({2}, {1.0, 0.0})), NumericError);
  CHECK_THROWS_AS(vogue::exp(T({1}, {1000.0})), NumericError);
}

TEST_CASE("backward of sum gives ones") {
  RngStream rng(1);
  T x = vt::random_tensor({3, 2}, rng);
  x.set_requires_grad(true);
  Tape tape;
  tape.backward(sum(tape.parameter(x)));
  for (double g : x.grad()) CHECK(g == 1.0);
}

TEST_CASE("backward of mean of squares") {
  T x({3}, {1, 2, 3});
  x.set_requires_grad(true);
  Tape tape;
  auto v = tape.parameter(x);
  tape.backward(mean(mul(v, v)));
  CHECK(x.grad()[0] == doctest::Approx(2.0 / 3));
  CHECK(x.grad()[1] == doctest::Approx(4.0 / 3));
  CHECK(x.grad()[2] == doctest::Approx(2.0));
}

TEST_CASE("constant loss populates no gradients") {
  T x({2}, {1, 2});
  x.set_requires_grad(true);
  Tape tape;
  tape.parameter(x);
  tape.backward(tape.constant(T::scalar(3.0)));
  CHECK_FALSE(x.has_grad());
}

TEST_CASE("backward contract errors") {
  T x({2}, {1, 2});
  x.set_requires_grad(true);
  Tape tape;
  auto v = tape.parameter(x);
  CHECK_THROWS_AS(tape.backward(v), ContractError);
  auto s = sum(v);
  tape.backward(s);
  CHECK_THROWS_AS(tape.backward(s), ReuseError);
}

TEST_CASE("gradients accumulate across backward calls until cleared") {
  RngStream rng(7);
  T x = vt::random_tensor({4}, rng);
  x.set_requires_grad(true);
  // d/dx [sum(x*x) + sum(exp(x))] from two tapes equals one tape over the sum.
  {
    Tape a;
    auto v = a.parameter(x);
    a.backward(sum(mul(v, v)));
  }
  {
    Tape b;
    b.backward(sum(vogue::ad::exp(b.parameter(x))));
  }
  const std::vector<double> split(x.grad().begin(), x.grad().end());
  x.clear_grad();
  {
    Tape c;
    auto v = c.parameter(x);
    c.backward(add(sum(mul(v, v)), sum(vogue::ad::exp(v))));
  }
  for (std::size_t i = 0; i < 4; ++i) CHECK(x.grad()[i] == doctest::Approx(split[i]).epsilon(1e-14));
}

TEST_CASE("softmax rows sum to one and log_softmax matches log(softmax)") {
  RngStream rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t rows = 1 + rng.uniform_index(4), cols = 1 + rng.uniform_index(8);
    const T x = vt::random_tensor({rows, cols}, rng, -20, 20);
    const T p = softmax(x), lp = log_softmax(x);
    for (std::size_t r = 0; r < rows; ++r) {
      double s = 0;
      for (std::size_t c = 0; c < cols; ++c) {
        s += p[r * cols + c];
        if (p[r * cols + c] > 1e-300) CHECK(std::abs(std::log(p[r * cols + c]) - lp[r * cols + c]) < 1e-6);
      }
      CHECK(std::abs(s - 1.0) < 1e-6);
    }
  }
}

TEST_CASE("check_gradients on sum of squares") {
  RngStream rng(11);
  const T x = vt::random_tensor({5}, rng);
  ad::ScalarFn<double> f = [](Tape&, const ad::Var<double>& v) { return sum(mul(v, v)); };
  CHECK(ad::check_gradients<double>(f, x, 1e-4) < 1e-6);
}

TEST_CASE("check_gradients of a constant function is zero") {
  const T x({3}, {1, 2, 3});
  ad::ScalarFn<double> f = [](Tape& t, const ad::Var<double>&) { return t.constant(T::scalar(2.0)); };
  CHECK(ad::check_gradients<double>(f, x, 1e-4) == 0.0);
}

TEST_CASE("check_gradients refuses a nondeterministic function") {
  const T x({2}, {1, 2});
  int calls = 0;
  ad::ScalarFn<double> f = [&](Tape&, const ad::Var<double>& v) { return scale(sum(v), 1.0 + 1e-3 * ++calls); };
  CHECK_THROWS_AS(ad::check_gradients<double>(f, x, 1e-4), OracleError);
}

TEST_CASE("full policy NLL on a 3-token response passes the gradient check") {
  RngStream rng(5);
  PolicyConfig cfg;
  CHECK(vt::policy_nll_case(cfg, rng, 3, 400) < 1e-5);
  cfg.architecture = Architecture::recurrent_gate;
  CHECK(vt::policy_nll_case(cfg, rng, 3, 400) < 1e-5);
}

TEST_CASE("every primitive passes 100 randomized gradient checks in f64") {
  RngStream root(2024);
  for (Primitive kind : all_primitives()) {
    CAPTURE(primitive_name(kind));
    RngStream rng = root.derive(primitive_name(kind));
    double worst = 0;
    for (int i = 0; i < 100; ++i) worst = std::max(worst, vt::primitive_case(kind, rng));
    CHECK(worst <= 1e-5);
  }
}

TEST_CASE("adamw: zero gradient and zero decay leave params unchanged") {
  TensorMap<double> p{{"w", T({2}, {1.5, -2.0})}};
  p.at("w").accumulate_grad(std::vector<double>{0.0, 0.0});
  AdamWState<double> st;
  AdamWConfig cfg;
  cfg.lr = 0.1;
  cfg.weight_decay = 0;
  adamw_step(p, st, cfg);
  CHECK(p.at("w")[0] == 1.5);
  CHECK(p.at("w")[1] == -2.0);
  CHECK(st.step == 1);
}

TEST_CASE("adamw: first step moves by about lr in the gradient sign") {
  TensorMap<double> p{{"w", T::scalar(1.0)}};
  p.at("w").accumulate_grad(std::vector<double>{1.0});
  AdamWState<double> st;
  AdamWConfig cfg;
  cfg.lr = 0.1;
  cfg.weight_decay = 0;
  adamw_step(p, st, cfg);
  CHECK(p.at("w").item() == doctest::Approx(0.9).epsilon(1e-6));
}

TEST_CASE("adamw: decoupled decay alone") {
  TensorMap<double> p{{"w", T::scalar(1.0)}};
  AdamWState<double> st;
  AdamWConfig cfg;
  cfg.lr = 0.1;
  cfg.weight_decay = 0.01;
  adamw_step(p, st, cfg);  // no gradient slot counts as a zero gradient
  CHECK(p.at("w").item() == doctest::Approx(0.999).epsilon(1e-12));
}

TEST_CASE("adamw: lr = 0 leaves params bit-identical and counts the step") {
  RngStream rng(9);
  TensorMap<double> p{{"a", vt::random_tensor({3, 3}, rng)}, {"b", vt::random_tensor({4}, rng)}};
  const auto before = p;
  for (auto& [n, t] : p) t.accumulate_grad(vt::random_tensor(t.shape(), rng).values());
  AdamWState<double> st;
  AdamWConfig cfg;
  cfg.lr = 0;
  for (int i = 0; i < 3; ++i) adamw_step(p, st, cfg);
  CHECK(st.step == 3);
  for (const auto& [n, t] : p) CHECK(t.values() == before.at(n).values());
}

TEST_CASE("adamw: state shape mismatch is a shape error") {
  TensorMap<double> p{{"w", T({2})}};
  AdamWState<double> st;
  st.m["w"] = T({3});
  st.v["w"] = T({3});
  CHECK_THROWS_AS(adamw_step(p, st, AdamWConfig{}), ShapeError);
  AdamWConfig bad;
  bad.lr = -1;
  CHECK_THROWS_AS(validate(bad), ContractError);
}
