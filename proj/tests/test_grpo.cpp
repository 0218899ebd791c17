#include <cmath>
#include <numeric>

#include "doctest.h"
#include "support.hpp"
#include "vogue/error.hpp"
#include "vogue/grpo.hpp"

using namespace vogue;
using P = PolicyParams<double>;

namespace {

std::vector<double> norm(std::vector<double> r, bool sample = false) { return normalize_advantages(r, sample); }

// A handful of samples from the tiny policy on 4x4 shape-count tasks.
std::vector<TrainSample> tiny_samples(const PolicyConfig& c, const P& params, RngStream rng, std::size_t n,
                                      std::size_t len = 5) {
  std::vector<TrainSample> out;
  for (std::size_t i = 0; i < n; ++i) {
    TrainSample s;
    RngStream r = rng.derive("s", i);
    s.image = std::make_shared<const Image>(vt::random_image(c, r));
    s.question = {tok::BOS, tok::Q_COUNT, tok::RED};
    s.response = sample_response(c, params, *s.image, s.question, len, 1.0, r);
    for (std::size_t t = 0; t < s.response.length(); ++t) s.advantages.push_back(r.uniform(-1.5, 1.5));
    s.bonus_e.assign(s.response.length(), 0.0);
    out.push_back(std::move(s));
  }
  return out;
}

std::map<std::string, std::vector<double>> grads_of(P& params) {
  std::map<std::string, std::vector<double>> g;
  for (auto& [name, t] : params) {
    g[name] = t.has_grad() ? std::vector<double>(t.grad().begin(), t.grad().end()) : std::vector<double>(t.numel(), 0.0);
  }
  return g;
}

// Gradient of the surrogate summed over samples (one tape each, as in the update).
std::map<std::string, std::vector<double>> surrogate_grads(const PolicyConfig& c, P& params,
                                                           const std::vector<TrainSample>& samples, double eps) {
  double tokens = 0;
  for (const auto& s : samples) tokens += s.response.length();
  for (auto& [n, t] : params) t.clear_grad();
  for (const auto& s : samples) {
    ad::Tape<double> tape;
    auto vars = bind_parameters(tape, params);
    const TrainSample* one[] = {&s};
    tape.backward(surrogate_objective(tape, vars, c, std::span<const TrainSample* const>(one), eps, tokens));
  }
  auto g = grads_of(params);
  for (auto& [n, t] : params) t.clear_grad();
  return g;
}

}  // namespace

TEST_CASE("normalize_advantages examples") {
  CHECK(norm({1, 0, 0, 1}) == std::vector<double>{1, -1, -1, 1});
  CHECK(norm({1, 1, 1}) == std::vector<double>{0, 0, 0});
  const auto a = norm({0.1, 0.9});
  CHECK(a[0] == doctest::Approx(-1.0));
  CHECK(a[1] == doctest::Approx(1.0));
  CHECK_THROWS_AS(norm({1.0}), ContractError);
}

TEST_CASE("normalized groups have mean 0 and population std 1") {
  RngStream rng(1);
  for (int i = 0; i < 300; ++i) {
    std::vector<double> r(2 + rng.uniform_index(15));
    for (auto& x : r) x = rng.bernoulli(0.5) ? 1.0 : (rng.bernoulli(0.5) ? 0.1 : 0.0);
    const auto a = norm(r);
    const double m = std::accumulate(a.begin(), a.end(), 0.0) / a.size();
    double v = 0;
    for (double x : a) v += (x - m) * (x - m);
    v /= a.size();
    if (std::all_of(a.begin(), a.end(), [](double x) { return x == 0.0; })) continue;
    CHECK(std::abs(m) < 1e-6);
    CHECK(std::abs(std::sqrt(v) - 1) < 1e-6);
  }
  // Sample std behind the switch: [1,0,0,1] has sample variance 1/3.
  const auto s = norm({1, 0, 0, 1}, true);
  CHECK(s[0] == doctest::Approx(0.5 / std::sqrt(1.0 / 3.0)));
}

TEST_CASE("token ratios") {
  const double lp[] = {-1.0, -2.0, -0.5};
  CHECK(token_ratios(lp, lp) == std::vector<double>{1, 1, 1});
  const double a[] = {std::log(2.0) - 1.0};
  const double b[] = {-1.0};
  CHECK(token_ratios(a, b)[0] == doctest::Approx(2.0).epsilon(1e-14));
  const double big[] = {0.0, 800.0};
  const double zero[] = {0.0, 0.0};
  try {
    token_ratios(big, zero);
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("token 1") != std::string::npos);
  }
  const double short_lp[] = {0.0};
  CHECK_THROWS_AS(token_ratios(short_lp, zero), ShapeError);
}

TEST_CASE("gradient of ratio times a constant matches finite differences") {
  RngStream rng(2);
  const auto c = vt::tiny_policy();
  P params = vt::randomized_params(c, rng);
  const Image img = vt::random_image(c, rng);
  Tokens seq{tok::BOS, tok::Q_COUNT, tok::RED, 2, 9, 3, 4, 10};
  std::vector<double> old(seq.size() - 3);
  for (auto& o : old) o = rng.uniform(-4, -1);
  const auto w = vt::random_tensor({old.size()}, rng);
  std::vector<Tensor<double>*> ptrs;
  for (auto& [n, t] : params) ptrs.push_back(&t);
  auto f = [&](ad::Tape<double>& tape) {
    auto vars = bind_parameters(tape, params);
    auto lp = sequence_log_probs(tape, vars, c, encode_image(tape, vars, c, img), seq, 3);
    return sum(mul(token_ratios(tape, lp, old), tape.reference(w)));
  };
  CHECK(ad::check_gradients<double>(f, std::span<Tensor<double>* const>(ptrs), {}) < 1e-5);
}

TEST_CASE("clipped term examples") {
  CHECK(clipped_term(1.5, 1.0, 0.2) == doctest::Approx(1.2));
  CHECK(clipped_term(0.5, -1.0, 0.2) == doctest::Approx(-0.8));
  for (double a : {-2.0, -0.3, 0.0, 0.7, 3.0}) CHECK(clipped_term(1.0, a, 0.2) == a);
  const double rho[] = {1.5, 0.5};
  const double adv[] = {1.0, -1.0};
  CHECK(clipped_surrogate(rho, adv, 0.2) == doctest::Approx(0.2));
}

TEST_CASE("clip saturation against the improving direction kills the gradient") {
  RngStream rng(3);
  const auto c = vt::tiny_policy();
  P params = vt::randomized_params(c, rng);
  auto samples = tiny_samples(c, params, rng, 3);
  // Old log-probs 0.5 nats below current: rho = e^0.5 > 1 + eps.
  for (auto& s : samples) {
    for (auto& lp : s.response.log_probs) lp -= 0.5;
    s.advantages.assign(s.response.length(), 1.0);
  }
  for (const auto& [n, g] : surrogate_grads(c, params, samples, 0.2))
    for (double x : g) CHECK(x == 0.0);
  // Same ratios with negative advantages sit on the unclipped side.
  for (auto& s : samples) s.advantages.assign(s.response.length(), -1.0);
  double total = 0;
  for (const auto& [n, g] : surrogate_grads(c, params, samples, 0.2))
    for (double x : g) total += std::abs(x);
  CHECK(total > 0);
}

TEST_CASE("at rho = 1 the surrogate gradient is the vanilla policy gradient") {
  RngStream rng(4);
  const auto c = vt::tiny_policy();
  P params = vt::randomized_params(c, rng);
  const auto samples = tiny_samples(c, params, rng, 4);
  const auto g = surrogate_grads(c, params, samples, 0.2);
  // Oracle: (1/N) sum_t A_t grad log pi_t.
  double tokens = 0;
  for (const auto& s : samples) tokens += s.response.length();
  for (auto& [n, t] : params) t.clear_grad();
  for (const auto& s : samples) {
    ad::Tape<double> tape;
    auto vars = bind_parameters(tape, params);
    Tokens seq = s.question;
    seq.insert(seq.end(), s.response.tokens.begin(), s.response.tokens.end());
    auto lp = sequence_log_probs(tape, vars, c, encode_image(tape, vars, c, *s.image), seq, s.question.size());
    Tensor<double> a({s.advantages.size()}, s.advantages);
    tape.backward(scale(sum(mul(lp, tape.constant(a))), 1.0 / tokens));
  }
  const auto ref = grads_of(params);
  for (const auto& [n, gv] : g)
    for (std::size_t i = 0; i < gv.size(); ++i) CHECK(std::abs(gv[i] - ref.at(n)[i]) < 1e-9);
}

TEST_CASE("zero advantages: params move only by weight decay") {
  RngStream rng(5);
  const auto c = vt::tiny_policy();
  P params = vt::randomized_params(c, rng);
  auto samples = tiny_samples(c, params, rng, 4);
  for (auto& s : samples) s.advantages.assign(s.response.length(), 0.0);
  AdamWConfig opt;
  opt.lr = 0.05;
  opt.weight_decay = 0.01;
  auto state = make_train_state(c, snapshot(params), opt);
  GrpoConfig cfg;
  policy_update(state, std::span<const TrainSample>(samples), cfg);
  for (const auto& [n, t] : state.params)
    for (std::size_t i = 0; i < t.numel(); ++i) CHECK(t[i] == doctest::Approx(params.at(n)[i] * (1 - 0.05 * 0.01)).epsilon(1e-13));
}

TEST_CASE("grpo step with lr = 0 leaves params unchanged and the objective finite") {
  const auto c = vt::tiny_policy();
  AdamWConfig opt;
  opt.lr = 0;
  auto state = make_train_state(c, vt::randomized_params(c, RngStream(6)), opt);
  const P before = snapshot(state.params);
  RngStream rng(7);
  std::vector<TaskInstance> batch;
  for (int i = 0; i < 3; ++i) batch.push_back(generate_task(Family::shape_count, 2, rng, {4, 4, 0.0}));
  GrpoConfig cfg;
  cfg.group_size = 4;
  cfg.max_response_len = 6;
  const StepMetrics m = grpo_train_step(state, batch, cfg, ShapingConfig{}, RngStream(1), 0);
  CHECK(std::isfinite(m.objective));
  CHECK(m.mean_ratio == doctest::Approx(1.0).epsilon(1e-9));
  for (const auto& [n, t] : state.params) CHECK(t.values() == before.at(n).values());
}

TEST_CASE("snapshot isolation and old-policy log-probs") {
  const auto c = vt::tiny_policy();
  AdamWConfig opt;
  opt.lr = 0.05;
  auto state = make_train_state(c, vt::randomized_params(c, RngStream(8)), opt);
  RngStream rng(9);
  std::vector<TaskInstance> batch;
  for (int i = 0; i < 3; ++i) batch.push_back(generate_task(Family::cell_parity, 2, rng, {4, 4, 0.0}));
  GrpoConfig cfg;
  cfg.group_size = 4;
  cfg.max_response_len = 6;
  cfg.snapshot_period = 100;  // keep old frozen across the steps below
  const P frozen = snapshot(state.old);
  const Image probe = batch[0].image;
  const auto before = next_token_dists(c, state.old, probe, Tokens{0, tok::Q_PARITY, 2});
  for (std::uint64_t s = 0; s < 10; ++s) grpo_train_step(state, batch, cfg, ShapingConfig{}, RngStream(1), s);
  CHECK(next_token_dists(c, state.old, probe, Tokens{0, tok::Q_PARITY, 2})[2].probs == before[2].probs);
  for (const auto& [n, t] : frozen) CHECK(state.old.at(n).values() == t.values());
  // Rollout log-probs come from old, and now differ from the trained params.
  const RolloutGroup g = sample_group(c, state.old, probe, batch[0], cfg, RngStream(3));
  Tokens seq = batch[0].question;
  seq.insert(seq.end(), g.responses[0].tokens.begin(), g.responses[0].tokens.end());
  const auto d_old = next_token_dists(c, state.old, encode_image(c, state.old, probe), seq, batch[0].question.size());
  const auto d_new =
      next_token_dists(c, state.params, encode_image(c, state.params, probe), seq, batch[0].question.size());
  const std::size_t q = batch[0].question.size();
  double gap = 0;
  for (std::size_t t = 0; t < g.responses[0].length(); ++t) {
    CHECK(std::abs(d_old[t].log_probs[seq[t + q]] - g.responses[0].log_probs[t]) < 1e-9);
    gap += std::abs(d_new[t].log_probs[seq[t + q]] - g.responses[0].log_probs[t]);
  }
  CHECK(gap > 1e-6);
}

TEST_CASE("update rolls back on a numeric failure") {
  const auto c = vt::tiny_policy();
  auto state = make_train_state(c, vt::randomized_params(c, RngStream(10)), AdamWConfig{});
  RngStream rng(11);
  auto samples = tiny_samples(c, state.params, rng, 2);
  samples[1].response.log_probs[0] = -1e6;  // ratio overflows
  const P before = snapshot(state.params);
  CHECK_THROWS_AS(policy_update(state, std::span<const TrainSample>(samples), GrpoConfig{}), NumericError);
  for (const auto& [n, t] : state.params) CHECK(t.values() == before.at(n).values());
  CHECK(state.adam.step == 0);
}
