#include <cmath>

#include "doctest.h"
#include "support.hpp"
#include "vogue/error.hpp"
#include "vogue/policy.hpp"
#include "vogue/vocab.hpp"

using namespace vogue;
using P = PolicyParams<double>;

namespace {

Image constant_image(const PolicyConfig& c, double v) {
  return Image(c.image_height, c.image_width, c.image_channels, v);
}

PolicyConfig with_arch(Architecture a) {
  PolicyConfig c;
  c.architecture = a;
  return c;
}

}  // namespace

TEST_CASE("default policy stays under 100k parameters") {
  const auto p = init_params<float>(PolicyConfig{}, RngStream(0));
  CHECK(parameter_count(p) <= 100000);
  CHECK(p.at("out.w").all_finite());
  for (float w : p.at("out.w").values()) CHECK(w == 0.0f);
  CHECK(parameter_count(init_params<double>(vt::tiny_policy(), RngStream(0))) <= 1000);
}

TEST_CASE("encode_image is deterministic and image-dependent") {
  const PolicyConfig c;
  const P p = init_params<double>(c, RngStream(1));
  const auto a = encode_image(c, p, constant_image(c, 0.3));
  const auto b = encode_image(c, p, constant_image(c, 0.3));
  CHECK(a.values() == b.values());
  CHECK(a.shape() == Shape{c.image_tokens, c.embed_dim});
  CHECK(encode_image(c, p, constant_image(c, 0.0)).values() != encode_image(c, p, constant_image(c, 1.0)).values());
}

TEST_CASE("encode_image input contract") {
  const PolicyConfig c;
  const P p = init_params<double>(c, RngStream(1));
  Image bad = constant_image(c, 0.5);
  bad.pixels[7] = 1.5;
  CHECK_THROWS_AS(encode_image(c, p, bad), ContractError);
  CHECK_THROWS_AS(encode_image(c, p, Image(8, 8, 3, 0.5)), ShapeError);
}

TEST_CASE("encoder gradient passes the finite-difference check") {
  const PolicyConfig c;
  RngStream rng(4);
  P p = vt::randomized_params(c, rng);
  const Image img = vt::random_image(c, rng);
  const auto w = vt::random_tensor({c.image_tokens, c.embed_dim}, rng);
  std::vector<Tensor<double>*> enc;
  for (auto& [name, t] : p)
    if (name.rfind("enc.", 0) == 0) enc.push_back(&t);
  REQUIRE(enc.size() == 4);
  auto f = [&](ad::Tape<double>& tape) {
    ParamVars<double> vars = bind_constants(tape, p);
    for (auto& [name, t] : p)
      if (name.rfind("enc.", 0) == 0) vars[name] = tape.parameter(t);
    return sum(mul(encode_image(tape, vars, c, img), tape.reference(w)));
  };
  ad::GradCheckOptions opt;
  opt.max_coords = 500;
  CHECK(ad::check_gradients<double>(f, std::span<Tensor<double>* const>(enc), opt) < 1e-5);
}

TEST_CASE("causal masking: changing token t leaves positions <= t untouched") {
  for (auto arch : {Architecture::causal_attention, Architecture::recurrent_gate}) {
    CAPTURE(architecture_name(arch));
    const PolicyConfig c = with_arch(arch);
    RngStream rng(2);
    const P p = vt::randomized_params(c, rng);
    const Image img = vt::random_image(c, rng);
    Tokens base{tok::BOS, tok::Q_COUNT, 2, 7, 9, 11, 3, 4, 12, 5, 1};
    const auto ref = next_token_dists(c, p, img, base);
    REQUIRE(ref.size() == base.size());
    for (std::size_t t = 0; t < base.size(); ++t) {
      Tokens changed = base;
      changed[t] = (base[t] + 5) % c.vocab_size;
      const auto d = next_token_dists(c, p, img, changed);
      for (std::size_t s = 0; s <= t; ++s) CHECK(d[s].probs == ref[s].probs);
      if (t + 1 < base.size()) CHECK(d[t + 1].probs != ref[t + 1].probs);
    }
  }
}

TEST_CASE("zero output projection gives the uniform distribution") {
  const PolicyConfig c;
  const P p = init_params<double>(c, RngStream(3));
  for (const auto& d : next_token_dists(c, p, constant_image(c, 0.5), Tokens{tok::BOS, tok::Q_PARITY, 2})) {
    CHECK(token_entropy(d) == doctest::Approx(std::log(double(c.vocab_size))).epsilon(1e-9));
  }
}

TEST_CASE("context overflow and bad token ids are refused") {
  const PolicyConfig c;
  const P p = init_params<double>(c, RngStream(3));
  Tokens long_seq(c.context_len - c.image_tokens + 2, tok::DIGIT0);
  CHECK_THROWS_AS(next_token_dists(c, p, constant_image(c, 0.5), long_seq), ContractError);
  CHECK_THROWS_AS(next_token_dists(c, p, constant_image(c, 0.5), Tokens{0, 99}), ContractError);
  RngStream rng(1);
  CHECK_THROWS_AS(sample_response(c, p, constant_image(c, 0.5), Tokens{0, 22}, 40, 1.0, rng), ContractError);
}

TEST_CASE("summed log-prob of a target passes the gradient check on 5 random pairs") {
  RngStream rng(8);
  for (int i = 0; i < 5; ++i) {
    for (auto arch : {Architecture::causal_attention, Architecture::recurrent_gate}) {
      CHECK(vt::policy_nll_case(with_arch(arch), rng, 6, 200) < 1e-5);
    }
  }
}

TEST_CASE("greedy decoding takes the argmax, lower index on ties") {
  const PolicyConfig c;
  const P p = init_params<double>(c, RngStream(3));
  RngStream rng(1);
  // Uniform logits: every argmax tie resolves to token 0.
  const Response r = sample_response(c, p, constant_image(c, 0.5), Tokens{0, 22}, 5, 1.0, rng, true);
  CHECK(r.tokens == Tokens(5, 0));
  CHECK(rng.counter() == 0);
}

TEST_CASE("recorded log-probs match teacher-forced re-evaluation") {
  const PolicyConfig c;
  RngStream rng(6);
  const P p = vt::randomized_params(c, rng);
  const Image img = vt::random_image(c, rng);
  const Tokens q{tok::BOS, tok::Q_MAJORITY};
  for (int i = 0; i < 10; ++i) {
    RngStream s = rng.derive("sample", i);
    const Response r = sample_response(c, p, img, q, 10, 1.0, s);
    REQUIRE(r.log_probs.size() == r.tokens.size());
    Tokens seq = q;
    seq.insert(seq.end(), r.tokens.begin(), r.tokens.end());
    const auto d = next_token_dists(c, p, encode_image(c, p, img), seq, q.size());
    for (std::size_t t = 0; t < r.tokens.size(); ++t) {
      CHECK(std::abs(d[t].log_probs[r.tokens[t]] - r.log_probs[t]) < 1e-6);
      CHECK(std::abs(token_entropy(d[t]) - r.entropies[t]) < 1e-6);
    }
  }
}

TEST_CASE("sibling streams give different samples from a near-uniform policy") {
  const PolicyConfig c;
  const P p = init_params<double>(c, RngStream(3));
  const RngStream root(10);
  const Image img = constant_image(c, 0.5);
  int differ = 0;
  const int trials = 500;
  for (int i = 0; i < trials; ++i) {
    RngStream a = root.derive("pair", i).derive("a"), b = root.derive("pair", i).derive("b");
    differ += sample_response(c, p, img, Tokens{0, 22}, 8, 1.0, a).tokens !=
              sample_response(c, p, img, Tokens{0, 22}, 8, 1.0, b).tokens;
  }
  CHECK(differ > 0.99 * trials);
}

TEST_CASE("token entropy cases") {
  CHECK(token_entropy(make_token_dist({0, 0, 0, 0})) == doctest::Approx(std::log(4.0)).epsilon(1e-12));
  const TokenDist one_hot{{1, 0, 0, 0}, {0, -INFINITY, -INFINITY, -INFINITY}};
  // 0 * log 0 is taken as 0, so skip the -inf entries explicitly.
  double h = 0;
  for (std::size_t i = 0; i < 4; ++i)
    if (one_hot.probs[i] > 0) h -= one_hot.probs[i] * one_hot.log_probs[i];
  CHECK(h == 0.0);
  CHECK(token_entropy(make_token_dist({1000, 0, 0, 0})) < 1e-6);
  const double e = 1e-8;
  const TokenDist near_half{{0.5, 0.5, e, e}, {std::log(0.5), std::log(0.5), std::log(e), std::log(e)}};
  CHECK(std::abs(token_entropy(near_half) - std::log(2.0)) < 1e-6);
}

TEST_CASE("probability floor keeps every entry at or above half the floor") {
  RngStream rng(12);
  for (int i = 0; i < 200; ++i) {
    std::vector<double> logits(26);
    for (auto& l : logits) l = rng.uniform(-80, 80);
    const TokenDist d = make_token_dist(logits);
    double s = 0;
    for (std::size_t k = 0; k < 26; ++k) {
      CHECK(d.probs[k] >= kProbFloor / 2);
      CHECK(std::isfinite(d.log_probs[k]));
      CHECK(std::abs(std::log(d.probs[k]) - d.log_probs[k]) < 1e-6);
      s += d.probs[k];
    }
    CHECK(std::abs(s - 1) < 1e-6);
    const double h = token_entropy(d);
    CHECK(h >= 0);
    CHECK(h <= std::log(26.0) + 1e-12);
  }
}

TEST_CASE("snapshot is a bitwise copy that does not alias") {
  const PolicyConfig c;
  P p = vt::randomized_params(c, RngStream(4));
  const P snap = snapshot(p);
  P restored = snapshot(snap);
  for (const auto& [name, t] : p) CHECK(restored.at(name).values() == t.values());
  p.at("out.w")[0] += 1.0;
  CHECK(snap.at("out.w")[0] != p.at("out.w")[0]);
}

TEST_CASE("policy config validation") {
  PolicyConfig c;
  c.heads = 3;
  CHECK_THROWS_AS(validate(c), ConfigError);
  c = PolicyConfig{};
  c.vocab_size = 10;
  CHECK_THROWS_AS(validate(c), ConfigError);
  CHECK(parse_architecture("recurrent-gate") == Architecture::recurrent_gate);
  CHECK_THROWS_AS(parse_architecture("lstm"), ConfigError);
}
