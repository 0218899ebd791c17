#include "vogue/policy.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "vogue/error.hpp"
#include "vogue/ops.hpp"

namespace vogue {

std::string_view architecture_name(Architecture a) {
  switch (a) {
    case Architecture::causal_attention: return "causal-attention-1-layer";
    case Architecture::recurrent_gate: return "recurrent-gate";
  }
  return "?";
}

Architecture parse_architecture(std::string_view name) {
  if (name == "causal-attention-1-layer") return Architecture::causal_attention;
  if (name == "recurrent-gate") return Architecture::recurrent_gate;
  throw ConfigError("unknown architecture '" + std::string(name) +
                    "' (valid: causal-attention-1-layer, recurrent-gate)");
}

void validate(const PolicyConfig& c) {
  auto positive = [](std::size_t v, const char* name) {
    if (v == 0) throw ConfigError(std::string("policy.") + name + " must be positive");
  };
  positive(c.vocab_size, "vocab_size");
  positive(c.embed_dim, "embed_dim");
  positive(c.heads, "heads");
  positive(c.context_len, "context_len");
  positive(c.mlp_dim, "mlp_dim");
  positive(c.image_height, "image_height");
  positive(c.image_width, "image_width");
  positive(c.image_channels, "image_channels");
  positive(c.image_tokens, "image_tokens");
  positive(c.image_hidden, "image_hidden");
  if (c.vocab_size < kVocabSize) {
    throw ConfigError("policy.vocab_size must cover the " + std::to_string(kVocabSize) + " environment tokens");
  }
  if (c.embed_dim % c.heads != 0) throw ConfigError("policy.embed_dim must be divisible by policy.heads");
  if (c.image_tokens >= c.context_len) throw ConfigError("policy.context_len must exceed policy.image_tokens");
  if (!(c.temperature > 0)) throw ConfigError("policy.temperature must be positive");
  if (!(c.init_scale >= 0)) throw ConfigError("policy.init_scale must be >= 0");
}

template <class Real>
PolicyParams<Real> init_params(const PolicyConfig& c, RngStream rng) {
  validate(c);
  const std::size_t d = c.embed_dim, dh = d / c.heads;
  const double std = c.init_scale / std::sqrt(static_cast<double>(d));
  PolicyParams<Real> p;
  // Each tensor draws from its own stream so adding a tensor never reshuffles the others.
  auto normal = [&](const std::string& name, Shape shape) {
    Tensor<Real> t(std::move(shape));
    RngStream s = rng.derive(name);
    for (auto& v : t.data()) v = static_cast<Real>(std * s.standard_normal());
    p.emplace(name, std::move(t));
  };
  auto zeros = [&](const std::string& name, Shape shape) { p.emplace(name, Tensor<Real>(std::move(shape))); };

  normal("enc.w1", {c.image_size(), c.image_hidden});
  zeros("enc.b1", {c.image_hidden});
  normal("enc.w2", {c.image_hidden, c.image_tokens * d});
  zeros("enc.b2", {c.image_tokens * d});
  normal("tok_emb", {c.vocab_size, d});
  normal("pos_emb", {c.context_len, d});
  if (c.architecture == Architecture::causal_attention) {
    for (std::size_t h = 0; h < c.heads; ++h) {
      const std::string pre = "attn." + std::to_string(h) + ".";
      normal(pre + "wq", {d, dh});
      normal(pre + "wk", {d, dh});
      normal(pre + "wv", {d, dh});
      normal(pre + "wo", {dh, d});
    }
  } else {
    normal("rec.wg", {d, d});
    zeros("rec.bg", {d});
    normal("rec.wc", {d, d});
    zeros("rec.bc", {d});
  }
  normal("mlp.w1", {d, c.mlp_dim});
  zeros("mlp.b1", {c.mlp_dim});
  normal("mlp.w2", {c.mlp_dim, d});
  zeros("mlp.b2", {d});
  zeros("out.w", {d, c.vocab_size});
  zeros("out.b", {c.vocab_size});
  return p;
}

template <class Real>
PolicyParams<Real> snapshot(const PolicyParams<Real>& params) {
  PolicyParams<Real> copy;
  for (const auto& [name, t] : params) {
    Tensor<Real> fresh(t.shape(), t.values());
    fresh.set_requires_grad(t.requires_grad());
    copy.emplace(name, std::move(fresh));
  }
  return copy;
}

TokenDist make_token_dist(const std::vector<double>& logits, double temperature) {
  if (!(temperature > 0)) throw ContractError("token dist: temperature must be positive");
  const std::size_t n = logits.size();
  TokenDist d;
  d.probs.resize(n);
  d.log_probs.resize(n);
  const double inv_t = 1.0 / temperature;
  double hi = -INFINITY;
  for (double l : logits) hi = std::max(hi, l * inv_t);
  double total = 0;
  for (std::size_t i = 0; i < n; ++i) {
    d.probs[i] = std::exp(logits[i] * inv_t - hi);
    total += d.probs[i];
  }
  double floored = 0;
  for (auto& p : d.probs) {
    p = std::max(p / total, kProbFloor);
    floored += p;
  }
  for (std::size_t i = 0; i < n; ++i) {
    d.probs[i] /= floored;
    d.log_probs[i] = std::log(d.probs[i]);
  }
  return d;
}

double token_entropy(const TokenDist& dist) {
  double h = 0;
  for (std::size_t i = 0; i < dist.probs.size(); ++i) h -= dist.probs[i] * dist.log_probs[i];
  return std::max(h, 0.0);
}

namespace {

template <class Real>
Tensor<Real> image_row(const PolicyConfig& c, const Image& image) {
  if (image.height != c.image_height || image.width != c.image_width || image.channels != c.image_channels) {
    throw ShapeError("policy: image is " + std::to_string(image.height) + "x" + std::to_string(image.width) +
                     "x" + std::to_string(image.channels) + ", config expects " +
                     std::to_string(c.image_height) + "x" + std::to_string(c.image_width) + "x" +
                     std::to_string(c.image_channels));
  }
  Tensor<Real> row({1, c.image_size()});
  for (std::size_t i = 0; i < image.pixels.size(); ++i) {
    const double v = image.pixels[i];
    if (!(v >= 0.0 && v <= 1.0)) {
      throw ContractError("policy: pixel " + std::to_string(i) + " = " + std::to_string(v) + " outside [0,1]");
    }
    row[i] = static_cast<Real>(v);
  }
  return row;
}

// The network is written once over a binder: EagerBinder yields Tensors,
// TapeBinder yields Vars. Op names resolve by argument-dependent lookup.
template <class Real>
struct EagerBinder {
  using Value = Tensor<Real>;
  const PolicyParams<Real>& params;

  const Tensor<Real>& param(const std::string& name) const {
    auto it = params.find(name);
    if (it == params.end()) throw ContractError("policy: missing parameter '" + name + "'");
    return it->second;
  }
  Tensor<Real> constant(Tensor<Real> t) const { return t; }
  Tensor<Real> cat(const Tensor<Real>& a, const Tensor<Real>& b) const {
    const Tensor<Real>* parts[] = {&a, &b};
    return vogue::concat<Real>(std::span<const Tensor<Real>* const>(parts));
  }
  Tensor<Real> cat(const std::vector<Tensor<Real>>& xs) const {
    std::vector<const Tensor<Real>*> parts;
    for (const auto& x : xs) parts.push_back(&x);
    return vogue::concat<Real>(std::span<const Tensor<Real>* const>(parts));
  }
};

template <class Real>
struct TapeBinder {
  using Value = ad::Var<Real>;
  ad::Tape<Real>& tape;
  const ParamVars<Real>& vars;

  ad::Var<Real> param(const std::string& name) const {
    auto it = vars.find(name);
    if (it == vars.end()) throw ContractError("policy: missing parameter '" + name + "'");
    return it->second;
  }
  ad::Var<Real> constant(Tensor<Real> t) const { return tape.constant(std::move(t)); }
  ad::Var<Real> cat(const ad::Var<Real>& a, const ad::Var<Real>& b) const {
    const ad::Var<Real> parts[] = {a, b};
    return ad::concat<Real>(std::span<const ad::Var<Real>>(parts));
  }
  ad::Var<Real> cat(const std::vector<ad::Var<Real>>& xs) const {
    return ad::concat<Real>(std::span<const ad::Var<Real>>(xs));
  }
};

template <class Real, class B>
typename B::Value encoder(const B& b, const PolicyConfig& c, Tensor<Real> row) {
  const auto& w1 = b.param("enc.w1");
  const auto& b1 = b.param("enc.b1");
  const auto& w2 = b.param("enc.w2");
  const auto& b2 = b.param("enc.b2");
  auto x = b.constant(std::move(row));
  auto h = relu(add(matmul(x, w1), b1));
  auto z = add(matmul(h, w2), b2);
  return reshape(z, Shape{c.image_tokens, c.embed_dim});
}

// Logits [rows, V] for the given positions of the sequence image ++ ids.
template <class Real, class B>
typename B::Value decoder(const B& b, const PolicyConfig& c, const typename B::Value& image_embedding,
                          const Tokens& ids, const std::vector<std::size_t>& rows) {
  const std::size_t n = c.image_tokens + ids.size();
  if (n > c.context_len) {
    throw ContractError("policy: context overflow, " + std::to_string(n) + " positions > context_len " +
                        std::to_string(c.context_len));
  }
  for (auto t : ids) {
    if (t >= c.vocab_size) throw ContractError("policy: token id " + std::to_string(t) + " outside vocabulary");
  }
  std::vector<std::size_t> positions(n);
  std::iota(positions.begin(), positions.end(), std::size_t{0});

  auto x = ids.empty() ? image_embedding
                       : b.cat(image_embedding, embedding(b.param("tok_emb"), std::span<const std::size_t>(ids)));
  x = add(x, embedding(b.param("pos_emb"), std::span<const std::size_t>(positions)));
  auto xs = embedding(x, std::span<const std::size_t>(rows));

  const std::size_t d = c.embed_dim;
  auto h = xs;
  if (c.architecture == Architecture::causal_attention) {
    const std::size_t dh = d / c.heads;
    Tensor<Real> mask({rows.size(), n});
    for (std::size_t i = 0; i < rows.size(); ++i)
      for (std::size_t j = rows[i] + 1; j < n; ++j) mask[i * n + j] = Real(-1e9);
    auto mask_v = b.constant(std::move(mask));
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
    for (std::size_t head = 0; head < c.heads; ++head) {
      const std::string pre = "attn." + std::to_string(head) + ".";
      auto q = matmul(xs, b.param(pre + "wq"));
      auto k = matmul(x, b.param(pre + "wk"));
      auto v = matmul(x, b.param(pre + "wv"));
      auto scores = add(scale(matmul(q, transpose(k)), inv_sqrt), mask_v);
      auto ctx = matmul(softmax(scores), v);
      h = add(h, matmul(ctx, b.param(pre + "wo")));
    }
  } else {
    // Gated linear recurrence: g = exp(-relu(x Wg + bg)) in (0,1].
    const std::size_t last = *std::max_element(rows.begin(), rows.end());
    auto state = b.constant(Tensor<Real>({1, d}));
    auto ones = b.constant(Tensor<Real>({1, d}, Real(1)));
    std::vector<typename B::Value> states;
    for (std::size_t t = 0; t <= last; ++t) {
      const std::size_t one[] = {t};
      auto xt = embedding(x, std::span<const std::size_t>(one));
      auto g = exp(scale(relu(add(matmul(xt, b.param("rec.wg")), b.param("rec.bg"))), -1.0));
      auto cand = relu(add(matmul(xt, b.param("rec.wc")), b.param("rec.bc")));
      state = add(mul(g, state), mul(sub(ones, g), cand));
      states.push_back(state);
    }
    std::vector<typename B::Value> picked;
    for (auto r : rows) picked.push_back(states[r]);
    h = add(xs, picked.size() == 1 ? picked[0] : b.cat(picked));
  }
  auto m = relu(add(matmul(h, b.param("mlp.w1")), b.param("mlp.b1")));
  h = add(h, add(matmul(m, b.param("mlp.w2")), b.param("mlp.b2")));
  return add(matmul(h, b.param("out.w")), b.param("out.b"));
}

// Positions that carry the distributions of tokens[first..T-1].
std::vector<std::size_t> dist_rows(const PolicyConfig& c, std::size_t first, std::size_t count) {
  std::vector<std::size_t> rows(count);
  for (std::size_t i = 0; i < count; ++i) rows[i] = c.image_tokens - 1 + first + i;
  return rows;
}

Tokens input_ids(const Tokens& tokens) {
  return tokens.empty() ? Tokens{} : Tokens(tokens.begin(), tokens.end() - 1);
}

template <class Real>
std::vector<double> row_logits(const Tensor<Real>& logits, std::size_t row) {
  const std::size_t v = logits.dim(1);
  std::vector<double> out(v);
  for (std::size_t j = 0; j < v; ++j) out[j] = static_cast<double>(logits[row * v + j]);
  return out;
}

}  // namespace

template <class Real>
Tensor<Real> encode_image(const PolicyConfig& c, const PolicyParams<Real>& params, const Image& image) {
  EagerBinder<Real> b{params};
  return encoder<Real>(b, c, image_row<Real>(c, image));
}

template <class Real>
std::vector<TokenDist> next_token_dists(const PolicyConfig& c, const PolicyParams<Real>& params,
                                        const Tensor<Real>& image_embedding, const Tokens& tokens,
                                        std::size_t first, double temperature) {
  if (first >= tokens.size()) return {};
  // The last token is only a target, so decoder() never sees it.
  if (tokens.back() >= c.vocab_size) {
    throw ContractError("policy: token id " + std::to_string(tokens.back()) + " outside vocabulary");
  }
  EagerBinder<Real> b{params};
  auto logits = decoder<Real>(b, c, image_embedding, input_ids(tokens), dist_rows(c, first, tokens.size() - first));
  std::vector<TokenDist> dists;
  for (std::size_t r = 0; r < logits.dim(0); ++r) dists.push_back(make_token_dist(row_logits(logits, r), temperature));
  return dists;
}

template <class Real>
std::vector<TokenDist> next_token_dists(const PolicyConfig& c, const PolicyParams<Real>& params, const Image& image,
                                        const Tokens& tokens) {
  return next_token_dists(c, params, encode_image(c, params, image), tokens, 0, c.temperature);
}

template <class Real>
std::vector<double> next_logits(const PolicyConfig& c, const PolicyParams<Real>& params,
                                const Tensor<Real>& image_embedding, const Tokens& tokens) {
  EagerBinder<Real> b{params};
  const std::vector<std::size_t> rows{c.image_tokens - 1 + tokens.size()};
  return row_logits(decoder<Real>(b, c, image_embedding, tokens, rows), 0);
}

template <class Real>
Response sample_response(const PolicyConfig& c, const PolicyParams<Real>& params, const Tensor<Real>& image_embedding,
                         const Tokens& question, std::size_t max_len, double temperature, RngStream& rng,
                         bool greedy) {
  if (!(temperature > 0)) throw ContractError("sample_response: temperature must be positive");
  if (question.empty()) throw ContractError("sample_response: empty question");
  if (max_len + question.size() + c.image_tokens > c.context_len) {
    throw ContractError("sample_response: context overflow, " + std::to_string(c.image_tokens) + " image + " +
                        std::to_string(question.size()) + " question + " + std::to_string(max_len) +
                        " response positions > context_len " + std::to_string(c.context_len));
  }
  Response r;
  Tokens seq = question;
  while (r.tokens.size() < max_len) {
    const TokenDist dist = make_token_dist(next_logits(c, params, image_embedding, seq), temperature);
    TokenId next;
    if (greedy) {
      next = static_cast<TokenId>(std::max_element(dist.probs.begin(), dist.probs.end()) - dist.probs.begin());
    } else {
      next = rng.categorical(dist.probs);
    }
    r.tokens.push_back(next);
    r.log_probs.push_back(dist.log_probs[next]);
    r.entropies.push_back(token_entropy(dist));
    seq.push_back(next);
    if (next == tok::EOS) break;
  }
  return r;
}

template <class Real>
Response sample_response(const PolicyConfig& c, const PolicyParams<Real>& params, const Image& image,
                         const Tokens& question, std::size_t max_len, double temperature, RngStream& rng,
                         bool greedy) {
  return sample_response(c, params, encode_image(c, params, image), question, max_len, temperature, rng, greedy);
}

template <class Real>
ParamVars<Real> bind_parameters(ad::Tape<Real>& tape, PolicyParams<Real>& params) {
  ParamVars<Real> vars;
  for (auto& [name, t] : params) {
    t.set_requires_grad(true);
    vars.emplace(name, tape.parameter(t));
  }
  return vars;
}

template <class Real>
ParamVars<Real> bind_constants(ad::Tape<Real>& tape, const PolicyParams<Real>& params) {
  ParamVars<Real> vars;
  for (const auto& [name, t] : params) vars.emplace(name, tape.reference(t));
  return vars;
}

template <class Real>
ad::Var<Real> encode_image(ad::Tape<Real>& tape, const ParamVars<Real>& vars, const PolicyConfig& c,
                           const Image& image) {
  TapeBinder<Real> b{tape, vars};
  return encoder<Real>(b, c, image_row<Real>(c, image));
}

template <class Real>
ad::Var<Real> sequence_log_probs(ad::Tape<Real>& tape, const ParamVars<Real>& vars, const PolicyConfig& c,
                                 const ad::Var<Real>& image_embedding, const Tokens& sequence, std::size_t first,
                                 double temperature) {
  if (first >= sequence.size()) throw ContractError("sequence_log_probs: no tokens to score");
  TapeBinder<Real> b{tape, vars};
  auto logits = decoder<Real>(b, c, image_embedding, input_ids(sequence), dist_rows(c, first, sequence.size() - first));
  if (temperature != 1.0) logits = ad::scale(logits, 1.0 / temperature);
  const std::vector<std::size_t> targets(sequence.begin() + static_cast<std::ptrdiff_t>(first), sequence.end());
  return ad::gather(ad::log_softmax(logits), std::span<const std::size_t>(targets));
}

template <class Real>
ad::Var<Real> sequence_nll(ad::Tape<Real>& tape, const ParamVars<Real>& vars, const PolicyConfig& c,
                           const Image& image, const Tokens& sequence, std::size_t first) {
  auto emb = encode_image(tape, vars, c, image);
  return ad::scale(ad::sum(sequence_log_probs(tape, vars, c, emb, sequence, first)), -1.0);
}

#define VOGUE_INSTANTIATE_POLICY(R)                                                                              \
  template PolicyParams<R> init_params(const PolicyConfig&, RngStream);                                          \
  template PolicyParams<R> snapshot(const PolicyParams<R>&);                                                     \
  template Tensor<R> encode_image(const PolicyConfig&, const PolicyParams<R>&, const Image&);                    \
  template std::vector<TokenDist> next_token_dists(const PolicyConfig&, const PolicyParams<R>&, const Tensor<R>&, \
                                                   const Tokens&, std::size_t, double);                          \
  template std::vector<TokenDist> next_token_dists(const PolicyConfig&, const PolicyParams<R>&, const Image&,    \
                                                   const Tokens&);                                               \
  template std::vector<double> next_logits(const PolicyConfig&, const PolicyParams<R>&, const Tensor<R>&,        \
                                           const Tokens&);                                                       \
  template Response sample_response(const PolicyConfig&, const PolicyParams<R>&, const Tensor<R>&, const Tokens&, \
                                    std::size_t, double, RngStream&, bool);                                      \
  template Response sample_response(const PolicyConfig&, const PolicyParams<R>&, const Image&, const Tokens&,    \
                                    std::size_t, double, RngStream&, bool);                                      \
  template ParamVars<R> bind_parameters(ad::Tape<R>&, PolicyParams<R>&);                                         \
  template ParamVars<R> bind_constants(ad::Tape<R>&, const PolicyParams<R>&);                                    \
  template ad::Var<R> encode_image(ad::Tape<R>&, const ParamVars<R>&, const PolicyConfig&, const Image&);        \
  template ad::Var<R> sequence_log_probs(ad::Tape<R>&, const ParamVars<R>&, const PolicyConfig&,                 \
                                         const ad::Var<R>&, const Tokens&, std::size_t, double);                 \
  template ad::Var<R> sequence_nll(ad::Tape<R>&, const ParamVars<R>&, const PolicyConfig&, const Image&,         \
                                   const Tokens&, std::size_t);

VOGUE_INSTANTIATE_POLICY(float)
VOGUE_INSTANTIATE_POLICY(double)

#undef VOGUE_INSTANTIATE_POLICY

}  // namespace vogue
