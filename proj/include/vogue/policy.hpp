#pragma once

// Tiny image-conditioned autoregressive policy. The image is squeezed through
// a two-layer encoder into image_tokens prefix embeddings; question and
// response tokens follow. Position k_img-1+t carries the distribution of
// token t, so the whole sequence is scored with one causal pass.

#include <cstddef>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "vogue/autodiff.hpp"
#include "vogue/image.hpp"
#include "vogue/rng.hpp"
#include "vogue/tensor.hpp"
#include "vogue/vocab.hpp"

namespace vogue {

enum class Architecture { causal_attention, recurrent_gate };

std::string_view architecture_name(Architecture a);
Architecture parse_architecture(std::string_view name);

struct PolicyConfig {
  std::size_t vocab_size = kVocabSize;
  std::size_t embed_dim = 32;
  std::size_t heads = 2;
  std::size_t context_len = 32;
  std::size_t mlp_dim = 64;
  std::size_t image_height = 16;
  std::size_t image_width = 16;
  std::size_t image_channels = 3;
  std::size_t image_tokens = 4;
  std::size_t image_hidden = 48;
  Architecture architecture = Architecture::causal_attention;
  double temperature = 1.0;
  double init_scale = 0.02;

  std::size_t image_size() const { return image_height * image_width * image_channels; }
};

void validate(const PolicyConfig& config);

template <class Real>
using PolicyParams = TensorMap<Real>;

// Output projection zero, biases zero, every other weight N(0, (init_scale/sqrt(d))^2).
template <class Real>
PolicyParams<Real> init_params(const PolicyConfig& config, RngStream rng);

// Value copy with gradient slots dropped; never aliases the source.
template <class Real>
PolicyParams<Real> snapshot(const PolicyParams<Real>& params);

inline constexpr double kProbFloor = 1e-8;

struct TokenDist {
  std::vector<double> probs;
  std::vector<double> log_probs;
};

// softmax(logits / temperature), clamped at kProbFloor and renormalized.
TokenDist make_token_dist(const std::vector<double>& logits, double temperature = 1.0);
double token_entropy(const TokenDist& dist);

// [image_tokens, embed_dim]
template <class Real>
Tensor<Real> encode_image(const PolicyConfig& config, const PolicyParams<Real>& params, const Image& image);

// Distributions of tokens[first..T-1], each conditioned on the image and the
// tokens before it.
template <class Real>
std::vector<TokenDist> next_token_dists(const PolicyConfig& config, const PolicyParams<Real>& params,
                                        const Tensor<Real>& image_embedding, const Tokens& tokens,
                                        std::size_t first = 0, double temperature = 1.0);

template <class Real>
std::vector<TokenDist> next_token_dists(const PolicyConfig& config, const PolicyParams<Real>& params,
                                        const Image& image, const Tokens& tokens);

// Raw logits of the distribution that follows `tokens` (the next token).
template <class Real>
std::vector<double> next_logits(const PolicyConfig& config, const PolicyParams<Real>& params,
                                const Tensor<Real>& image_embedding, const Tokens& tokens);

// Samples until EOS or max_len tokens. Reward is left for the verifier.
template <class Real>
Response sample_response(const PolicyConfig& config, const PolicyParams<Real>& params,
                         const Tensor<Real>& image_embedding, const Tokens& question, std::size_t max_len,
                         double temperature, RngStream& rng, bool greedy = false);

template <class Real>
Response sample_response(const PolicyConfig& config, const PolicyParams<Real>& params, const Image& image,
                         const Tokens& question, std::size_t max_len, double temperature, RngStream& rng,
                         bool greedy = false);

// Recording path for training.
template <class Real>
using ParamVars = std::map<std::string, ad::Var<Real>>;

// Every tensor becomes a parameter leaf (its grad slot receives gradients).
template <class Real>
ParamVars<Real> bind_parameters(ad::Tape<Real>& tape, PolicyParams<Real>& params);

// Every tensor becomes a constant; nothing flows back into params.
template <class Real>
ParamVars<Real> bind_constants(ad::Tape<Real>& tape, const PolicyParams<Real>& params);

template <class Real>
ad::Var<Real> encode_image(ad::Tape<Real>& tape, const ParamVars<Real>& vars, const PolicyConfig& config,
                           const Image& image);

// [T - first] vector of log pi(sequence[t] | image, sequence[<t]) for t >= first.
template <class Real>
ad::Var<Real> sequence_log_probs(ad::Tape<Real>& tape, const ParamVars<Real>& vars, const PolicyConfig& config,
                                 const ad::Var<Real>& image_embedding, const Tokens& sequence, std::size_t first,
                                 double temperature = 1.0);

// Negative summed log-likelihood of sequence[first..] (warmup and gradient checks).
template <class Real>
ad::Var<Real> sequence_nll(ad::Tape<Real>& tape, const ParamVars<Real>& vars, const PolicyConfig& config,
                           const Image& image, const Tokens& sequence, std::size_t first);

}  // namespace vogue
