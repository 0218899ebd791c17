#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace vogue {

using TokenId = std::size_t;
using Tokens = std::vector<TokenId>;

namespace tok {
inline constexpr TokenId BOS = 0;
inline constexpr TokenId EOS = 1;
inline constexpr TokenId THINK_OPEN = 2;
inline constexpr TokenId THINK_CLOSE = 3;
inline constexpr TokenId ANS_OPEN = 4;
inline constexpr TokenId ANS_CLOSE = 5;
inline constexpr TokenId DIGIT0 = 6;  // digits 0..9 are 6..15
inline constexpr TokenId RED = 16;
inline constexpr TokenId GREEN = 17;
inline constexpr TokenId BLUE = 18;
inline constexpr TokenId YELLOW = 19;
inline constexpr TokenId EVEN = 20;
inline constexpr TokenId ODD = 21;
inline constexpr TokenId Q_COUNT = 22;
inline constexpr TokenId Q_MAJORITY = 23;
inline constexpr TokenId Q_PARITY = 24;
inline constexpr TokenId Q_BANDIT = 25;
}  // namespace tok

inline constexpr std::size_t kVocabSize = 26;
inline constexpr std::size_t kNumColors = 4;

inline constexpr TokenId digit_token(std::size_t d) { return tok::DIGIT0 + d; }
inline constexpr TokenId color_token(std::size_t c) { return tok::RED + c; }

// Tokens other than BOS/EOS and the four delimiters.
inline constexpr bool is_content_token(TokenId t) { return t >= tok::DIGIT0 && t < kVocabSize; }
inline constexpr bool is_structural_token(TokenId t) { return t <= tok::ANS_CLOSE; }

std::string_view token_name(TokenId t);
std::optional<TokenId> token_from_name(std::string_view name);
std::string tokens_string(const Tokens& tokens);

struct RewardBreakdown {
  int format = 0;
  int accuracy = 0;
  double total = 0.0;
};

inline constexpr double kFormatWeight = 0.1;
inline constexpr double kAccuracyWeight = 0.9;

inline RewardBreakdown make_reward(int format, int accuracy) {
  return {format, accuracy, kFormatWeight * format + kAccuracyWeight * accuracy};
}

// A sampled response with what the sampling policy said about each token.
struct Response {
  Tokens tokens;
  std::vector<double> log_probs;
  std::vector<double> entropies;
  RewardBreakdown reward;

  std::size_t length() const { return tokens.size(); }
};

}  // namespace vogue
