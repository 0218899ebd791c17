#include "vogue/vocab.hpp"

#include <array>

namespace vogue {

namespace {
constexpr std::array<std::string_view, kVocabSize> kNames{
    "<bos>", "<eos>", "<think>", "</think>", "<ans>", "</ans>", "0",     "1",       "2",
    "3",     "4",     "5",       "6",        "7",     "8",      "9",     "red",     "green",
    "blue",  "yellow", "even",   "odd",      "Q:count", "Q:majority", "Q:parity", "Q:bandit"};
}

std::string_view token_name(TokenId t) { return t < kVocabSize ? kNames[t] : "<?>"; }

std::optional<TokenId> token_from_name(std::string_view name) {
  for (TokenId t = 0; t < kVocabSize; ++t)
    if (kNames[t] == name) return t;
  return std::nullopt;
}

std::string tokens_string(const Tokens& tokens) {
  std::string s;
  for (auto t : tokens) {
    if (!s.empty()) s += ' ';
    s += token_name(t);
  }
  return s;
}

}  // namespace vogue
