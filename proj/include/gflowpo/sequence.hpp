// Copyright 2026 The gflowpo Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//    http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "gflowpo/error.hpp"

namespace gflowpo {

using TokenId = std::int32_t;

/// A candidate prompt in toy mode: a bounded sequence of token ids.
struct TokenSequence {
  std::vector<TokenId> tokens;

  TokenSequence() = default;
  explicit TokenSequence(std::vector<TokenId> t) : tokens(std::move(t)) {}
  TokenSequence(std::initializer_list<TokenId> t) : tokens(t) {}

  std::size_t size() const { return tokens.size(); }
  bool empty() const { return tokens.empty(); }
  TokenId operator[](std::size_t i) const { return tokens[i]; }

  auto operator<=>(const TokenSequence&) const = default;
};

inline std::string to_string(const TokenSequence& z) {
  std::string out;
  for (std::size_t i = 0; i < z.size(); ++i) {
    if (i) out += ' ';
    out += std::to_string(z[i]);
  }
  return out;
}

inline TokenSequence parse_token_sequence(const std::string& text) {
  std::istringstream in(text);
  TokenSequence z;
  long long v = 0;
  while (in >> v) {
    if (v < 0 || v > std::numeric_limits<TokenId>::max())
      throw ParseError("token id out of range: " + std::to_string(v));
    z.tokens.push_back(static_cast<TokenId>(v));
  }
  if (!in.eof()) throw ParseError("malformed token list: '" + text + "'");
  return z;
}

/// Throws unless z has exactly `length` tokens, each below `vocab_size`.
inline void check_sequence(const TokenSequence& z, int vocab_size, int length) {
  if (static_cast<int>(z.size()) != length)
    throw LengthMismatch("sequence length " + std::to_string(z.size()) + " != " +
                         std::to_string(length));
  for (TokenId t : z.tokens)
    if (t < 0 || t >= vocab_size)
      throw InvalidToken("token " + std::to_string(t) + " outside vocabulary of size " +
                         std::to_string(vocab_size));
}

inline constexpr std::size_t kDefaultEnumerationCap = 1'000'000;

/**
 * The fixed-length sequence space {0..V-1}^L in lexicographic order; the
 * first token is the most significant digit of the index.
 */
class SequenceSpace {
 public:
  SequenceSpace(int vocab_size, int length, std::size_t cap = kDefaultEnumerationCap)
      : vocab_(vocab_size), length_(length) {
    if (vocab_size <= 0 || length <= 0) throw ConfigError("vocab_size and length must be positive");
    std::size_t n = 1;
    for (int i = 0; i < length; ++i) {
      if (n > cap / static_cast<std::size_t>(vocab_size))
        throw TooLarge("V^L exceeds enumeration cap " + std::to_string(cap));
      n *= static_cast<std::size_t>(vocab_size);
    }
    size_ = n;
  }

  std::size_t size() const { return size_; }
  int vocab_size() const { return vocab_; }
  int length() const { return length_; }

  TokenSequence at(std::size_t index) const {
    TokenSequence z;
    z.tokens.assign(static_cast<std::size_t>(length_), 0);
    for (int i = length_ - 1; i >= 0; --i) {
      z.tokens[static_cast<std::size_t>(i)] = static_cast<TokenId>(index % vocab_);
      index /= static_cast<std::size_t>(vocab_);
    }
    return z;
  }

  std::size_t index_of(const TokenSequence& z) const {
    check_sequence(z, vocab_, length_);
    std::size_t idx = 0;
    for (TokenId t : z.tokens) idx = idx * static_cast<std::size_t>(vocab_) + static_cast<std::size_t>(t);
    return idx;
  }

 private:
  int vocab_;
  int length_;
  std::size_t size_ = 0;
};

}  // namespace gflowpo

template <>
struct std::hash<gflowpo::TokenSequence> {
  std::size_t operator()(const gflowpo::TokenSequence& z) const noexcept {
    std::size_t h = 1469598103934665603ull;
    for (auto t : z.tokens) h = (h ^ static_cast<std::size_t>(t)) * 1099511628211ull;
    return h;
  }
};
