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

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <type_traits>
#include <variant>
#include <vector>

#include "gflowpo/error.hpp"
#include "gflowpo/meta_context.hpp"
#include "gflowpo/rng.hpp"
#include "gflowpo/sequence.hpp"

namespace gflowpo {

// Toy-task examples. Each predicate plays the role of one labelled example
// (x_i, y_i): a prompt z "answers it correctly" when the predicate holds.

/// z[position] == token
struct TokenAt {
  int position = 0;
  TokenId token = 0;
  bool operator==(const TokenAt&) const = default;
};

/// `tokens` occurs as a contiguous run somewhere in z.
struct ContainsSubsequence {
  std::vector<TokenId> tokens;
  bool operator==(const ContainsSubsequence&) const = default;
};

/// `token` occurs exactly `count` times in z.
struct CountOfToken {
  TokenId token = 0;
  int count = 0;
  bool operator==(const CountOfToken&) const = default;
};

using ExampleRecord = std::variant<TokenAt, ContainsSubsequence, CountOfToken>;

inline bool satisfies(const ExampleRecord& example, const TokenSequence& z) {
  return std::visit(
      [&](const auto& p) -> bool {
        using P = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<P, TokenAt>) {
          return p.position >= 0 && static_cast<std::size_t>(p.position) < z.size() &&
                 z[static_cast<std::size_t>(p.position)] == p.token;
        } else if constexpr (std::is_same_v<P, ContainsSubsequence>) {
          if (p.tokens.empty()) return true;
          return std::search(z.tokens.begin(), z.tokens.end(), p.tokens.begin(), p.tokens.end()) !=
                 z.tokens.end();
        } else {
          return std::count(z.tokens.begin(), z.tokens.end(), p.token) == p.count;
        }
      },
      example);
}

/// Human-readable form, used as the input side of a toy shot.
inline std::string describe(const ExampleRecord& example) {
  return std::visit(
      [](const auto& p) -> std::string {
        using P = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<P, TokenAt>) {
          return "token_at " + std::to_string(p.position) + " " + std::to_string(p.token);
        } else if constexpr (std::is_same_v<P, ContainsSubsequence>) {
          return "contains_subsequence " + to_string(TokenSequence(p.tokens));
        } else {
          return "count_of_token " + std::to_string(p.token) + " " + std::to_string(p.count);
        }
      },
      example);
}

/// The dataset analog: n examples, the epsilon floor and the sequence space.
struct TaskOracle {
  std::vector<ExampleRecord> examples;
  double epsilon = 0.1;
  int vocab_size = 0;
  int length = 0;

  void validate() const {
    if (examples.empty()) throw ConfigError("task.predicates: at least one predicate is required");
    if (!(epsilon > 0.0 && epsilon <= 1.0)) throw ConfigError("task.epsilon: must lie in (0, 1]");
    if (vocab_size <= 0) throw ConfigError("task.vocab_size: must be positive");
    if (length <= 0) throw ConfigError("task.length: must be positive");
  }

  /// A_D(z) = epsilon + number of satisfied examples.
  double correct_count(const TokenSequence& z) const {
    check_sequence(z, vocab_size, length);
    return correct_count_unchecked(z);
  }

  double correct_count_unchecked(const TokenSequence& z) const {
    double a = epsilon;
    for (const auto& e : examples)
      if (satisfies(e, z)) a += 1.0;
    return a;
  }
};

/**
 * Reference prior p_ref(z | M) for toy mode: a mixture of the uniform
 * distribution (weight lambda) and an equal-weight mixture of per-position
 * noisy copies of each reference in M. A copy keeps a position's token with
 * probability 1 - eta and otherwise moves to one of the V - 1 other tokens.
 * With an empty reference set the prior is uniform.
 */
struct KernelPrior {
  double lambda = 0.5;
  double eta = 0.25;
  int vocab_size = 0;
  int length = 0;

  void validate() const {
    if (!(lambda >= 0.0 && lambda <= 1.0)) throw ConfigError("task.lambda: must lie in [0, 1]");
    if (!(eta >= 0.0 && eta < 1.0)) throw ConfigError("task.eta: must lie in [0, 1)");
    if (vocab_size <= 0 || length <= 0) throw ConfigError("prior needs positive vocab_size and length");
  }

  double log_uniform() const { return -length * std::log(static_cast<double>(vocab_size)); }

  double log_prob(const TokenSequence& z, const std::vector<TokenSequence>& refs) const {
    check_sequence(z, vocab_size, length);
    if (refs.empty()) return log_uniform();
    constexpr double kNegInf = -std::numeric_limits<double>::infinity();
    const double log_keep = std::log1p(-eta);
    const double log_move = vocab_size > 1 ? std::log(eta / (vocab_size - 1)) : kNegInf;

    std::vector<double> terms;
    terms.reserve(refs.size() + 1);
    for (const auto& r : refs) {
      check_sequence(r, vocab_size, length);
      int matches = 0;
      for (int i = 0; i < length; ++i) matches += z[static_cast<std::size_t>(i)] == r[static_cast<std::size_t>(i)];
      const int moves = length - matches;
      double t = std::log1p(-lambda) - std::log(static_cast<double>(refs.size()));
      t += matches * log_keep;
      if (moves > 0) t += moves * log_move;
      terms.push_back(t);
    }
    if (lambda > 0.0) terms.push_back(std::log(lambda) + log_uniform());

    double mx = kNegInf;
    for (double t : terms) mx = std::max(mx, t);
    if (mx == kNegInf) return kNegInf;
    double s = 0.0;
    for (double t : terms) s += std::exp(t - mx);
    return mx + std::log(s);
  }

  double log_prob(const TokenSequence& z, const MetaContext<TokenSequence>& meta) const {
    return log_prob(z, meta.reference_set);
  }

  /**
   * Ancestral draw: the uniform branch with probability lambda, otherwise a
   * uniformly chosen reference copied through the per-position kernel. A
   * temperature other than 1 tempers the copy kernel; temperature 1 draws
   * exactly from exp(log_prob).
   */
  TokenSequence sample(const std::vector<TokenSequence>& refs, RngStream& rng, double temperature = 1.0) const {
    TokenSequence z;
    z.tokens.reserve(static_cast<std::size_t>(length));
    const bool uniform_branch = refs.empty() || rng.bernoulli(lambda);
    if (uniform_branch) {
      for (int i = 0; i < length; ++i) z.tokens.push_back(static_cast<TokenId>(rng.uniform_index(vocab_size)));
      return z;
    }
    const auto& r = refs[rng.uniform_index(refs.size())];
    double keep = 1.0 - eta;
    double move = vocab_size > 1 ? eta / (vocab_size - 1) : 0.0;
    if (temperature != 1.0) {
      keep = std::pow(keep, 1.0 / temperature);
      move = move > 0.0 ? std::pow(move, 1.0 / temperature) : 0.0;
    }
    std::vector<double> w(static_cast<std::size_t>(vocab_size));
    for (int i = 0; i < length; ++i) {
      std::fill(w.begin(), w.end(), move);
      w[static_cast<std::size_t>(r[static_cast<std::size_t>(i)])] = keep;
      z.tokens.push_back(static_cast<TokenId>(rng.categorical(w)));
    }
    return z;
  }

  TokenSequence sample(const MetaContext<TokenSequence>& meta, RngStream& rng, double temperature = 1.0) const {
    return sample(meta.reference_set, rng, temperature);
  }
};

/// log R(z; M) = log A_D(z) + log p_ref(z | M).
inline double log_reward(double correct_count, double prior_log_prob) {
  if (!(correct_count > 0.0))
    throw NonPositiveCount("correct count must be positive, got " + std::to_string(correct_count));
  return std::log(correct_count) + prior_log_prob;
}

}  // namespace gflowpo
