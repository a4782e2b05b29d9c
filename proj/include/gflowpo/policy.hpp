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
#include <cstddef>
#include <cstdio>
#include <istream>
#include <limits>
#include <map>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "gflowpo/error.hpp"
#include "gflowpo/rng.hpp"
#include "gflowpo/sequence.hpp"

namespace gflowpo {

using Prefix = std::vector<TokenId>;

/// Temperatures at or below this are treated as the greedy limit.
inline constexpr double kGreedyTemperature = 1e-6;

namespace detail {

/// log softmax(logits / temperature), computed with a max shift.
inline std::vector<double> log_softmax(std::span<const double> logits, double temperature = 1.0) {
  std::vector<double> out(logits.size());
  double mx = -std::numeric_limits<double>::infinity();
  for (double l : logits) mx = std::max(mx, l / temperature);
  double sum = 0.0;
  for (double l : logits) sum += std::exp(l / temperature - mx);
  const double lse = mx + std::log(sum);
  for (std::size_t i = 0; i < logits.size(); ++i) out[i] = logits[i] / temperature - lse;
  return out;
}

inline std::vector<double> softmax(std::span<const double> logits, double temperature = 1.0) {
  auto out = log_softmax(logits, temperature);
  for (double& v : out) v = std::exp(v);
  return out;
}

}  // namespace detail

/// Gradient with respect to the logits of a tabular policy, stored per visited prefix.
class SparseGradient {
 public:
  explicit SparseGradient(int vocab_size = 0) : vocab_(vocab_size) {}

  int vocab_size() const { return vocab_; }

  void add(const Prefix& prefix, TokenId token, double value) {
    row(prefix)[static_cast<std::size_t>(token)] += value;
  }

  /// this += scale * other
  void add_scaled(const SparseGradient& other, double scale) {
    for (const auto& [prefix, g] : other.rows_) {
      auto& r = row(prefix);
      for (std::size_t b = 0; b < g.size(); ++b) r[b] += scale * g[b];
    }
  }

  double at(const Prefix& prefix, TokenId token) const {
    auto it = rows_.find(prefix);
    return it == rows_.end() ? 0.0 : it->second[static_cast<std::size_t>(token)];
  }

  bool contains(const Prefix& prefix) const { return rows_.contains(prefix); }
  std::size_t num_prefixes() const { return rows_.size(); }
  const std::map<Prefix, std::vector<double>>& rows() const { return rows_; }

 private:
  std::vector<double>& row(const Prefix& prefix) {
    auto [it, inserted] = rows_.try_emplace(prefix);
    if (inserted) it->second.assign(static_cast<std::size_t>(vocab_), 0.0);
    return it->second;
  }

  int vocab_;
  std::map<Prefix, std::vector<double>> rows_;
};

/**
 * Prefix-conditioned tabular softmax policy over fixed-length sequences.
 *
 * Each prefix of length 0..L-1 owns a logit vector of size V. Prefixes that
 * were never written hold implicit zero logits, so memory grows with the set
 * of prefixes touched by training rather than with V^L.
 */
class TabularPolicy {
 public:
  TabularPolicy(int vocab_size, int length) : vocab_(vocab_size), length_(length) {
    if (vocab_size <= 0 || length <= 0) throw ConfigError("policy needs positive vocab_size and length");
  }

  int vocab_size() const { return vocab_; }
  int length() const { return length_; }
  std::size_t num_stored_prefixes() const { return logits_.size(); }
  const std::map<Prefix, std::vector<double>>& stored_logits() const { return logits_; }

  std::vector<double> logits(const Prefix& prefix) const {
    auto it = logits_.find(prefix);
    if (it == logits_.end()) return std::vector<double>(static_cast<std::size_t>(vocab_), 0.0);
    return it->second;
  }

  void set_logits(const Prefix& prefix, std::vector<double> values) {
    if (static_cast<int>(values.size()) != vocab_) throw LengthMismatch("logit vector size != vocab_size");
    if (static_cast<int>(prefix.size()) >= length_) throw LengthMismatch("prefix too long");
    logits_[prefix] = std::move(values);
  }

  /// Sum over positions of log softmax(logits[z_<i])[z_i].
  double log_prob(const TokenSequence& z) const {
    check_sequence(z, vocab_, length_);
    double total = 0.0;
    Prefix prefix;
    prefix.reserve(static_cast<std::size_t>(length_));
    for (int i = 0; i < length_; ++i) {
      const TokenId tok = z[static_cast<std::size_t>(i)];
      auto it = logits_.find(prefix);
      if (it == logits_.end()) {
        total -= std::log(static_cast<double>(vocab_));
      } else {
        total += detail::log_softmax(it->second)[static_cast<std::size_t>(tok)];
      }
      prefix.push_back(tok);
    }
    return total;
  }

  /// Ancestral sampling from softmax(logits / temperature). At or below
  /// kGreedyTemperature each position takes the argmax, lowest id on ties.
  TokenSequence sample(double temperature, RngStream& rng) const {
    if (!(temperature > 0.0)) throw ConfigError("temperature must be positive");
    TokenSequence z;
    z.tokens.reserve(static_cast<std::size_t>(length_));
    for (int i = 0; i < length_; ++i) {
      const auto lg = logits(z.tokens);
      TokenId tok = 0;
      if (temperature <= kGreedyTemperature) {
        tok = static_cast<TokenId>(std::max_element(lg.begin(), lg.end()) - lg.begin());
      } else {
        tok = static_cast<TokenId>(rng.categorical(detail::softmax(lg, temperature)));
      }
      z.tokens.push_back(tok);
    }
    return z;
  }

  /// d log p(z) / d logits[z_<i][b] = 1[b = z_i] - softmax(logits[z_<i])[b].
  SparseGradient grad_log_prob(const TokenSequence& z) const {
    check_sequence(z, vocab_, length_);
    SparseGradient g(vocab_);
    accumulate_grad_log_prob(z, 1.0, g);
    return g;
  }

  /// g += scale * grad log p(z), without re-validating z.
  void accumulate_grad_log_prob(const TokenSequence& z, double scale, SparseGradient& g) const {
    Prefix prefix;
    prefix.reserve(static_cast<std::size_t>(length_));
    for (int i = 0; i < length_; ++i) {
      const TokenId tok = z[static_cast<std::size_t>(i)];
      const auto p = detail::softmax(logits(prefix));
      for (int b = 0; b < vocab_; ++b)
        g.add(prefix, b, scale * ((b == tok ? 1.0 : 0.0) - p[static_cast<std::size_t>(b)]));
      prefix.push_back(tok);
    }
  }

  /// logits -= step_size * grad, touching only the prefixes present in grad.
  void apply_gradient(const SparseGradient& grad, double step_size) {
    if (step_size == 0.0) return;
    for (const auto& [prefix, g] : grad.rows()) {
      bool nonzero = false;
      for (double v : g) nonzero = nonzero || v != 0.0;
      if (!nonzero) continue;
      auto [it, inserted] = logits_.try_emplace(prefix);
      if (inserted) it->second.assign(static_cast<std::size_t>(vocab_), 0.0);
      for (std::size_t b = 0; b < g.size(); ++b) it->second[b] -= step_size * g[b];
    }
  }

  /// Exact probabilities of all V^L sequences in SequenceSpace order.
  std::vector<double> enumerate(std::size_t cap = kDefaultEnumerationCap) const {
    auto logp = enumerate_log_prob(cap);
    for (double& v : logp) v = std::exp(v);
    return logp;
  }

  std::vector<double> enumerate_log_prob(std::size_t cap = kDefaultEnumerationCap) const {
    const SequenceSpace space(vocab_, length_, cap);
    std::vector<double> out;
    out.reserve(space.size());
    Prefix prefix;
    prefix.reserve(static_cast<std::size_t>(length_));
    enumerate_from(prefix, 0.0, out);
    return out;
  }

  bool operator==(const TabularPolicy&) const = default;

  /// One line per stored prefix: prefix token ids, a tab, then V logits.
  void save(std::ostream& out) const {
    out << "# tabular-policy vocab_size=" << vocab_ << " length=" << length_ << '\n';
    char buf[40];
    for (const auto& [prefix, lg] : logits_) {
      out << to_string(TokenSequence(prefix)) << '\t';
      for (std::size_t b = 0; b < lg.size(); ++b) {
        std::snprintf(buf, sizeof(buf), "%.17g", lg[b]);
        out << (b ? " " : "") << buf;
      }
      out << '\n';
    }
  }

  static TabularPolicy load(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) throw ParseError("empty policy file");
    int v = 0, l = 0;
    if (std::sscanf(line.c_str(), "# tabular-policy vocab_size=%d length=%d", &v, &l) != 2)
      throw ParseError("bad policy header: " + line);
    TabularPolicy policy(v, l);
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const auto tab = line.find('\t');
      if (tab == std::string::npos) throw ParseError("bad policy line: " + line);
      Prefix prefix = parse_token_sequence(line.substr(0, tab)).tokens;
      std::istringstream vals(line.substr(tab + 1));
      std::vector<double> lg;
      double x = 0.0;
      while (vals >> x) lg.push_back(x);
      policy.set_logits(prefix, std::move(lg));
    }
    return policy;
  }

 private:
  void enumerate_from(Prefix& prefix, double logp, std::vector<double>& out) const {
    if (static_cast<int>(prefix.size()) == length_) {
      out.push_back(logp);
      return;
    }
    auto it = logits_.find(prefix);
    const std::vector<double> ls =
        it == logits_.end()
            ? std::vector<double>(static_cast<std::size_t>(vocab_), -std::log(static_cast<double>(vocab_)))
            : detail::log_softmax(it->second);
    for (int b = 0; b < vocab_; ++b) {
      prefix.push_back(b);
      enumerate_from(prefix, logp + ls[static_cast<std::size_t>(b)], out);
      prefix.pop_back();
    }
  }

  int vocab_;
  int length_;
  std::map<Prefix, std::vector<double>> logits_;
};

}  // namespace gflowpo
