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

#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "gflowpo/error.hpp"
#include "gflowpo/meta_context.hpp"
#include "gflowpo/reward.hpp"
#include "gflowpo/sequence.hpp"

namespace gflowpo {

/// The exact target p*(z) = R(z; M) / Z over the enumerated space.
struct PosteriorTable {
  std::vector<double> probabilities;  // SequenceSpace order
  double log_partition = 0.0;
};

namespace detail {

inline double log_sum_exp(std::span<const double> xs) {
  double mx = -std::numeric_limits<double>::infinity();
  for (double x : xs) mx = std::max(mx, x);
  if (!std::isfinite(mx)) return mx;
  double s = 0.0;
  for (double x : xs) s += std::exp(x - mx);
  return mx + std::log(s);
}

}  // namespace detail

inline PosteriorTable exact_posterior(const TaskOracle& oracle, const KernelPrior& prior,
                                      const MetaContext<TokenSequence>& meta,
                                      std::size_t cap = kDefaultEnumerationCap) {
  const SequenceSpace space(oracle.vocab_size, oracle.length, cap);
  std::vector<double> log_r(space.size());
  for (std::size_t i = 0; i < space.size(); ++i) {
    const auto z = space.at(i);
    log_r[i] = log_reward(oracle.correct_count_unchecked(z), prior.log_prob(z, meta.reference_set));
  }
  PosteriorTable table;
  table.log_partition = detail::log_sum_exp(log_r);
  table.probabilities.resize(space.size());
  for (std::size_t i = 0; i < space.size(); ++i)
    table.probabilities[i] = std::exp(log_r[i] - table.log_partition);
  return table;
}

/// Total variation distance 0.5 * sum |p - q|.
inline double tv_distance(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size())
    throw SupportMismatch("supports differ: " + std::to_string(p.size()) + " vs " + std::to_string(q.size()));
  double sp = 0.0, sq = 0.0, d = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    sp += p[i];
    sq += q[i];
    d += std::abs(p[i] - q[i]);
  }
  if (std::abs(sp - 1.0) > 1e-6 || std::abs(sq - 1.0) > 1e-6)
    throw SupportMismatch("inputs are not normalized distributions");
  return 0.5 * d;
}

}  // namespace gflowpo
