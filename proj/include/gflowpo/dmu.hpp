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
#include <numeric>
#include <string>
#include <vector>

#include "gflowpo/buffers.hpp"
#include "gflowpo/error.hpp"
#include "gflowpo/meta_context.hpp"
#include "gflowpo/policy.hpp"
#include "gflowpo/reward.hpp"
#include "gflowpo/rng.hpp"
#include "gflowpo/sequence.hpp"

namespace gflowpo {

enum class DmuVariant { both_buffers, replay_only, highreward_only, off };

inline const char* to_string(DmuVariant v) {
  switch (v) {
    case DmuVariant::both_buffers: return "both_buffers";
    case DmuVariant::replay_only: return "replay_only";
    case DmuVariant::highreward_only: return "highreward_only";
    case DmuVariant::off: return "off";
  }
  return "?";
}

inline DmuVariant parse_dmu_variant(const std::string& s) {
  if (s == "both_buffers") return DmuVariant::both_buffers;
  if (s == "replay_only") return DmuVariant::replay_only;
  if (s == "highreward_only") return DmuVariant::highreward_only;
  if (s == "off") return DmuVariant::off;
  throw ConfigError("dmu.variant: unknown value '" + s + "'");
}

struct DmuConfig {
  int k_b = 2;
  int k_q = 1;
  DmuVariant variant = DmuVariant::both_buffers;

  void validate() const {
    if (k_b < 0) throw ConfigError("dmu.k_b: must be nonnegative");
    if (k_q < 0) throw ConfigError("dmu.k_q: must be nonnegative");
    if (variant != DmuVariant::off && k_b + k_q < 1) throw ConfigError("dmu.k_b: k_b + k_q must be at least 1");
  }
};

namespace detail {

/// k uniform picks from a buffer: without replacement when it holds at
/// least k entries, with replacement otherwise.
template <typename Buffer, typename Seq>
void draw_from(const Buffer& buffer, int k, RngStream& rng, std::vector<Seq>& out) {
  if (k <= 0 || buffer.empty()) return;
  const std::size_t n = buffer.size();
  if (n >= static_cast<std::size_t>(k)) {
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    for (int i = 0; i < k; ++i) {
      const std::size_t j = static_cast<std::size_t>(i) + rng.uniform_index(n - static_cast<std::size_t>(i));
      std::swap(idx[static_cast<std::size_t>(i)], idx[j]);
      out.push_back(buffer[idx[static_cast<std::size_t>(i)]].sequence);
    }
  } else {
    for (int i = 0; i < k; ++i) out.push_back(buffer[rng.uniform_index(n)].sequence);
  }
}

}  // namespace detail

/**
 * Draws the new reference set: k_b picks from the replay buffer and k_q
 * from the high-reward buffer, then drops exact duplicates keeping first
 * occurrence. The single-buffer variants route the whole quota to one
 * buffer. An empty buffer hands its quota to the other one.
 */
template <typename Seq>
std::vector<Seq> sample_reference_set(const ReplayBuffer<Seq>& replay, const HighRewardBuffer<Seq>& high_reward,
                                      const DmuConfig& cfg, RngStream& rng) {
  int from_b = cfg.k_b, from_q = cfg.k_q;
  switch (cfg.variant) {
    case DmuVariant::off: return {};
    case DmuVariant::replay_only: from_b += from_q; from_q = 0; break;
    case DmuVariant::highreward_only: from_q += from_b; from_b = 0; break;
    case DmuVariant::both_buffers: break;
  }
  if (replay.empty()) { from_q += from_b; from_b = 0; }
  if (high_reward.empty()) { from_b += from_q; from_q = 0; }

  std::vector<Seq> drawn;
  detail::draw_from(replay, from_b, rng, drawn);
  detail::draw_from(high_reward, from_q, rng, drawn);

  std::vector<Seq> unique;
  for (auto& s : drawn)
    if (std::find(unique.begin(), unique.end(), s) == unique.end()) unique.push_back(std::move(s));
  return unique;
}

/// Replaces the reference set; template and shots stay fixed.
template <typename Seq>
MetaContext<Seq> dmu_update(MetaContext<Seq> meta, std::vector<Seq> reference_set) {
  meta.reference_set = std::move(reference_set);
  return meta;
}

/// Accuracy term, KL term and their difference.
struct ElboEstimate {
  double accuracy_term = 0.0;
  double kl_term = 0.0;
  double elbo = 0.0;
};

/**
 * Exact lower bound by enumeration:
 *   accuracy = E_{p_theta}[log A_D(z)],  kl = KL(p_theta || p_ref(.|M)).
 */
inline ElboEstimate elbo_estimate(const TabularPolicy& policy, const TaskOracle& oracle, const KernelPrior& prior,
                                  const MetaContext<TokenSequence>& meta,
                                  std::size_t cap = kDefaultEnumerationCap) {
  const SequenceSpace space(oracle.vocab_size, oracle.length, cap);
  const auto log_p = policy.enumerate_log_prob(cap);
  ElboEstimate e;
  for (std::size_t i = 0; i < space.size(); ++i) {
    const double p = std::exp(log_p[i]);
    if (p == 0.0) continue;
    const auto z = space.at(i);
    e.accuracy_term += p * std::log(oracle.correct_count_unchecked(z));
    e.kl_term += p * (log_p[i] - prior.log_prob(z, meta.reference_set));
  }
  e.elbo = e.accuracy_term - e.kl_term;
  return e;
}

}  // namespace gflowpo
