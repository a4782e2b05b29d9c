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
#include <cstdint>
#include <optional>
#include <span>
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

/// Hyperparameters of the off-policy VarGrad loop.
struct GfnConfig {
  double rho = 0.5;              // online fraction of the training policy
  double learning_rate = 0.05;   // tabular default; LM-scale runs use 1e-4
  int batch_size = 8;
  int train_steps = 200;
  int pre_steps = 100;
  double ema_decay = 0.99;
  double temp_low = 0.5;
  double temp_high = 2.0;
  int dmu_every = 1;
  bool use_raw_log_z = false;    // residuals use the raw batch estimate instead of the EMA
  std::size_t replay_capacity = 1000;
  std::size_t high_reward_capacity = 5;
  std::uint64_t oracle_budget = 0;  // 0 = unlimited

  void validate() const {
    if (!(rho >= 0.0 && rho <= 1.0)) throw ConfigError("gfn.rho: must lie in [0, 1]");
    if (!(learning_rate >= 0.0)) throw ConfigError("gfn.learning_rate: must be nonnegative");
    if (batch_size <= 0) throw ConfigError("gfn.batch_size: must be positive");
    if (train_steps <= 0) throw ConfigError("gfn.train_steps: must be positive");
    if (pre_steps < 0) throw ConfigError("gfn.pre_steps: must be nonnegative");
    if (!(ema_decay >= 0.0 && ema_decay < 1.0)) throw ConfigError("gfn.ema_decay: must lie in [0, 1)");
    if (!(temp_low > 0.0)) throw ConfigError("gfn.temp_low: must be positive");
    if (!(temp_high >= temp_low)) throw ConfigError("gfn.temp_high: must be >= gfn.temp_low");
    if (dmu_every <= 0) throw ConfigError("gfn.dmu_every: must be positive");
    if (replay_capacity == 0) throw ConfigError("gfn.replay_capacity: must be positive");
    if (high_reward_capacity == 0) throw ConfigError("gfn.high_reward_capacity: must be positive");
  }
};

enum class Source { online, replay };

inline const char* to_string(Source s) { return s == Source::online ? "online" : "replay"; }

/// One training sample with log p_theta and log R evaluated under the current theta and M.
struct BatchItem {
  TokenSequence sequence;
  double correct_count = 0.0;
  double log_p_theta = 0.0;
  double log_reward = 0.0;
  Source source = Source::online;
};

struct TrainerState {
  std::uint64_t step = 0;
  std::optional<double> ema_log_z;
  TabularPolicy policy;
  ReplayBuffer<TokenSequence> replay;
  HighRewardBuffer<TokenSequence> high_reward;
  MetaContext<TokenSequence> meta;
  RngStream rng;
  std::uint64_t oracle_calls = 0;
  /// Best correct count seen after each oracle call (index = call - 1).
  std::vector<double> best_found_trace;

  TrainerState(const GfnConfig& cfg, const TaskOracle& oracle, MetaContext<TokenSequence> m, std::uint64_t seed)
      : policy(oracle.vocab_size, oracle.length),
        replay(cfg.replay_capacity),
        high_reward(cfg.high_reward_capacity),
        meta(std::move(m)),
        rng(seed) {}

  std::optional<double> best_found() const {
    if (best_found_trace.empty()) return std::nullopt;
    return best_found_trace.back();
  }

  bool budget_exhausted(const GfnConfig& cfg) const {
    return cfg.oracle_budget > 0 && oracle_calls >= cfg.oracle_budget;
  }
};

/// Scores z with the oracle, charging one oracle call.
inline ScoredSequence evaluate(TrainerState& state, const TaskOracle& oracle, TokenSequence z) {
  const double a = oracle.correct_count(z);
  ++state.oracle_calls;
  const double best = state.best_found_trace.empty() ? a : std::max(a, state.best_found_trace.back());
  state.best_found_trace.push_back(best);
  return {std::move(z), a, state.oracle_calls};
}

/**
 * Replay warm-up: n draws from the reference prior, each at a temperature
 * drawn uniformly from [temp_low, temp_high], scored and added to B. Neither
 * theta nor Q is touched. Stops early if the oracle budget runs out.
 */
inline void pre_step(TrainerState& state, const GfnConfig& cfg, const TaskOracle& oracle,
                     const KernelPrior& prior, int n) {
  for (int i = 0; i < n && !state.budget_exhausted(cfg); ++i) {
    const double tau = state.rng.uniform(cfg.temp_low, cfg.temp_high);
    auto z = prior.sample(state.meta, state.rng, tau);
    state.replay.add(evaluate(state, oracle, std::move(z)));
  }
}

/**
 * Draws m items from the mixture training policy. Each item independently
 * comes online (probability rho: tempered policy sample, scored, added to B
 * and offered to Q) or from a uniform draw over B. Replayed items reuse the
 * cached correct count and cost no oracle call.
 */
inline std::vector<BatchItem> sample_training_batch(TrainerState& state, const GfnConfig& cfg,
                                                    const TaskOracle& oracle, const KernelPrior& prior,
                                                    int m) {
  if (cfg.rho < 1.0 && state.replay.empty())
    throw EmptyBuffer("replay buffer is empty with rho < 1; run the pre-step first");
  std::vector<BatchItem> batch;
  batch.reserve(static_cast<std::size_t>(m));
  for (int i = 0; i < m; ++i) {
    const bool online = state.rng.bernoulli(cfg.rho);
    const double tau = state.rng.uniform(cfg.temp_low, cfg.temp_high);
    BatchItem item;
    if (online) {
      auto scored = evaluate(state, oracle, state.policy.sample(tau, state.rng));
      state.replay.add(scored);
      state.high_reward.offer(scored);
      item.sequence = std::move(scored.sequence);
      item.correct_count = scored.correct_count;
      item.source = Source::online;
    } else {
      const auto& replayed = state.replay.sample_uniform(state.rng);
      item.sequence = replayed.sequence;
      item.correct_count = replayed.correct_count;
      item.source = Source::replay;
    }
    item.log_p_theta = state.policy.log_prob(item.sequence);
    item.log_reward = log_reward(item.correct_count, prior.log_prob(item.sequence, state.meta));
    batch.push_back(std::move(item));
  }
  return batch;
}

/// Minibatch log-partition estimate: mean of log R - log p_theta.
inline double batch_log_z(std::span<const BatchItem> batch) {
  if (batch.empty()) throw EmptyBatch("cannot estimate log Z from an empty batch");
  double s = 0.0;
  for (const auto& it : batch) s += it.log_reward - it.log_p_theta;
  return s / static_cast<double>(batch.size());
}

/// EMA that initializes at its first observation.
inline double ema_update(std::optional<double> ema, double estimate, double decay) {
  if (!ema) return estimate;
  return decay * *ema + (1.0 - decay) * estimate;
}

struct LossResult {
  double loss = 0.0;
  SparseGradient gradient;
  std::vector<double> residuals;
};

/**
 * VarGrad loss (1/B) sum (log_z + log p_theta - log R)^2 and its gradient
 * with respect to the policy logits. log_z is a batch statistic, so no
 * gradient flows through it.
 */
inline LossResult vargrad_loss(std::span<const BatchItem> batch, double log_z, const TabularPolicy& policy) {
  if (batch.empty()) throw EmptyBatch("cannot compute the loss of an empty batch");
  LossResult out{0.0, SparseGradient(policy.vocab_size()), {}};
  const double inv_b = 1.0 / static_cast<double>(batch.size());
  out.residuals.reserve(batch.size());
  for (const auto& it : batch) {
    const double r = log_z + it.log_p_theta - it.log_reward;
    out.residuals.push_back(r);
    out.loss += r * r * inv_b;
    policy.accumulate_grad_log_prob(it.sequence, 2.0 * r * inv_b, out.gradient);
  }
  return out;
}

/// Per-step metrics record.
struct StepMetrics {
  std::uint64_t step = 0;
  double loss = 0.0;
  double raw_log_z = 0.0;
  double ema_log_z = 0.0;
  int online_count = 0;
  std::optional<double> best_q_score;
  std::optional<double> tv_to_posterior;
  std::uint64_t oracle_calls = 0;
};

/// One iteration: batch, log Z estimate and EMA, loss, gradient step.
inline StepMetrics train_step(TrainerState& state, const GfnConfig& cfg, const TaskOracle& oracle,
                              const KernelPrior& prior) {
  const auto batch = sample_training_batch(state, cfg, oracle, prior, cfg.batch_size);
  const double raw = batch_log_z(batch);
  state.ema_log_z = ema_update(state.ema_log_z, raw, cfg.ema_decay);
  const double log_z = cfg.use_raw_log_z ? raw : *state.ema_log_z;
  const auto result = vargrad_loss(batch, log_z, state.policy);
  state.policy.apply_gradient(result.gradient, cfg.learning_rate);
  ++state.step;

  StepMetrics m;
  m.step = state.step;
  m.loss = result.loss;
  m.raw_log_z = raw;
  m.ema_log_z = *state.ema_log_z;
  m.online_count = static_cast<int>(
      std::count_if(batch.begin(), batch.end(), [](const BatchItem& b) { return b.source == Source::online; }));
  if (auto best = state.high_reward.best()) m.best_q_score = best->correct_count;
  m.oracle_calls = state.oracle_calls;
  return m;
}

}  // namespace gflowpo
