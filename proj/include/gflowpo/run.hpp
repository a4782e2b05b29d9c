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

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "gflowpo/dmu.hpp"
#include "gflowpo/gfn.hpp"
#include "gflowpo/posterior.hpp"

namespace gflowpo {

struct RunSettings {
  GfnConfig gfn;
  DmuConfig dmu;
  int tv_every = 25;       // 0 disables the TV diagnostic
  bool log_elbo = true;    // exact ELBO before/after each memory update
  std::size_t enumeration_cap = kDefaultEnumerationCap;
};

/// One dynamic memory update.
struct DmuEvent {
  std::uint64_t step = 0;
  std::vector<TokenSequence> reference_set;
  std::optional<ElboEstimate> elbo_before;
  std::optional<ElboEstimate> elbo_after;
  std::vector<double> q_scores;
};

struct RunResult {
  TrainerState state;
  std::vector<StepMetrics> metrics;
  std::vector<DmuEvent> dmu_events;
  std::string variant_label;

  /// Top-1 of the final high-reward buffer.
  std::optional<ScoredSequence> best() const { return state.high_reward.best(); }
};

/// "-on/-off" for on- or off-policy training, "-O/-X" for memory update on or off.
inline std::string variant_label(const RunSettings& s) {
  std::string label = "gflowpo";
  label += s.gfn.rho >= 1.0 ? "-on" : "-off";
  label += s.dmu.variant == DmuVariant::off ? "-X" : "-O";
  return label;
}

inline bool enumerable(const TaskOracle& oracle, std::size_t cap) {
  try {
    SequenceSpace(oracle.vocab_size, oracle.length, cap);
    return true;
  } catch (const TooLarge&) {
    return false;
  }
}

/**
 * The full loop: pre-step, then up to train_steps iterations of train_step
 * with a memory update every dmu_every steps. Stops early once the oracle
 * budget (if any) is spent. `on_step` sees every metrics record as it is
 * produced.
 */
inline RunResult run(const RunSettings& settings, const TaskOracle& oracle, const KernelPrior& prior,
                     MetaContext<TokenSequence> initial_meta, std::uint64_t seed,
                     const std::function<void(const StepMetrics&)>& on_step = {}) {
  settings.gfn.validate();
  settings.dmu.validate();
  oracle.validate();
  prior.validate();

  RunResult result{TrainerState(settings.gfn, oracle, std::move(initial_meta), seed), {}, {}, variant_label(settings)};
  TrainerState& state = result.state;
  const bool can_enumerate = enumerable(oracle, settings.enumeration_cap);

  pre_step(state, settings.gfn, oracle, prior, settings.gfn.pre_steps);

  std::optional<PosteriorTable> posterior;
  auto elbo = [&]() -> std::optional<ElboEstimate> {
    if (!settings.log_elbo || !can_enumerate) return std::nullopt;
    return elbo_estimate(state.policy, oracle, prior, state.meta, settings.enumeration_cap);
  };

  for (int t = 1; t <= settings.gfn.train_steps; ++t) {
    if (state.budget_exhausted(settings.gfn)) break;
    StepMetrics m = train_step(state, settings.gfn, oracle, prior);

    if (can_enumerate && settings.tv_every > 0 && m.step % static_cast<std::uint64_t>(settings.tv_every) == 0) {
      if (!posterior) posterior = exact_posterior(oracle, prior, state.meta, settings.enumeration_cap);
      m.tv_to_posterior = tv_distance(state.policy.enumerate(settings.enumeration_cap), posterior->probabilities);
    }

    if (settings.dmu.variant != DmuVariant::off && t % settings.gfn.dmu_every == 0) {
      DmuEvent ev;
      ev.step = state.step;
      ev.reference_set = sample_reference_set(state.replay, state.high_reward, settings.dmu, state.rng);
      ev.elbo_before = elbo();
      if (ev.reference_set != state.meta.reference_set) posterior.reset();
      state.meta = dmu_update(std::move(state.meta), ev.reference_set);
      ev.elbo_after = elbo();
      for (const auto& q : state.high_reward) ev.q_scores.push_back(q.correct_count);
      result.dmu_events.push_back(std::move(ev));
    }

    if (on_step) on_step(m);
    result.metrics.push_back(m);
  }
  return result;
}

}  // namespace gflowpo
