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
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gflowpo/buffers.hpp"
#include "gflowpo/config.hpp"
#include "gflowpo/dmu.hpp"
#include "gflowpo/lm/client.hpp"
#include "gflowpo/lm/evaluate.hpp"
#include "gflowpo/lm/meta_prompt.hpp"
#include "gflowpo/meta_context.hpp"
#include "gflowpo/rng.hpp"

namespace gflowpo::lm {

/// Per-step record of the frozen-sampler search.
struct SearchMetrics {
  std::uint64_t step = 0;
  int online_count = 0;
  std::optional<double> best_q_score;
  std::uint64_t oracle_calls = 0;
  double mean_correct_count = 0.0;
  std::optional<double> mean_log_reward;  // only when the prior is scored
};

struct SearchDmuEvent {
  std::uint64_t step = 0;
  std::vector<std::string> reference_set;
  std::vector<double> q_scores;
};

struct SearchResult {
  ReplayBuffer<std::string> replay;
  HighRewardBuffer<std::string> high_reward;
  MetaContext<std::string> meta;
  std::vector<SearchMetrics> metrics;
  std::vector<SearchDmuEvent> dmu_events;
  std::uint64_t oracle_calls = 0;
  std::vector<double> best_found_trace;
  std::string variant_label;
};

/// "frozen" marks the partial mode: the sampler's parameters never change.
inline std::string search_variant_label(const DmuConfig& dmu) {
  return std::string("gflowpo-frozen-on-") + (dmu.variant == DmuVariant::off ? "X" : "O");
}

/// Meta-context with num_shots dataset examples drawn once on a stream separate from sampling.
inline MetaContext<std::string> make_lm_meta(const std::vector<LabeledExample>& dataset, int num_shots,
                                             std::uint64_t seed) {
  MetaContext<std::string> meta;
  RngStream shot_rng(seed ^ 0x5407ull);
  std::vector<std::size_t> idx(dataset.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  const std::size_t k = std::min<std::size_t>(static_cast<std::size_t>(std::max(num_shots, 0)), idx.size());
  for (std::size_t i = 0; i < k; ++i) {
    std::swap(idx[i], idx[i + shot_rng.uniform_index(idx.size() - i)]);
    meta.shots.push_back({dataset[idx[i]].input, dataset[idx[i]].output});
  }
  return meta;
}

/**
 * Search loop against a remote model whose weights cannot be updated.
 * Pre-step fills B from samples at tempered temperatures; each of the
 * train_steps iterations draws batch_size fresh prompts from the current
 * meta-prompt, scores them, adds them to B and offers them to Q, then
 * rewrites the reference set every dmu_every steps. Replay draws would feed
 * only a gradient step, so every item is online.
 */
inline SearchResult lm_search(const RunConfig& cfg, CompletionsClient& client,
                              const std::vector<LabeledExample>& dataset,
                              const std::function<void(const SearchMetrics&)>& on_step = {}) {
  if (cfg.mode != RunMode::lm) throw ConfigError("mode: lm_search needs mode 'lm'");
  const auto& g = cfg.settings.gfn;
  if (g.learning_rate != 0.0)
    throw ConfigError("gfn.learning_rate: gradient steps need the tabular policy and are unavailable in lm mode");

  EvalOptions eval;
  if (!cfg.lm.verbalizer.empty()) eval.verbalizer = Verbalizer{cfg.lm.verbalizer};
  eval.epsilon = cfg.lm.epsilon;
  eval.max_parallel_requests = cfg.lm.max_parallel_requests;
  eval.max_answer_tokens = cfg.lm.max_answer_tokens;

  SearchResult r{ReplayBuffer<std::string>(g.replay_capacity), HighRewardBuffer<std::string>(g.high_reward_capacity),
                 make_lm_meta(dataset, cfg.num_shots, *cfg.seed), {}, {}, 0, {}, search_variant_label(cfg.settings.dmu)};
  RngStream rng(*cfg.seed);
  std::uint64_t step = 0;
  auto exhausted = [&] { return g.oracle_budget > 0 && r.oracle_calls >= g.oracle_budget; };

  struct Scored {
    ScoredItem<std::string> item;
    std::optional<double> log_reward;
  };
  auto sample_and_score = [&](double tau) {
    const std::string meta_text = render_meta_prompt(r.meta);
    auto cand = lm_sample_prompt(client, meta_text, tau, cfg.lm.max_prompt_tokens);
    const double a = lm_eval_accuracy(client, cand.text, dataset, eval);
    ++r.oracle_calls;
    r.best_found_trace.push_back(r.best_found_trace.empty() ? a : std::max(a, r.best_found_trace.back()));
    std::optional<double> log_r;
    if (cfg.lm.score_prior) log_r = std::log(a) + lm_score_logprob(client, meta_text + " ", cand.text);
    return Scored{{std::move(cand.text), a, r.oracle_calls}, log_r};
  };

  for (int i = 0; i < g.pre_steps && !exhausted(); ++i)
    r.replay.add(sample_and_score(rng.uniform(g.temp_low, g.temp_high)).item);

  for (int t = 1; t <= g.train_steps && !exhausted(); ++t) {
    SearchMetrics m;
    m.step = ++step;
    double sum_a = 0.0, sum_log_r = 0.0;
    for (int j = 0; j < g.batch_size && !exhausted(); ++j) {
      Scored s = sample_and_score(rng.uniform(g.temp_low, g.temp_high));
      ++m.online_count;
      sum_a += s.item.correct_count;
      if (s.log_reward) sum_log_r += *s.log_reward;
      r.high_reward.offer(s.item);
      r.replay.add(std::move(s.item));
    }
    if (m.online_count > 0) {
      m.mean_correct_count = sum_a / m.online_count;
      if (cfg.lm.score_prior) m.mean_log_reward = sum_log_r / m.online_count;
    }
    if (cfg.settings.dmu.variant != DmuVariant::off && t % g.dmu_every == 0) {
      SearchDmuEvent ev;
      ev.step = step;
      ev.reference_set = sample_reference_set(r.replay, r.high_reward, cfg.settings.dmu, rng);
      r.meta = dmu_update(std::move(r.meta), ev.reference_set);
      for (const auto& q : r.high_reward) ev.q_scores.push_back(q.correct_count);
      r.dmu_events.push_back(std::move(ev));
    }
    if (auto best = r.high_reward.best()) m.best_q_score = best->correct_count;
    m.oracle_calls = r.oracle_calls;
    if (on_step) on_step(m);
    r.metrics.push_back(m);
  }
  return r;
}

inline nlohmann::json to_json(const SearchMetrics& m) {
  using nlohmann::json;
  return {{"step", m.step},
          {"loss", nullptr},
          {"raw_log_z", nullptr},
          {"ema_log_z", nullptr},
          {"online_count", m.online_count},
          {"best_Q_score", m.best_q_score ? json(*m.best_q_score) : json()},
          {"tv_to_posterior", nullptr},
          {"oracle_calls", m.oracle_calls},
          {"mean_correct_count", m.mean_correct_count},
          {"mean_log_reward", m.mean_log_reward ? json(*m.mean_log_reward) : json()}};
}

/// Writes the same artifact layout as a toy run, minus the policy snapshot.
inline void write_search_artifacts(const std::filesystem::path& dir, const RunConfig& cfg, const SearchResult& r) {
  using nlohmann::json;
  std::filesystem::create_directories(dir);
  std::ofstream(dir / "run_header.json") << run_header(cfg, r.variant_label).dump(2) << '\n';
  {
    std::ofstream out(dir / "metrics.jsonl");
    for (const auto& m : r.metrics) out << to_json(m).dump() << '\n';
  }
  {
    std::ofstream out(dir / "dmu_events.jsonl");
    for (const auto& e : r.dmu_events)
      out << json{{"step", e.step}, {"z_ref", e.reference_set}, {"q_scores", e.q_scores}}.dump() << '\n';
  }
  { std::ofstream out(dir / "replay_buffer.tsv"); write_records(out, r.replay.snapshot()); }
  { std::ofstream out(dir / "high_reward_buffer.tsv"); write_records(out, r.high_reward.snapshot()); }
  const auto best = r.high_reward.best();
  json summary = {{"variant", r.variant_label},
                  {"seed", *cfg.seed},
                  {"steps", r.metrics.size()},
                  {"oracle_calls", r.oracle_calls},
                  {"best_found", r.best_found_trace.empty() ? json() : json(r.best_found_trace.back())},
                  {"best_prompt", best ? json(best->sequence) : json()},
                  {"best_score", best ? json(best->correct_count) : json()},
                  {"best_found_trace", r.best_found_trace}};
  std::ofstream(dir / "summary.json") << summary.dump(2) << '\n';
}

}  // namespace gflowpo::lm
