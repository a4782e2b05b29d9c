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
#include <cstdio>
#include <deque>
#include <functional>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "gflowpo/buffers.hpp"
#include "gflowpo/gfn.hpp"
#include "gflowpo/posterior.hpp"
#include "gflowpo/run.hpp"

namespace gflowpo::selftest {

struct CriterionResult {
  int id = 0;
  std::string name;
  bool passed = false;
  std::string detail;
};

inline std::string format(const char* fmt, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof(buf), fmt, args...);
  return buf;
}

/// The 625-sequence task used for convergence: V=5, L=4, six predicates, two fixed references.
struct SmallTask {
  TaskOracle oracle;
  KernelPrior prior;
  MetaContext<TokenSequence> meta;
};

inline SmallTask small_task() {
  SmallTask t;
  t.oracle.vocab_size = 5;
  t.oracle.length = 4;
  t.oracle.epsilon = 0.1;
  t.oracle.examples = {TokenAt{0, 1},           TokenAt{2, 3},           ContainsSubsequence{{2, 3}},
                       CountOfToken{4, 1},      ContainsSubsequence{{0, 0}}, TokenAt{3, 2}};
  t.prior = KernelPrior{0.5, 0.25, 5, 4};
  t.meta.reference_set = {TokenSequence{1, 2, 3, 4}, TokenSequence{0, 0, 3, 2}};
  return t;
}

/**
 * Two-cluster task for the ablation criteria. V=8, L=6. Cluster one is
 * (1 3 5 7 1 3): one predicate per position plus its contiguous 3-windows.
 * Cluster two is (7 6 5 4 3 2): its contiguous 2-windows. The centres are
 * at Hamming distance 5.
 */
inline SmallTask two_cluster_task() {
  SmallTask t;
  t.oracle.vocab_size = 8;
  t.oracle.length = 6;
  t.oracle.epsilon = 0.1;
  const std::vector<TokenId> c1 = {1, 3, 5, 7, 1, 3}, c2 = {7, 6, 5, 4, 3, 2};
  for (int i = 0; i < 6; ++i) t.oracle.examples.push_back(TokenAt{i, c1[static_cast<std::size_t>(i)]});
  for (std::size_t i = 0; i + 3 <= c1.size(); ++i)
    t.oracle.examples.push_back(ContainsSubsequence{{c1.begin() + i, c1.begin() + i + 3}});
  for (std::size_t i = 0; i + 2 <= c2.size(); ++i)
    t.oracle.examples.push_back(ContainsSubsequence{{c2.begin() + i, c2.begin() + i + 2}});
  t.prior = KernelPrior{0.5, 0.25, 8, 6};
  return t;
}

/// Tabular logits whose autoregressive factorization reproduces `probs`
/// (indexed like SequenceSpace). Each conditional logit is the log of the
/// prefix marginal, so the softmax over a row gives the exact conditional.
inline TabularPolicy policy_matching(const std::vector<double>& probs, int vocab_size, int length) {
  const SequenceSpace space(vocab_size, length, probs.size());
  std::map<Prefix, double> mass;
  for (std::size_t i = 0; i < space.size(); ++i) {
    const auto z = space.at(i);
    for (int k = 0; k <= length; ++k) mass[Prefix(z.tokens.begin(), z.tokens.begin() + k)] += probs[i];
  }
  TabularPolicy policy(vocab_size, length);
  for (const auto& [prefix, m] : mass) {
    if (static_cast<int>(prefix.size()) == length) continue;
    std::vector<double> row(static_cast<std::size_t>(vocab_size));
    Prefix child = prefix;
    child.push_back(0);
    for (int b = 0; b < vocab_size; ++b) {
      child.back() = b;
      const auto it = mass.find(child);
      row[static_cast<std::size_t>(b)] = std::log(it == mass.end() ? 0.0 : it->second);
    }
    policy.set_logits(prefix, std::move(row));
  }
  return policy;
}

inline TokenSequence random_sequence(int vocab_size, int length, RngStream& rng) {
  TokenSequence z;
  for (int i = 0; i < length; ++i) z.tokens.push_back(static_cast<TokenId>(rng.uniform_index(static_cast<std::uint64_t>(vocab_size))));
  return z;
}

// --- criteria ---------------------------------------------------------------

inline CriterionResult posterior_convergence() {
  const auto task = small_task();
  RunSettings s;
  s.gfn.learning_rate = 0.5;
  s.gfn.train_steps = 5000;
  s.dmu.variant = DmuVariant::off;
  s.log_elbo = false;
  s.tv_every = 500;
  double worst = 0.0;
  std::string per_seed;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto r = run(s, task.oracle, task.prior, task.meta, seed);
    const double tv = *r.metrics.back().tv_to_posterior;
    worst = std::max(worst, tv);
    per_seed += format(" %.4f", tv);
  }
  return {1, "posterior convergence", worst <= 0.05,
          format("final TV over 5 seeds:%s (max %.4f, threshold 0.05)", per_seed.c_str(), worst)};
}

inline CriterionResult gradient_check() {
  RngStream rng(20240601);
  double worst = 0.0;
  int coords = 0;
  for (int state = 0; state < 10; ++state) {
    const int V = 3 + static_cast<int>(rng.uniform_index(3)), L = 2 + static_cast<int>(rng.uniform_index(3));
    TabularPolicy policy(V, L);
    std::vector<BatchItem> batch(8);
    for (auto& it : batch) {
      it.sequence = random_sequence(V, L, rng);
      it.log_reward = rng.uniform(-8.0, 1.0);
      for (int k = 0; k < L; ++k) {
        const Prefix p(it.sequence.tokens.begin(), it.sequence.tokens.begin() + k);
        std::vector<double> row(static_cast<std::size_t>(V));
        for (auto& v : row) v = rng.uniform(-2.0, 2.0);
        policy.set_logits(p, row);
      }
    }
    const double log_z = rng.uniform(-3.0, 3.0);
    auto loss_at = [&](const TabularPolicy& pol) {
      std::vector<BatchItem> b = batch;
      for (auto& it : b) it.log_p_theta = pol.log_prob(it.sequence);
      return vargrad_loss(b, log_z, pol).loss;
    };
    for (auto& it : batch) it.log_p_theta = policy.log_prob(it.sequence);
    const auto analytic = vargrad_loss(batch, log_z, policy).gradient;
    std::vector<std::pair<Prefix, TokenId>> candidates;
    for (const auto& [prefix, row] : analytic.rows())
      for (int b = 0; b < V; ++b) candidates.emplace_back(prefix, b);
    for (int c = 0; c < 12; ++c) {
      const auto& [prefix, b] = candidates[rng.uniform_index(candidates.size())];
      const double h = 1e-5;
      TabularPolicy plus = policy, minus = policy;
      auto row = policy.logits(prefix);
      row[static_cast<std::size_t>(b)] += h;
      plus.set_logits(prefix, row);
      row[static_cast<std::size_t>(b)] -= 2 * h;
      minus.set_logits(prefix, row);
      const double fd = (loss_at(plus) - loss_at(minus)) / (2 * h);
      const double g = analytic.at(prefix, b);
      const double rel = std::abs(g - fd) / std::max({std::abs(g), std::abs(fd), 1e-6});
      worst = std::max(worst, rel);
      ++coords;
    }
  }
  return {2, "gradient correctness", worst <= 1e-4 && coords >= 100,
          format("%d coordinates over 10 states, max relative error %.3g (threshold 1e-4)", coords, worst)};
}

inline CriterionResult optimum_fixed_point() {
  const auto task = small_task();
  const auto post = exact_posterior(task.oracle, task.prior, task.meta);
  const auto policy = policy_matching(post.probabilities, 5, 4);
  RngStream rng(7);
  double worst = 0.0;
  for (int b = 0; b < 100; ++b) {
    std::vector<BatchItem> batch(8);
    for (auto& it : batch) {
      it.sequence = random_sequence(5, 4, rng);
      it.log_p_theta = policy.log_prob(it.sequence);
      it.log_reward = log_reward(task.oracle.correct_count(it.sequence), task.prior.log_prob(it.sequence, task.meta));
    }
    worst = std::max(worst, vargrad_loss(batch, post.log_partition, policy).loss);
  }
  return {3, "optimum fixed point", worst <= 1e-10,
          format("max loss over 100 batches %.3g (threshold 1e-10)", worst)};
}

inline CriterionResult prior_normalization() {
  RngStream rng(11);
  const SequenceSpace space(4, 4);
  double worst = 0.0;
  for (int c = 0; c < 50; ++c) {
    KernelPrior prior{rng.uniform(), rng.uniform(0.01, 0.99), 4, 4};
    std::vector<TokenSequence> refs;
    const auto n_refs = rng.uniform_index(5);
    for (std::uint64_t i = 0; i < n_refs; ++i) refs.push_back(random_sequence(4, 4, rng));
    double total = 0.0;
    for (std::size_t i = 0; i < space.size(); ++i) total += std::exp(prior.log_prob(space.at(i), refs));
    worst = std::max(worst, std::abs(total - 1.0));
  }
  return {4, "prior normalization", worst <= 1e-9,
          format("max |sum - 1| over 50 configurations %.3g (threshold 1e-9)", worst)};
}

inline CriterionResult log_z_consistency() {
  const auto task = small_task();
  const auto post = exact_posterior(task.oracle, task.prior, task.meta);
  const auto policy = policy_matching(post.probabilities, 5, 4);
  RngStream rng(13);
  double worst_z = 0.0;
  for (int b = 0; b < 100; ++b) {
    std::vector<BatchItem> batch(8);
    for (auto& it : batch) {
      it.sequence = policy.sample(1.0, rng);
      it.log_p_theta = policy.log_prob(it.sequence);
      it.log_reward = log_reward(task.oracle.correct_count(it.sequence), task.prior.log_prob(it.sequence, task.meta));
    }
    worst_z = std::max(worst_z, std::abs(batch_log_z(batch) - post.log_partition));
  }
  const double c = -3.25, e0 = 4.0, decay = 0.99;
  std::optional<double> ema = e0;
  double worst_ema = 0.0;
  for (int t = 1; t <= 1000; ++t) {
    ema = ema_update(ema, c, decay);
    const double expected = std::pow(decay, t) * std::abs(e0 - c);
    worst_ema = std::max(worst_ema, std::abs(std::abs(*ema - c) - expected));
  }
  return {5, "log-Z estimator consistency", worst_z <= 1e-9 && worst_ema <= 1e-12,
          format("max |batch log Z - log partition| %.3g (1e-9); max EMA deviation from geometric decay %.3g (1e-12)",
                 worst_z, worst_ema)};
}

inline CriterionResult mixture_ratio() {
  const auto task = small_task();
  GfnConfig cfg;
  cfg.rho = 0.5;
  TrainerState state(cfg, task.oracle, task.meta, 17);
  pre_step(state, cfg, task.oracle, task.prior, cfg.pre_steps);
  int online = 0, total = 0;
  while (total < 10000) {
    for (const auto& it : sample_training_batch(state, cfg, task.oracle, task.prior, cfg.batch_size)) {
      online += it.source == Source::online;
      ++total;
    }
  }
  const double frac = static_cast<double>(online) / total;
  return {6, "mixture ratio", frac >= 0.485 && frac <= 0.515,
          format("online fraction %.4f over %d items (band [0.485, 0.515])", frac, total)};
}

inline CriterionResult buffer_correctness() {
  RngStream rng(19);
  using Item = ScoredSequence;
  HighRewardBuffer<TokenSequence> q(5);
  std::vector<Item> log;
  bool top_ok = true;
  // scores are a fixed function of the sequence, as with a deterministic oracle
  const SequenceSpace space(4, 3);
  std::vector<double> score(space.size());
  for (auto& v : score) v = static_cast<double>(rng.uniform_index(8)) + 0.1;
  for (int i = 0; i < 10000; ++i) {
    auto z = random_sequence(4, 3, rng);
    const double a = score[space.index_of(z)];
    Item it{std::move(z), a, static_cast<std::uint64_t>(i + 1)};
    q.offer(it);
    log.push_back(it);
    if (i % 97 != 0 && i != 9999) continue;
    // brute force: each distinct sequence is represented by its earliest offer
    std::map<TokenSequence, Item> best;
    for (const auto& o : log) best.emplace(o.sequence, o);
    std::vector<Item> all;
    for (const auto& [_, o] : best) all.push_back(o);
    std::sort(all.begin(), all.end(), [](const Item& a, const Item& b) {
      if (a.correct_count != b.correct_count) return a.correct_count > b.correct_count;
      return a.insertion_step < b.insertion_step;
    });
    all.resize(std::min<std::size_t>(5, all.size()));
    if (all != q.snapshot()) top_ok = false;
  }

  bool fifo_ok = true;
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t cap = 1 + rng.uniform_index(20);
    ReplayBuffer<TokenSequence> b(cap);
    std::deque<Item> model;
    const auto n = rng.uniform_index(3 * cap + 5);
    for (std::uint64_t i = 0; i < n; ++i) {
      Item it{random_sequence(2, 2, rng), 1.0, i + 1};
      b.add(it);
      model.push_back(it);
      if (model.size() > cap) model.pop_front();
    }
    if (b.snapshot() != std::vector<Item>(model.begin(), model.end())) fifo_ok = false;
  }
  return {7, "buffer correctness", top_ok && fifo_ok,
          format("top-5 vs brute force: %s; FIFO eviction on 200 randomized overflow runs: %s",
                 top_ok ? "match" : "MISMATCH", fifo_ok ? "match" : "MISMATCH")};
}

// --- ablation criteria --------------------------------------------------------

struct AblationStudy {
  std::vector<double> off_o;  // final best-found A per seed
  std::vector<double> on_x;
  std::vector<double> off_o_curve;  // mean best-found A at each checkpoint
  std::vector<double> on_x_curve;
  std::vector<std::uint64_t> checkpoints;
};

inline constexpr std::uint64_t kAblationBudget = 500;
inline constexpr int kAblationSeeds = 20;

/// Runs both compared variants on the two-cluster task over seeds 1..20 with a 500-call budget.
inline AblationStudy ablation_study() {
  const auto task = two_cluster_task();
  AblationStudy s;
  for (std::uint64_t c = 25; c <= kAblationBudget; c += 25) s.checkpoints.push_back(c);
  s.off_o_curve.assign(s.checkpoints.size(), 0.0);
  s.on_x_curve.assign(s.checkpoints.size(), 0.0);
  for (int seed = 1; seed <= kAblationSeeds; ++seed) {
    for (const bool off_policy : {true, false}) {
      RunSettings rs;
      rs.gfn.learning_rate = 0.5;
      rs.gfn.train_steps = 1000000;
      rs.gfn.oracle_budget = kAblationBudget;
      rs.gfn.rho = off_policy ? 0.5 : 1.0;
      rs.dmu.variant = off_policy ? DmuVariant::both_buffers : DmuVariant::off;
      rs.log_elbo = false;
      rs.tv_every = 0;
      const auto r = run(rs, task.oracle, task.prior, task.meta, static_cast<std::uint64_t>(seed));
      const auto& trace = r.state.best_found_trace;
      (off_policy ? s.off_o : s.on_x).push_back(trace.at(kAblationBudget - 1));
      auto& curve = off_policy ? s.off_o_curve : s.on_x_curve;
      for (std::size_t i = 0; i < s.checkpoints.size(); ++i)
        curve[i] += trace.at(s.checkpoints[i] - 1) / kAblationSeeds;
    }
  }
  return s;
}

/// One-sided sign test: P(X >= wins) for X ~ Binomial(n, 1/2).
inline double sign_test_p(int wins, int n) {
  double p = 0.0;
  for (int k = wins; k <= n; ++k) p += std::exp(std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0) - n * std::log(2.0));
  return std::min(1.0, p);
}

inline CriterionResult ablation_direction(const AblationStudy& s) {
  int wins = 0, losses = 0;
  double mean_off = 0.0, mean_on = 0.0;
  for (std::size_t i = 0; i < s.off_o.size(); ++i) {
    wins += s.off_o[i] > s.on_x[i];
    losses += s.off_o[i] < s.on_x[i];
    mean_off += s.off_o[i] / static_cast<double>(s.off_o.size());
    mean_on += s.on_x[i] / static_cast<double>(s.on_x.size());
  }
  const double p = sign_test_p(wins, wins + losses);
  return {8, "ablation direction", mean_off > mean_on && p < 0.1,
          format("mean best-found A off-O %.3f vs on-X %.3f; wins %d losses %d ties %d; sign test p=%.3f (threshold 0.1)",
                 mean_off, mean_on, wins, losses, static_cast<int>(s.off_o.size()) - wins - losses, p)};
}

inline CriterionResult sample_efficiency(const AblationStudy& s) {
  int weak = 0, strict = 0;
  for (std::size_t i = 0; i < s.checkpoints.size(); ++i) {
    weak += s.off_o_curve[i] >= s.on_x_curve[i];
    strict += s.off_o_curve[i] > s.on_x_curve[i];
  }
  const int n = static_cast<int>(s.checkpoints.size());
  return {9, "sample-efficiency curve", weak * 10 >= n * 7,
          format("off-O mean curve >= on-X at %d/%d checkpoints (strictly above at %d); need >= 70%%", weak, n, strict)};
}

/// Criteria 1 to 9, in order.
inline std::vector<CriterionResult> run_core_criteria() {
  std::vector<CriterionResult> out = {posterior_convergence(), gradient_check(), optimum_fixed_point(),
                                      prior_normalization(),   log_z_consistency(), mixture_ratio(),
                                      buffer_correctness()};
  const auto study = ablation_study();
  out.push_back(ablation_direction(study));
  out.push_back(sample_efficiency(study));
  return out;
}

inline std::string format_line(const CriterionResult& r) {
  return format("[%s] criterion %d: %s: %s", r.passed ? "PASS" : "FAIL", r.id, r.name.c_str(), r.detail.c_str());
}

}  // namespace gflowpo::selftest
