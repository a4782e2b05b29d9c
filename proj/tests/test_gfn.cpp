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

#include <gtest/gtest.h>

#include <cmath>

#include "gflowpo/gfn.hpp"
#include "gflowpo/run.hpp"
#include "gflowpo/selftest.hpp"

using namespace gflowpo;

namespace {

BatchItem bi(double log_reward, double log_p) {
  BatchItem b;
  b.log_reward = log_reward;
  b.log_p_theta = log_p;
  return b;
}

}  // namespace

TEST(BatchLogZ, Arithmetic) {
  const std::vector<BatchItem> two = {bi(-2.0, -3.0), bi(-1.0, -2.5)};
  EXPECT_DOUBLE_EQ(batch_log_z(two), 1.25);
  const std::vector<BatchItem> one = {bi(-0.7, -4.2)};
  EXPECT_EQ(batch_log_z(one), -0.7 - -4.2);
  EXPECT_THROW(batch_log_z(std::vector<BatchItem>{}), EmptyBatch);
}

TEST(EmaUpdate, InitializationAndStep) {
  EXPECT_EQ(ema_update(std::nullopt, 1.25, 0.99), 1.25);
  EXPECT_NEAR(ema_update(0.0, 1.25, 0.99), 0.0125, 1e-15);
}

TEST(VarGradLoss, TwoItemExample) {
  TabularPolicy p(2, 1);
  std::vector<BatchItem> batch = {bi(-2.0, -3.0), bi(-1.0, -2.5)};
  batch[0].sequence = TokenSequence{0};
  batch[1].sequence = TokenSequence{1};
  const auto r = vargrad_loss(batch, batch_log_z(batch), p);
  // residual = log Z + log p - log R
  EXPECT_NEAR(r.residuals[0], 0.25, 1e-15);
  EXPECT_NEAR(r.residuals[1], -0.25, 1e-15);
  EXPECT_NEAR(r.loss, 0.0625, 1e-15);
  // d/dlogit_b = (1/B) sum 2 r_i (1[b=z_i] - 0.5)
  EXPECT_NEAR(r.gradient.at({}, 0), 0.5 * (2 * 0.25 * 0.5 + 2 * -0.25 * -0.5), 1e-15);
  EXPECT_NEAR(r.gradient.at({}, 1), 0.5 * (2 * 0.25 * -0.5 + 2 * -0.25 * 0.5), 1e-15);
}

TEST(VarGradLoss, ZeroAtOptimum) {
  const auto t = selftest::small_task();
  const auto post = exact_posterior(t.oracle, t.prior, t.meta);
  const auto policy = selftest::policy_matching(post.probabilities, 5, 4);
  // the matching policy reproduces the posterior exactly
  EXPECT_LT(tv_distance(policy.enumerate(), post.probabilities), 1e-12);
  RngStream rng(30);
  std::vector<BatchItem> batch(8);
  for (auto& it : batch) {
    it.sequence = selftest::random_sequence(5, 4, rng);
    it.log_p_theta = policy.log_prob(it.sequence);
    it.log_reward = log_reward(t.oracle.correct_count(it.sequence), t.prior.log_prob(it.sequence, t.meta));
  }
  EXPECT_LE(vargrad_loss(batch, post.log_partition, policy).loss, 1e-10);
  EXPECT_NEAR(batch_log_z(batch), post.log_partition, 1e-9);
}

TEST(PreStep, FillsReplayOnly) {
  const auto t = selftest::small_task();
  GfnConfig cfg;
  TrainerState s(cfg, t.oracle, t.meta, 1);
  pre_step(s, cfg, t.oracle, t.prior, 0);
  EXPECT_TRUE(s.replay.empty());
  EXPECT_EQ(s.oracle_calls, 0u);

  pre_step(s, cfg, t.oracle, t.prior, 100);
  EXPECT_EQ(s.replay.size(), 100u);
  EXPECT_TRUE(s.high_reward.empty());
  EXPECT_EQ(s.policy, TabularPolicy(5, 4));

  TrainerState big(cfg, t.oracle, t.meta, 2);
  pre_step(big, cfg, t.oracle, t.prior, 1500);
  EXPECT_EQ(big.replay.size(), 1000u);
  EXPECT_EQ(big.replay[0].insertion_step, 501u);
}

TEST(TrainingBatch, DegenerateMixtures) {
  const auto t = selftest::small_task();
  GfnConfig cfg;
  TrainerState s(cfg, t.oracle, t.meta, 3);
  pre_step(s, cfg, t.oracle, t.prior, 20);

  cfg.rho = 1.0;
  for (const auto& it : sample_training_batch(s, cfg, t.oracle, t.prior, 8)) EXPECT_EQ(it.source, Source::online);
  EXPECT_EQ(s.replay.size(), 28u);

  cfg.rho = 0.0;
  const auto before = s.replay.snapshot();
  const auto calls = s.oracle_calls;
  for (const auto& it : sample_training_batch(s, cfg, t.oracle, t.prior, 8)) EXPECT_EQ(it.source, Source::replay);
  EXPECT_EQ(s.replay.snapshot(), before);
  EXPECT_EQ(s.oracle_calls, calls);

  TrainerState fresh(cfg, t.oracle, t.meta, 4);
  EXPECT_THROW(sample_training_batch(fresh, cfg, t.oracle, t.prior, 8), EmptyBuffer);
}

TEST(TrainingBatch, ItemsCarryCurrentScores) {
  const auto t = selftest::small_task();
  GfnConfig cfg;
  TrainerState s(cfg, t.oracle, t.meta, 5);
  pre_step(s, cfg, t.oracle, t.prior, 50);
  for (const auto& it : sample_training_batch(s, cfg, t.oracle, t.prior, 16)) {
    EXPECT_EQ(it.correct_count, t.oracle.correct_count(it.sequence));
    EXPECT_EQ(it.log_p_theta, s.policy.log_prob(it.sequence));
    EXPECT_EQ(it.log_reward, std::log(it.correct_count) + t.prior.log_prob(it.sequence, s.meta));
  }
}

TEST(TrainStep, ZeroLearningRateLeavesPolicy) {
  const auto t = selftest::small_task();
  GfnConfig cfg;
  cfg.learning_rate = 0.0;
  cfg.rho = 1.0;
  TrainerState s(cfg, t.oracle, t.meta, 6);
  train_step(s, cfg, t.oracle, t.prior);
  EXPECT_EQ(s.policy, TabularPolicy(5, 4));
  EXPECT_EQ(s.replay.size(), 8u);
  EXPECT_TRUE(s.ema_log_z.has_value());
}

TEST(TrainStep, OracleCallCountFollowsOnlineDraws) {
  const auto t = selftest::small_task();
  RunSettings rs;
  rs.dmu.variant = DmuVariant::off;
  rs.tv_every = 0;
  rs.log_elbo = false;
  const auto r = run(rs, t.oracle, t.prior, t.meta, 7);
  std::uint64_t online = 0;
  for (const auto& m : r.metrics) online += static_cast<std::uint64_t>(m.online_count);
  EXPECT_EQ(r.state.oracle_calls, 100 + online);
  // 1600 Bernoulli(0.5) draws: mean 800, sd 20
  EXPECT_NEAR(static_cast<double>(online), 800.0, 60.0);
  EXPECT_EQ(r.state.best_found_trace.size(), r.state.oracle_calls);
}

TEST(TrainStep, EmaIsUsedInResiduals) {
  const auto t = selftest::small_task();
  GfnConfig cfg;
  TrainerState s(cfg, t.oracle, t.meta, 8);
  pre_step(s, cfg, t.oracle, t.prior, 100);
  const auto m1 = train_step(s, cfg, t.oracle, t.prior);
  EXPECT_EQ(m1.ema_log_z, m1.raw_log_z);
  const auto m2 = train_step(s, cfg, t.oracle, t.prior);
  EXPECT_NEAR(m2.ema_log_z, 0.99 * m1.ema_log_z + 0.01 * m2.raw_log_z, 1e-12);
}

TEST(Run, SeededDeterminism) {
  const auto t = selftest::small_task();
  RunSettings rs;
  rs.gfn.train_steps = 50;
  const auto a = run(rs, t.oracle, t.prior, t.meta, 9);
  const auto b = run(rs, t.oracle, t.prior, t.meta, 9);
  ASSERT_EQ(a.metrics.size(), b.metrics.size());
  for (std::size_t i = 0; i < a.metrics.size(); ++i) EXPECT_EQ(a.metrics[i].loss, b.metrics[i].loss);
  EXPECT_EQ(a.state.policy, b.state.policy);
  EXPECT_EQ(a.state.replay, b.state.replay);
}

TEST(Run, MemoryUpdateNeverFiresWhenPeriodExceedsSteps) {
  const auto t = selftest::small_task();
  RunSettings rs;
  rs.gfn.train_steps = 30;
  rs.gfn.dmu_every = 31;
  const auto a = run(rs, t.oracle, t.prior, t.meta, 10);
  EXPECT_TRUE(a.dmu_events.empty());
  EXPECT_EQ(a.state.meta, t.meta);
  rs.dmu.variant = DmuVariant::off;
  rs.gfn.dmu_every = 1;
  const auto b = run(rs, t.oracle, t.prior, t.meta, 10);
  EXPECT_EQ(a.state.policy, b.state.policy);
  for (std::size_t i = 0; i < a.metrics.size(); ++i) EXPECT_EQ(a.metrics[i].loss, b.metrics[i].loss);
}

TEST(Run, BudgetStopsTraining) {
  const auto t = selftest::small_task();
  RunSettings rs;
  rs.gfn.train_steps = 100000;
  rs.gfn.oracle_budget = 250;
  rs.tv_every = 0;
  rs.log_elbo = false;
  const auto r = run(rs, t.oracle, t.prior, t.meta, 11);
  EXPECT_GE(r.state.oracle_calls, 250u);
  EXPECT_LT(r.state.oracle_calls, 250u + 8u);
  EXPECT_EQ(variant_label(rs), "gflowpo-off-O");
}
