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

#include "gflowpo/posterior.hpp"
#include "gflowpo/reward.hpp"

using namespace gflowpo;

namespace {

// Direct transcription of the mixture formula, written separately from KernelPrior.
double prior_by_formula(const TokenSequence& z, const std::vector<TokenSequence>& refs, double lambda, double eta,
                        int V) {
  const double uniform = std::pow(static_cast<double>(V), -static_cast<double>(z.size()));
  if (refs.empty()) return uniform;
  double copies = 0.0;
  for (const auto& r : refs) {
    double prod = 1.0;
    for (std::size_t i = 0; i < z.size(); ++i) prod *= z[i] == r[i] ? 1.0 - eta : eta / (V - 1);
    copies += prod;
  }
  return lambda * uniform + (1.0 - lambda) * copies / static_cast<double>(refs.size());
}

}  // namespace

TEST(TaskOracle, CorrectCount) {
  TaskOracle o{{TokenAt{0, 1}, ContainsSubsequence{{2, 3}}, CountOfToken{0, 2}}, 0.1, 4, 4};
  EXPECT_DOUBLE_EQ(o.correct_count(TokenSequence{1, 2, 3, 1}), 2.1);
  EXPECT_DOUBLE_EQ(o.correct_count(TokenSequence{3, 3, 3, 3}), 0.1);
  EXPECT_EQ(o.correct_count(TokenSequence{1, 2, 3, 1}), o.correct_count(TokenSequence{1, 2, 3, 1}));
  EXPECT_DOUBLE_EQ(o.correct_count(TokenSequence{0, 2, 3, 0}), 2.1);
  EXPECT_THROW(o.correct_count(TokenSequence{1, 2}), LengthMismatch);
}

TEST(TaskOracle, ContainsMeansContiguousRun) {
  const ExampleRecord e = ContainsSubsequence{{1, 2}};
  EXPECT_TRUE(satisfies(e, TokenSequence{0, 1, 2, 0}));
  EXPECT_FALSE(satisfies(e, TokenSequence{1, 0, 2, 0}));
}

TEST(KernelPrior, UniformFallback) {
  KernelPrior p{0.5, 0.25, 4, 3};
  EXPECT_NEAR(p.log_prob(TokenSequence{0, 1, 2}, std::vector<TokenSequence>{}), -4.158883, 1e-6);
}

TEST(KernelPrior, WorkedExamples) {
  const std::vector<TokenSequence> refs = {TokenSequence{0, 0}};
  KernelPrior exact{0.5, 0.0, 2, 2};
  EXPECT_NEAR(std::exp(exact.log_prob(TokenSequence{0, 0}, refs)), 0.625, 1e-15);
  EXPECT_NEAR(std::exp(exact.log_prob(TokenSequence{0, 1}, refs)), 0.125, 1e-15);

  KernelPrior noisy{0.5, 0.25, 2, 2};
  EXPECT_NEAR(std::exp(noisy.log_prob(TokenSequence{0, 0}, refs)), 0.40625, 1e-15);
  const SequenceSpace s(2, 2);
  double total = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) total += std::exp(noisy.log_prob(s.at(i), refs));
  EXPECT_NEAR(total, 1.0, 1e-12);
}

TEST(KernelPrior, MatchesFormulaOnRandomConfigurations) {
  RngStream rng(21);
  for (int c = 0; c < 30; ++c) {
    const int V = 2 + static_cast<int>(rng.uniform_index(4)), L = 1 + static_cast<int>(rng.uniform_index(4));
    KernelPrior p{rng.uniform(), rng.uniform(0.0, 0.9), V, L};
    std::vector<TokenSequence> refs(rng.uniform_index(4));
    for (auto& r : refs)
      for (int i = 0; i < L; ++i) r.tokens.push_back(static_cast<TokenId>(rng.uniform_index(V)));
    const SequenceSpace s(V, L);
    for (std::size_t i = 0; i < s.size(); ++i)
      EXPECT_NEAR(p.log_prob(s.at(i), refs), std::log(prior_by_formula(s.at(i), refs, p.lambda, p.eta, V)), 1e-12);
  }
}

TEST(KernelPrior, SamplingLawMatchesLogProb) {
  KernelPrior p{0.3, 0.2, 3, 3};
  MetaContext<TokenSequence> m;
  m.reference_set = {TokenSequence{0, 1, 2}, TokenSequence{2, 2, 0}};
  const SequenceSpace s(3, 3);
  RngStream rng(22);
  std::vector<int> counts(s.size(), 0);
  const int n = 200000;
  for (int i = 0; i < n; ++i) ++counts[s.index_of(p.sample(m, rng))];
  double chi2 = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const double e = n * std::exp(p.log_prob(s.at(i), m));
    chi2 += (counts[i] - e) * (counts[i] - e) / e;
  }
  EXPECT_LT(chi2, 61.0);  // 26 dof
}

TEST(KernelPrior, DegenerateMixtures) {
  RngStream rng(23);
  MetaContext<TokenSequence> m;
  m.reference_set = {TokenSequence{2, 0, 1}};
  KernelPrior copy{0.0, 0.0, 3, 3};
  for (int i = 0; i < 50; ++i) EXPECT_EQ(copy.sample(m, rng), (TokenSequence{2, 0, 1}));

  KernelPrior uniform{1.0, 0.25, 3, 2};
  const SequenceSpace s(3, 2);
  std::vector<int> counts(s.size(), 0);
  const int n = 90000;
  for (int i = 0; i < n; ++i) ++counts[s.index_of(uniform.sample(m.reference_set, rng))];
  const double sd = std::sqrt(n * (1.0 / 9) * (8.0 / 9));
  for (int c : counts) EXPECT_NEAR(c, n / 9.0, 3 * sd);
}

TEST(LogReward, Arithmetic) {
  EXPECT_NEAR(log_reward(1.0, -4.158883), -4.158883, 1e-12);
  EXPECT_NEAR(log_reward(2.1, -2.0), std::log(2.1) - 2.0, 1e-15);
  EXPECT_NEAR(log_reward(2.1, -2.0), -1.258063, 1e-6);
  EXPECT_THROW(log_reward(0.0, -1.0), NonPositiveCount);
}

TEST(ExactPosterior, TwoStateExample) {
  TaskOracle o{{TokenAt{0, 0}}, 0.1, 2, 1};
  KernelPrior p{1.0, 0.25, 2, 1};
  MetaContext<TokenSequence> m;
  const auto t = exact_posterior(o, p, m);
  ASSERT_EQ(t.probabilities.size(), 2u);
  EXPECT_NEAR(t.probabilities[0], 1.1 / 1.2, 1e-12);
  EXPECT_NEAR(t.probabilities[0], 0.916667, 1e-6);
  EXPECT_NEAR(t.log_partition, std::log(0.6), 1e-12);
  EXPECT_NEAR(t.log_partition, -0.510826, 1e-6);
}

TEST(ExactPosterior, ZeroInformationIsUniform) {
  TaskOracle o{{ContainsSubsequence{{}}, CountOfToken{5, 0}}, 0.1, 3, 3};
  KernelPrior p{0.5, 0.25, 3, 3};
  const auto t = exact_posterior(o, p, MetaContext<TokenSequence>{});
  for (double v : t.probabilities) EXPECT_NEAR(v, 1.0 / 27, 1e-12);
  TaskOracle big{{TokenAt{0, 0}}, 0.1, 10, 7};
  EXPECT_THROW(exact_posterior(big, KernelPrior{0.5, 0.25, 10, 7}, MetaContext<TokenSequence>{}), TooLarge);
}

TEST(TvDistance, Basics) {
  const std::vector<double> a = {0.5, 0.5}, b = {1.0, 0.0}, c = {0.0, 1.0};
  EXPECT_DOUBLE_EQ(tv_distance(a, a), 0.0);
  EXPECT_DOUBLE_EQ(tv_distance(b, c), 1.0);
  EXPECT_DOUBLE_EQ(tv_distance(a, b), 0.5);
  EXPECT_THROW(tv_distance(a, std::vector<double>{1.0}), SupportMismatch);
  EXPECT_THROW(tv_distance(a, std::vector<double>{0.3, 0.3}), SupportMismatch);
}
