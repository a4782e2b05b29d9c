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

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "gflowpo/lm/client.hpp"
#include "gflowpo/lm/evaluate.hpp"
#include "gflowpo/lm/meta_prompt.hpp"
#include "gflowpo/lm/mock_server.hpp"
#include "gflowpo/lm/search.hpp"
#include "gflowpo/lm/selftest.hpp"

using namespace gflowpo;
using namespace gflowpo::lm;
namespace fs = std::filesystem;

namespace {

LmEndpointConfig endpoint(const MockCompletionsServer& s) {
  LmEndpointConfig c;
  c.base_url = s.base_url();
  c.model_name = "mock";
  c.retry_base_delay_ms = 1.0;
  c.timeout_seconds = 5.0;
  return c;
}

std::size_t count(const std::string& hay, const std::string& needle) {
  std::size_t n = 0;
  for (auto p = hay.find(needle); p != std::string::npos; p = hay.find(needle, p + 1)) ++n;
  return n;
}

std::vector<json> read_jsonl(const fs::path& p) {
  std::ifstream in(p);
  std::vector<json> out;
  std::string line;
  while (std::getline(in, line)) out.push_back(json::parse(line));
  return out;
}

}  // namespace

TEST(MetaPrompt, MatchesGoldenBytes) {
  std::ifstream g(GFLOWPO_GOLDEN_META_PROMPT, std::ios::binary);
  const std::string golden{std::istreambuf_iterator<char>(g), {}};
  ASSERT_FALSE(golden.empty());
  EXPECT_EQ(render_meta_prompt(lm::selftest::golden_meta()), golden);
}

TEST(MetaPrompt, StructureAndDeterminism) {
  const auto m = lm::selftest::golden_meta();
  const auto text = render_meta_prompt(m);
  EXPECT_EQ(count(text, "Input:"), 5u);
  EXPECT_EQ(count(text, "Here are some reference instructions:"), 1u);
  EXPECT_EQ(text, render_meta_prompt(m));
  EXPECT_TRUE(text.ends_with("The instruction is:"));

  auto bare = m;
  bare.reference_set.clear();
  EXPECT_EQ(count(render_meta_prompt(bare), "reference instructions"), 0u);

  auto other = m;
  other.reference_set[0] = "Something else.";
  EXPECT_NE(render_meta_prompt(other), text);
  EXPECT_EQ(render_eval_prompt("Be brief.", "2+2"), "Be brief. Input: 2+2 Output:");
}

TEST(SamplePrompt, EchoesFixedCompletion) {
  MockBehavior b;
  b.completions = {"Classify each review by its sentiment."};
  MockCompletionsServer s(b);
  CompletionsClient c(endpoint(s), "");
  EXPECT_EQ(lm_sample_prompt(c, "meta", 1.0).text, "Classify each review by its sentiment.");
  const auto req = s.requests().back();
  EXPECT_EQ(req["temperature"], 1.0);
  EXPECT_EQ(req["max_tokens"], 150);
  EXPECT_EQ(req["model"], "mock");
}

TEST(SamplePrompt, TruncatesAtBlankLineAndLength) {
  std::string longer;
  for (int i = 0; i < 400; ++i) longer += "w" + std::to_string(i) + " ";
  MockBehavior b;
  b.completions = {"First line.\n\nSecond paragraph.", longer};
  MockCompletionsServer s(b);
  CompletionsClient c(endpoint(s), "");
  EXPECT_EQ(lm_sample_prompt(c, "meta", 1.0).text, "First line.");
  EXPECT_LE(count_words(lm_sample_prompt(c, "meta", 1.0).text), 150u);

  // the cap holds even when the server ignores max_tokens
  MockBehavior careless;
  careless.completions = {longer};
  careless.honor_max_tokens = false;
  MockCompletionsServer s2(careless);
  CompletionsClient c2(endpoint(s2), "");
  EXPECT_EQ(count_words(lm_sample_prompt(c2, "meta", 1.0, 150).text), 150u);
  EXPECT_EQ(count_words(lm_sample_prompt(c2, "meta", 1.0, 7).text), 7u);
}

TEST(Client, RetriesThenSucceedsAndLogsWithoutKey) {
  const auto dir = fs::temp_directory_path() / "gflowpo_test_transcript";
  fs::remove_all(dir);
  fs::create_directories(dir);
  MockBehavior b;
  b.fail_first = 2;
  b.required_api_key = "sk-test-secret-123";
  b.completions = {"echo sk-test-secret-123 back"};
  MockCompletionsServer s(b);
  auto t = std::make_shared<Transcript>((dir / "t.jsonl").string(), "sk-test-secret-123");
  CompletionsClient c(endpoint(s), "sk-test-secret-123", t);
  const auto cand = lm_sample_prompt(c, "meta", 1.0);
  EXPECT_EQ(c.retries(), 2);
  EXPECT_EQ(s.requests().size(), 3u);
  EXPECT_EQ(s.authorization_headers().back(), "Bearer sk-test-secret-123");

  std::ifstream in(dir / "t.jsonl");
  const std::string log{std::istreambuf_iterator<char>(in), {}};
  EXPECT_EQ(log.find("sk-test-secret-123"), std::string::npos);
  EXPECT_NE(log.find("[REDACTED]"), std::string::npos);
  int retries = 0;
  for (const auto& rec : read_jsonl(dir / "t.jsonl")) retries += rec["event"] == "retry";
  EXPECT_EQ(retries, 2);
}

TEST(Client, GivesUpAfterRetryLimit) {
  MockBehavior b;
  b.fail_first = 100;
  b.fail_status = 429;
  MockCompletionsServer s(b);
  auto cfg = endpoint(s);
  cfg.retry_limit = 2;
  CompletionsClient c(cfg, "");
  EXPECT_THROW(lm_sample_prompt(c, "meta", 1.0), RateLimited);
  EXPECT_EQ(s.requests().size(), 3u);

  MockBehavior reject;
  reject.required_api_key = "right";
  MockCompletionsServer s2(reject);
  CompletionsClient wrong(endpoint(s2), "wrong");
  EXPECT_THROW(lm_sample_prompt(wrong, "meta", 1.0), EndpointError);
  EXPECT_EQ(s2.requests().size(), 1u);  // 4xx is not retried

  auto dead = cfg;
  dead.base_url = "http://127.0.0.1:9/v1";
  dead.retry_limit = 1;
  CompletionsClient unreachable(dead, "");
  EXPECT_THROW(lm_sample_prompt(unreachable, "meta", 1.0), EndpointError);
}

TEST(Client, KeyComesFromEnvironment) {
  MockBehavior b;
  MockCompletionsServer s(b);
  auto cfg = endpoint(s);
  cfg.api_key_env_name = "GFLOWPO_TEST_KEY";
  ::setenv("GFLOWPO_TEST_KEY", "env-key", 1);
  auto c = CompletionsClient::from_environment(cfg);
  EXPECT_EQ(c.api_key(), "env-key");
  ::unsetenv("GFLOWPO_TEST_KEY");
  EXPECT_EQ(CompletionsClient::from_environment(cfg).api_key(), "");
}

TEST(ScoreLogprob, MockArithmetic) {
  MockBehavior b;
  b.token_logprob = -1.0;
  MockCompletionsServer s(b);
  CompletionsClient c(endpoint(s), "");
  EXPECT_EQ(lm_score_logprob(c, "Prefix text here", " one two three four five six seven"), -7.0);
  EXPECT_EQ(lm_score_logprob(c, "Prefix text here", " single"), -1.0);
  const auto before = s.requests().size();
  EXPECT_EQ(lm_score_logprob(c, "Prefix text here", ""), 0.0);
  EXPECT_EQ(s.requests().size(), before);
  const auto req = s.requests().back();
  EXPECT_EQ(req["echo"], true);
  EXPECT_EQ(req["max_tokens"], 0);
}

TEST(ScoreLogprob, NonUniformLogprobsSumExactly) {
  MockBehavior b;
  b.token_logprob = -0.37;
  MockCompletionsServer s(b);
  CompletionsClient c(endpoint(s), "");
  double expected = 0.0;
  for (int i = 0; i < 3; ++i) expected += -0.37;
  EXPECT_EQ(lm_score_logprob(c, "The instruction is:", " a b c"), expected);
  EXPECT_LE(lm_score_logprob(c, "x", " y z"), 0.0);
}

TEST(ScoreLogprob, MissingLogprobsIsAnError) {
  MockBehavior b;
  b.supports_logprobs = false;
  MockCompletionsServer s(b);
  CompletionsClient c(endpoint(s), "");
  EXPECT_THROW(lm_score_logprob(c, "a", " b"), LogprobsUnsupported);
}

TEST(Verbalizer, ArgmaxAndTies) {
  const Verbalizer v{{"yes", "no"}};
  EXPECT_EQ(classify_from_top_logprobs(json{{" yes", -0.2}, {" no", -1.5}}, v), 0u);
  EXPECT_EQ(classify_from_top_logprobs(json{{" yes", -2.0}, {"no", -0.1}}, v), 1u);
  EXPECT_EQ(classify_from_top_logprobs(json{{" yes", -0.5}, {" no", -0.5}}, v), 0u);
  EXPECT_EQ(classify_from_top_logprobs(json{{" maybe", -0.1}, {" no", -3.0}}, v), 1u);
  EXPECT_THROW(classify_from_top_logprobs(json{{" maybe", -0.1}}, v), VerbalizerUnscoreable);
  EXPECT_THROW(Verbalizer{{"yes"}}.validate(), VerbalizerUnscoreable);
  EXPECT_THROW((Verbalizer{{"yes", "yes"}}.validate()), VerbalizerUnscoreable);
}

TEST(EvalAccuracy, ClassificationCounts) {
  MockBehavior b;
  b.default_label_logprobs = {{" yes", -0.2}, {" no", -1.5}};
  std::vector<LabeledExample> data;
  for (int i = 0; i < 32; ++i) {
    const std::string in = "x" + std::to_string(i);
    // the first 20 examples are answered correctly
    const bool correct = i < 20;
    const bool says_yes = i % 2 == 0;
    b.label_logprobs[in] = says_yes ? std::map<std::string, double>{{" yes", -0.2}, {" no", -1.5}}
                                    : std::map<std::string, double>{{" yes", -1.5}, {" no", -0.2}};
    data.push_back({in, (says_yes == correct) ? "yes" : "no"});
  }
  MockCompletionsServer s(b);
  CompletionsClient c(endpoint(s), "");
  EvalOptions opt;
  opt.verbalizer = Verbalizer{{"yes", "no"}};
  EXPECT_DOUBLE_EQ(lm_eval_accuracy(c, "Answer.", data, opt), 20.1);
  opt.max_parallel_requests = 1;
  EXPECT_DOUBLE_EQ(lm_eval_accuracy(c, "Answer.", data, opt), 20.1);

  std::vector<LabeledExample> wrong = {{"z0", "no"}, {"z1", "no"}};
  EXPECT_DOUBLE_EQ(lm_eval_accuracy(c, "Answer.", wrong, opt), 0.1);
  EXPECT_THROW(lm_eval_accuracy(c, "Answer.", {}, opt), ConfigError);
}

TEST(EvalAccuracy, ExactMatchGeneration) {
  MockBehavior b;
  b.answers = {{"2+2", "4"}, {"3+3", "6"}, {"5+5", "11"}};
  MockCompletionsServer s(b);
  CompletionsClient c(endpoint(s), "");
  const std::vector<LabeledExample> data = {{"2+2", "4"}, {"3+3", "6"}, {"5+5", "10"}};
  EXPECT_DOUBLE_EQ(lm_eval_accuracy(c, "Add.", data, EvalOptions{}), 2.1);
  EXPECT_EQ(s.requests().back()["temperature"], 0.0);
}

TEST(EvalAccuracy, UnscoreableVerbalizer) {
  MockBehavior b;
  b.default_label_logprobs = {{" perhaps", -0.1}};
  MockCompletionsServer s(b);
  CompletionsClient c(endpoint(s), "");
  EvalOptions opt;
  opt.verbalizer = Verbalizer{{"yes", "no"}};
  EXPECT_THROW(lm_eval_accuracy(c, "Answer.", {{"q", "yes"}}, opt), VerbalizerUnscoreable);
}

TEST(EvalAccuracy, HandComputedFixture) {
  const auto r = lm::selftest::lm_contract(GFLOWPO_GOLDEN_META_PROMPT);
  EXPECT_TRUE(r.passed) << r.detail;
}

TEST(Search, FrozenSamplerLoop) {
  const auto dir = fs::temp_directory_path() / "gflowpo_test_search";
  fs::remove_all(dir);
  fs::create_directories(dir);
  {
    std::ofstream d(dir / "data.jsonl");
    d << R"({"input": "good film", "output": "yes"})" << '\n' << R"({"input": "bad film", "output": "no"})" << '\n';
  }
  MockBehavior b;
  b.completions = {"Say yes.", "Say no.", "Judge the film."};
  b.label_logprobs["good film"] = {{" yes", -0.1}, {" no", -2.0}};
  b.label_logprobs["bad film"] = {{" yes", -0.3}, {" no", -1.0}};
  MockCompletionsServer s(b);

  json j = {{"mode", "lm"},
            {"seed", 5},
            {"task", {{"num_shots", 2}}},
            {"gfn", {{"train_steps", 3}, {"pre_steps", 2}, {"batch_size", 2}}},
            {"lm",
             {{"base_url", s.base_url()},
              {"model_name", "mock"},
              {"dataset_path", (dir / "data.jsonl").string()},
              {"verbalizer", {"yes", "no"}},
              {"score_prior", true},
              {"max_parallel_requests", 1}}}};
  const auto cfg = parse_run_config(j);
  const auto dataset = load_dataset(cfg.lm.dataset_path);
  CompletionsClient c(endpoint(s), "");
  const auto r = lm_search(cfg, c, dataset);
  EXPECT_EQ(r.variant_label, "gflowpo-frozen-on-O");
  EXPECT_EQ(r.oracle_calls, 2u + 3u * 2u);
  EXPECT_EQ(r.replay.size(), 8u);
  EXPECT_EQ(r.dmu_events.size(), 3u);
  EXPECT_EQ(r.meta.shots.size(), 2u);
  ASSERT_TRUE(r.high_reward.best());
  EXPECT_DOUBLE_EQ(r.high_reward.best()->correct_count, 1.1);  // mock always predicts "yes"
  for (const auto& m : r.metrics) EXPECT_TRUE(m.mean_log_reward.has_value());
  // the reference line appears once memory updates have fired
  bool saw_refs = false;
  for (const auto& req : s.requests())
    saw_refs = saw_refs || req["prompt"].get<std::string>().find("reference instructions") != std::string::npos;
  EXPECT_TRUE(saw_refs);

  write_search_artifacts(dir / "out", cfg, r);
  EXPECT_TRUE(fs::exists(dir / "out" / "summary.json"));
  EXPECT_EQ(read_jsonl(dir / "out" / "metrics.jsonl").size(), 3u);
}
