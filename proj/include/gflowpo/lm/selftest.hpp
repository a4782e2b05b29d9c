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

#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "gflowpo/lm/client.hpp"
#include "gflowpo/lm/evaluate.hpp"
#include "gflowpo/lm/meta_prompt.hpp"
#include "gflowpo/lm/mock_server.hpp"
#include "gflowpo/selftest.hpp"

namespace gflowpo::lm::selftest {

using gflowpo::selftest::CriterionResult;
using gflowpo::selftest::format;

/// Meta-context whose rendering is stored as the golden file.
inline MetaContext<std::string> golden_meta() {
  MetaContext<std::string> m;
  m.shots = {{"the movie was wonderful", "positive"},
             {"a dull and tedious film", "negative"},
             {"I would watch it again", "positive"},
             {"the plot made no sense", "negative"},
             {"great acting throughout", "positive"}};
  m.reference_set = {"Classify the sentiment of the review.", "Is the review positive or negative?",
                     "Label each sentence as positive or negative."};
  return m;
}

struct VerbalizerCase {
  std::string input;
  double yes;
  double no;
  std::string gold;
  std::string expected_prediction;  // worked out by hand from the two logprobs
};

/// Ten fixture examples; label logprobs at the answer slot and the hand-derived argmax.
inline std::vector<VerbalizerCase> verbalizer_fixture() {
  return {{"q0", -0.2, -1.5, "yes", "yes"},  {"q1", -2.0, -0.1, "no", "no"},    {"q2", -0.7, -0.69, "yes", "no"},
          {"q3", -0.5, -0.5, "no", "yes"},   {"q4", -3.0, -0.05, "no", "no"},  {"q5", -0.01, -4.6, "yes", "yes"},
          {"q6", -1.2, -0.36, "yes", "no"},  {"q7", -0.9, -1.1, "no", "yes"},  {"q8", -0.3, -1.4, "yes", "yes"},
          {"q9", -1.6, -0.22, "no", "no"}};
}

inline CriterionResult lm_contract(const std::string& golden_path) {
  std::vector<std::string> failures;

  std::ifstream g(golden_path, std::ios::binary);
  const std::string golden{std::istreambuf_iterator<char>(g), std::istreambuf_iterator<char>()};
  if (!g.is_open() && golden.empty()) failures.push_back("golden file unreadable: " + golden_path);
  else if (render_meta_prompt(golden_meta()) != golden) failures.push_back("meta-prompt differs from golden bytes");

  MockBehavior behavior;
  behavior.token_logprob = -1.0;
  for (const auto& c : verbalizer_fixture()) behavior.label_logprobs[c.input] = {{" yes", c.yes}, {" no", c.no}};
  MockCompletionsServer server(behavior);
  LmEndpointConfig ec;
  ec.base_url = server.base_url();
  ec.model_name = "mock";
  ec.retry_base_delay_ms = 1.0;
  CompletionsClient client(ec, "");

  const double seven = lm_score_logprob(client, "The instruction is:", " Answer with one word for each input.");
  if (seven != -7.0) failures.push_back(format("7-token sum %.17g != -7", seven));
  const double one = lm_score_logprob(client, "The instruction is:", " Summarize.");
  if (one != -1.0) failures.push_back(format("1-token sum %.17g != -1", one));
  if (lm_score_logprob(client, "The instruction is:", "") != 0.0) failures.push_back("empty continuation != 0");

  const Verbalizer verb{{"yes", "no"}};
  EvalOptions opt;
  opt.verbalizer = verb;
  opt.epsilon = 0.1;
  int hand_correct = 0, mismatched = 0;
  std::vector<LabeledExample> dataset;
  for (const auto& c : verbalizer_fixture()) {
    dataset.push_back({c.input, c.gold});
    hand_correct += c.expected_prediction == c.gold;
    const bool predicted_correct = lm_eval_example(client, "Answer yes or no.", {c.input, c.expected_prediction}, opt);
    mismatched += !predicted_correct;
  }
  if (mismatched) failures.push_back(format("%d of 10 verbalizer predictions differ from hand values", mismatched));
  const double acc = lm_eval_accuracy(client, "Answer yes or no.", dataset, opt);
  if (acc != 0.1 + hand_correct) failures.push_back(format("accuracy %.17g != %.17g", acc, 0.1 + hand_correct));

  std::string detail = "golden meta-prompt bytes, logprob sums (-7, -1, 0), 10-example verbalizer argmax";
  if (!failures.empty()) {
    detail = "failed:";
    for (const auto& f : failures) detail += " " + f + ";";
  }
  return {10, "lm client contract", failures.empty(), detail};
}

}  // namespace gflowpo::lm::selftest
