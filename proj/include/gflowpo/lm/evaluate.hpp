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
#include <atomic>
#include <cctype>
#include <cmath>
#include <fstream>
#include <exception>
#include <limits>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "gflowpo/error.hpp"
#include "gflowpo/lm/client.hpp"
#include "gflowpo/lm/meta_prompt.hpp"

namespace gflowpo::lm {

struct LabeledExample {
  std::string input;
  std::string output;
};

/// Loads a JSONL file of {"input": ..., "output": ...} records.
inline std::vector<LabeledExample> load_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("lm.dataset_path: cannot open '" + path + "'");
  std::vector<LabeledExample> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = json::parse(line);
      out.push_back({j.at("input").get<std::string>(), j.at("output").get<std::string>()});
    } catch (const json::exception& e) {
      throw ConfigError("lm.dataset_path: line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  if (out.empty()) throw ConfigError("lm.dataset_path: dataset is empty");
  return out;
}

/// Answer-class label tokens; the prediction is the label whose first token scores highest.
struct Verbalizer {
  std::vector<std::string> labels;

  void validate() const {
    if (labels.size() < 2) throw VerbalizerUnscoreable("verbalizer needs at least two labels");
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (labels[i].empty()) throw VerbalizerUnscoreable("verbalizer label " + std::to_string(i) + " is empty");
      for (std::size_t j = 0; j < i; ++j)
        if (labels[i] == labels[j]) throw VerbalizerUnscoreable("duplicate verbalizer label '" + labels[i] + "'");
    }
  }
};

/// A prompt in LM mode with its cached correct count.
struct TextPromptCandidate {
  std::string text;
  double correct_count = 0.0;
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

/// Keeps at most `max_tokens` whitespace-delimited words.
inline std::string truncate_words(const std::string& s, int max_tokens) {
  std::istringstream in(s);
  std::string word, out;
  int n = 0;
  while (n < max_tokens && in >> word) {
    if (n++) out += ' ';
    out += word;
  }
  return n < max_tokens ? s : out;
}

inline const json& first_choice(const json& response) {
  if (!response.contains("choices") || !response["choices"].is_array() || response["choices"].empty())
    throw EndpointError("response has no choices: " + response.dump());
  return response["choices"][0];
}

}  // namespace detail

inline std::size_t count_words(const std::string& s) {
  std::istringstream in(s);
  std::string w;
  std::size_t n = 0;
  while (in >> w) ++n;
  return n;
}

/**
 * Samples one candidate prompt from the meta-prompt. The completion stops at
 * the first blank line or after max_tokens; the text is cut at a blank line
 * and capped at max_tokens words even if the server ignores either limit.
 */
inline TextPromptCandidate lm_sample_prompt(CompletionsClient& client, const std::string& meta_text,
                                            double temperature, int max_tokens = 150) {
  const json response = client.complete(
      {{"prompt", meta_text}, {"temperature", temperature}, {"max_tokens", max_tokens}, {"stop", {"\n\n"}}});
  std::string text = detail::first_choice(response).value("text", std::string());
  if (const auto blank = text.find("\n\n"); blank != std::string::npos) text.resize(blank);
  return {detail::truncate_words(detail::trim(text), max_tokens), 0.0};
}

/**
 * Sum of token logprobs of `continuation` given `prefix`, read from an
 * echoed scoring request. A token counts toward the continuation when any
 * part of it lies past the end of the prefix.
 */
inline double lm_score_logprob(CompletionsClient& client, const std::string& prefix,
                               const std::string& continuation) {
  if (continuation.empty()) return 0.0;
  const json response = client.complete({{"prompt", prefix + continuation},
                                         {"max_tokens", 0},
                                         {"echo", true},
                                         {"logprobs", 0},
                                         {"temperature", 0.0}});
  const json& choice = detail::first_choice(response);
  if (!choice.contains("logprobs") || !choice["logprobs"].is_object())
    throw LogprobsUnsupported("endpoint returned no logprobs for an echo request");
  const json& lp = choice["logprobs"];
  if (!lp.contains("token_logprobs") || !lp.contains("text_offset") || !lp.contains("tokens"))
    throw LogprobsUnsupported("echo logprobs lack tokens, token_logprobs or text_offset");
  const auto& tokens = lp["tokens"];
  const auto& logprobs = lp["token_logprobs"];
  const auto& offsets = lp["text_offset"];
  if (tokens.size() != logprobs.size() || tokens.size() != offsets.size())
    throw LogprobsUnsupported("echo logprob arrays have mismatched lengths");
  const std::size_t boundary = prefix.size();
  double total = 0.0;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    const auto start = offsets[i].get<std::size_t>();
    const auto end = start + tokens[i].get<std::string>().size();
    if (end <= boundary) continue;
    if (logprobs[i].is_null()) continue;  // the very first token has no conditional
    total += logprobs[i].get<double>();
  }
  return total;
}

/// Picks the verbalizer label with the highest first-token logprob among
/// `top_logprobs` (token -> logprob). Leading whitespace in tokens is ignored.
/// Ties keep the earlier label.
inline std::size_t classify_from_top_logprobs(const json& top_logprobs, const Verbalizer& verbalizer) {
  constexpr double kNegInf = -std::numeric_limits<double>::infinity();
  std::vector<double> score(verbalizer.labels.size(), kNegInf);
  bool any = false;
  if (top_logprobs.is_object()) {
    for (const auto& [token, lp] : top_logprobs.items()) {
      const std::string t = detail::trim(token);
      for (std::size_t k = 0; k < verbalizer.labels.size(); ++k) {
        if (t == verbalizer.labels[k] && lp.is_number()) {
          score[k] = std::max(score[k], lp.get<double>());
          any = true;
        }
      }
    }
  }
  if (!any) throw VerbalizerUnscoreable("no verbalizer label among the returned top logprobs");
  return static_cast<std::size_t>(std::max_element(score.begin(), score.end()) - score.begin());
}

struct EvalOptions {
  std::optional<Verbalizer> verbalizer;  // nullopt = exact-match generation
  double epsilon = 0.1;
  int max_parallel_requests = 4;
  int max_answer_tokens = 32;
  int top_logprobs = 20;
};

/// Whether the target model answers one example correctly under `prompt`.
inline bool lm_eval_example(CompletionsClient& client, const std::string& prompt, const LabeledExample& ex,
                            const EvalOptions& opt) {
  const std::string query = render_eval_prompt(prompt, ex.input);
  if (opt.verbalizer) {
    const json response = client.complete(
        {{"prompt", query}, {"max_tokens", 1}, {"temperature", 0.0}, {"logprobs", opt.top_logprobs}});
    const json& choice = detail::first_choice(response);
    if (!choice.contains("logprobs") || !choice["logprobs"].contains("top_logprobs") ||
        choice["logprobs"]["top_logprobs"].empty())
      throw VerbalizerUnscoreable("endpoint returned no top logprobs at the answer position");
    const std::size_t k = classify_from_top_logprobs(choice["logprobs"]["top_logprobs"][0], *opt.verbalizer);
    return opt.verbalizer->labels[k] == detail::trim(ex.output);
  }
  const json response = client.complete(
      {{"prompt", query}, {"max_tokens", opt.max_answer_tokens}, {"temperature", 0.0}, {"stop", {"\n"}}});
  return detail::trim(detail::first_choice(response).value("text", std::string())) == detail::trim(ex.output);
}

/**
 * A_D(z) in LM mode: epsilon plus the number of examples answered
 * correctly. Requests run on up to max_parallel_requests threads; results
 * are tallied by example index.
 */
inline double lm_eval_accuracy(CompletionsClient& client, const std::string& prompt,
                               const std::vector<LabeledExample>& dataset, const EvalOptions& opt) {
  if (dataset.empty()) throw ConfigError("lm_eval_accuracy: dataset is empty");
  if (opt.verbalizer) opt.verbalizer->validate();
  std::vector<char> correct(dataset.size(), 0);
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mu;
  auto worker = [&] {
    for (std::size_t i = next++; i < dataset.size(); i = next++) {
      try {
        correct[i] = lm_eval_example(client, prompt, dataset[i], opt) ? 1 : 0;
      } catch (...) {
        std::lock_guard lock(failure_mu);
        if (!failure) failure = std::current_exception();
        next = dataset.size();
      }
    }
  };
  const auto n_threads = static_cast<std::size_t>(std::max(1, opt.max_parallel_requests));
  std::vector<std::thread> pool;
  for (std::size_t t = 1; t < std::min(n_threads, dataset.size()); ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
  double a = opt.epsilon;
  for (char c : correct) a += c;
  return a;
}

}  // namespace gflowpo::lm
