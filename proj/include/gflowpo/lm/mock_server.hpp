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

#include <atomic>
#include <cctype>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "gflowpo/error.hpp"

namespace gflowpo::lm {

/**
 * Behaviour of the deterministic mock completions endpoint.
 *
 * Prompts are tokenized on whitespace; each token carries its leading
 * whitespace, as GPT-style tokenizers do. Routing by request shape:
 *  - echo with max_tokens 0: every prompt token scored at token_logprob
 *    (the first token gets null);
 *  - logprobs > 0 with max_tokens 1: label logprobs at the answer slot,
 *    looked up by the example input parsed from "... Input: x Output:";
 *  - prompts ending in " Output:": the canned answer for that input;
 *  - anything else: the next entry of `completions`, cycling.
 */
struct MockBehavior {
  double token_logprob = -1.0;
  std::vector<std::string> completions = {"Answer the question."};
  std::map<std::string, std::map<std::string, double>> label_logprobs;  // input -> token -> logprob
  std::map<std::string, double> default_label_logprobs;
  std::map<std::string, std::string> answers;  // input -> generated answer
  int fail_first = 0;                          // fail this many requests first
  int fail_status = 503;
  bool supports_logprobs = true;
  bool honor_max_tokens = true;
  std::string required_api_key;  // when set, other keys get 401
};

struct MockToken {
  std::string text;
  std::size_t offset;
};

/// Whitespace tokenizer: a token is a run of whitespace followed by a run of non-whitespace.
inline std::vector<MockToken> mock_tokenize(const std::string& s) {
  std::vector<MockToken> out;
  std::size_t i = 0;
  while (i < s.size()) {
    const std::size_t start = i;
    while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i]))) ++i;
    while (i < s.size() && !std::isspace(static_cast<unsigned char>(s[i]))) ++i;
    out.push_back({s.substr(start, i - start), start});
  }
  return out;
}

/// Parses x out of a prompt ending "... Input: x Output:".
inline std::optional<std::string> mock_example_input(const std::string& prompt) {
  static const std::string kIn = " Input: ", kOut = " Output:";
  if (prompt.size() < kOut.size() || prompt.compare(prompt.size() - kOut.size(), kOut.size(), kOut) != 0)
    return std::nullopt;
  const auto at = prompt.rfind(kIn);
  if (at == std::string::npos) return std::nullopt;
  const auto begin = at + kIn.size();
  return prompt.substr(begin, prompt.size() - kOut.size() - begin);
}

/// Completions server on 127.0.0.1 at an ephemeral port, run on a background thread.
class MockCompletionsServer {
 public:
  explicit MockCompletionsServer(MockBehavior behavior, int port = 0) : behavior_(std::move(behavior)) {
    server_.Post("/v1/completions", [this](const httplib::Request& req, httplib::Response& res) {
      handle(req, res);
    });
    port_ = port == 0 ? server_.bind_to_any_port("127.0.0.1") : (server_.bind_to_port("127.0.0.1", port) ? port : -1);
    if (port_ <= 0) throw Error("mock endpoint: cannot bind a port");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }

  ~MockCompletionsServer() { stop(); }
  MockCompletionsServer(const MockCompletionsServer&) = delete;
  MockCompletionsServer& operator=(const MockCompletionsServer&) = delete;

  void stop() {
    if (thread_.joinable()) {
      server_.stop();
      thread_.join();
    }
  }

  int port() const { return port_; }
  std::string base_url() const { return "http://127.0.0.1:" + std::to_string(port_) + "/v1"; }

  /// Bodies of every request received, in arrival order.
  std::vector<nlohmann::json> requests() const {
    std::lock_guard lock(mu_);
    return requests_;
  }

  std::vector<std::string> authorization_headers() const {
    std::lock_guard lock(mu_);
    return auth_;
  }

 private:
  using json = nlohmann::json;

  void handle(const httplib::Request& req, httplib::Response& res) {
    json body;
    int ordinal;
    {
      std::lock_guard lock(mu_);
      ordinal = static_cast<int>(requests_.size());
      body = json::parse(req.body, nullptr, false);
      requests_.push_back(body);
      auth_.push_back(req.get_header_value("Authorization"));
    }
    if (ordinal < behavior_.fail_first) {
      res.status = behavior_.fail_status;
      res.set_content(R"({"error":"injected failure"})", "application/json");
      return;
    }
    if (!behavior_.required_api_key.empty() &&
        req.get_header_value("Authorization") != "Bearer " + behavior_.required_api_key) {
      res.status = 401;
      res.set_content(R"({"error":"bad key"})", "application/json");
      return;
    }
    if (body.is_discarded() || !body.contains("prompt") || !body["prompt"].is_string()) {
      res.status = 400;
      res.set_content(R"({"error":"prompt required"})", "application/json");
      return;
    }
    res.set_content(json{{"object", "text_completion"}, {"choices", {respond(body)}}}.dump(), "application/json");
  }

  json respond(const json& body) {
    const std::string prompt = body["prompt"].get<std::string>();
    const int max_tokens = body.value("max_tokens", 16);
    const int logprobs = body.contains("logprobs") && body["logprobs"].is_number() ? body["logprobs"].get<int>() : -1;
    json choice = {{"index", 0}, {"finish_reason", "stop"}};

    if (body.value("echo", false) && max_tokens == 0) {
      choice["text"] = prompt;
      if (behavior_.supports_logprobs) {
        json tokens = json::array(), lps = json::array(), offsets = json::array();
        for (const auto& t : mock_tokenize(prompt)) {
          tokens.push_back(t.text);
          lps.push_back(t.offset == 0 ? json() : json(behavior_.token_logprob));
          offsets.push_back(t.offset);
        }
        choice["logprobs"] = {{"tokens", tokens}, {"token_logprobs", lps}, {"text_offset", offsets}};
      } else {
        choice["logprobs"] = nullptr;
      }
      return choice;
    }

    const auto input = mock_example_input(prompt);
    if (logprobs > 0 && max_tokens == 1) {
      const auto it = input ? behavior_.label_logprobs.find(*input) : behavior_.label_logprobs.end();
      const auto& top = it != behavior_.label_logprobs.end() ? it->second : behavior_.default_label_logprobs;
      std::string argmax;
      double best = -1e300;
      for (const auto& [tok, lp] : top)
        if (lp > best) best = lp, argmax = tok;
      choice["text"] = argmax;
      if (behavior_.supports_logprobs)
        choice["logprobs"] = {{"tokens", {argmax}}, {"token_logprobs", {best}}, {"top_logprobs", {json(top)}}};
      else
        choice["logprobs"] = nullptr;
      return choice;
    }

    if (input) {
      const auto it = behavior_.answers.find(*input);
      choice["text"] = it == behavior_.answers.end() ? std::string(" unknown") : " " + it->second;
      return choice;
    }

    std::string text;
    {
      std::lock_guard lock(mu_);
      text = behavior_.completions.empty() ? std::string()
                                           : behavior_.completions[next_completion_++ % behavior_.completions.size()];
    }
    auto toks = mock_tokenize(text);
    if (behavior_.honor_max_tokens && max_tokens >= 0 && toks.size() > static_cast<std::size_t>(max_tokens)) {
      text = text.substr(0, toks[static_cast<std::size_t>(max_tokens)].offset);
      choice["finish_reason"] = "length";
    }
    choice["text"] = text;
    return choice;
  }

  MockBehavior behavior_;
  httplib::Server server_;
  std::thread thread_;
  int port_ = -1;
  mutable std::mutex mu_;
  std::vector<json> requests_;
  std::vector<std::string> auth_;
  std::size_t next_completion_ = 0;
};

}  // namespace gflowpo::lm
