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

// Serves the deterministic mock completions endpoint until interrupted.

#include <csignal>
#include <fstream>
#include <iostream>
#include <thread>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "gflowpo/lm/mock_server.hpp"

namespace {
volatile std::sig_atomic_t stop_requested = 0;
}

int main(int argc, char** argv) {
  CLI::App app{"deterministic mock of an OpenAI-compatible completions endpoint"};
  int port = 8000;
  std::string behavior_path;
  app.add_option("--port", port, "port on 127.0.0.1 (0 picks a free one)");
  app.add_option("--behavior", behavior_path, "JSON file with mock behaviour")->check(CLI::ExistingFile);
  CLI11_PARSE(app, argc, argv);

  gflowpo::lm::MockBehavior b;
  if (!behavior_path.empty()) {
    std::ifstream in(behavior_path);
    const auto j = nlohmann::json::parse(in);
    b.token_logprob = j.value("token_logprob", b.token_logprob);
    b.completions = j.value("completions", b.completions);
    b.label_logprobs = j.value("label_logprobs", b.label_logprobs);
    b.default_label_logprobs = j.value("default_label_logprobs", b.default_label_logprobs);
    b.answers = j.value("answers", b.answers);
    b.fail_first = j.value("fail_first", b.fail_first);
    b.fail_status = j.value("fail_status", b.fail_status);
    b.supports_logprobs = j.value("supports_logprobs", b.supports_logprobs);
    b.honor_max_tokens = j.value("honor_max_tokens", b.honor_max_tokens);
  }
  gflowpo::lm::MockCompletionsServer server(b, port);
  std::cout << server.base_url() << std::endl;
  std::signal(SIGINT, [](int) { stop_requested = 1; });
  std::signal(SIGTERM, [](int) { stop_requested = 1; });
  while (!stop_requested) std::this_thread::sleep_for(std::chrono::milliseconds(100));
  return 0;
}
