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

#include <chrono>
#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <memory>
#include <mutex>
#include <string>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "gflowpo/error.hpp"
#include "gflowpo/rng.hpp"

namespace gflowpo::lm {

using nlohmann::json;

class EndpointError : public Error {
 public:
  using Error::Error;
};

/// HTTP 429 that persisted through every retry.
class RateLimited : public EndpointError {
 public:
  using EndpointError::EndpointError;
};

class LogprobsUnsupported : public Error {
 public:
  using Error::Error;
};

class VerbalizerUnscoreable : public Error {
 public:
  using Error::Error;
};

struct LmEndpointConfig {
  std::string base_url = "http://127.0.0.1:8000/v1";
  std::string model_name;
  std::string api_key_env_name = "OPENAI_API_KEY";
  int max_parallel_requests = 4;
  int retry_limit = 3;
  double timeout_seconds = 60.0;
  double retry_base_delay_ms = 500.0;
};

/// Append-only JSONL log of every request and response. The API key is
/// never written: headers are not logged and any occurrence of the key in a
/// body is replaced.
class Transcript {
 public:
  Transcript(const std::string& path, std::string secret)
      : out_(path, std::ios::app), secret_(std::move(secret)) {
    if (!out_) throw Error("cannot open transcript '" + path + "'");
  }

  void log(const json& record) {
    std::string line = record.dump();
    if (!secret_.empty()) {
      for (auto pos = line.find(secret_); pos != std::string::npos; pos = line.find(secret_, pos))
        line.replace(pos, secret_.size(), "[REDACTED]");
    }
    std::lock_guard lock(mu_);
    out_ << line << '\n';
    out_.flush();
  }

 private:
  std::mutex mu_;
  std::ofstream out_;
  std::string secret_;
};

/**
 * Client for an OpenAI-compatible completions route. Retries 429, 5xx and
 * transport failures with jittered exponential backoff; other 4xx responses
 * fail immediately. Safe to call from several threads.
 */
class CompletionsClient {
 public:
  CompletionsClient(LmEndpointConfig cfg, std::string api_key, std::shared_ptr<Transcript> transcript = nullptr,
                    std::uint64_t jitter_seed = 0)
      : cfg_(std::move(cfg)), api_key_(std::move(api_key)), transcript_(std::move(transcript)), jitter_(jitter_seed) {
    const auto scheme_end = cfg_.base_url.find("://");
    if (scheme_end == std::string::npos) throw ConfigError("lm.base_url: missing scheme in '" + cfg_.base_url + "'");
    const auto path_start = cfg_.base_url.find('/', scheme_end + 3);
    origin_ = cfg_.base_url.substr(0, path_start);
    std::string prefix = path_start == std::string::npos ? "" : cfg_.base_url.substr(path_start);
    while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();
    path_ = prefix + "/completions";
  }

  /// Reads the API key from the configured environment variable (may be unset for local servers).
  static CompletionsClient from_environment(LmEndpointConfig cfg, std::shared_ptr<Transcript> transcript = nullptr,
                                            std::uint64_t jitter_seed = 0) {
    const char* key = std::getenv(cfg.api_key_env_name.c_str());
    return CompletionsClient(std::move(cfg), key ? key : "", std::move(transcript), jitter_seed);
  }

  const LmEndpointConfig& config() const { return cfg_; }
  const std::string& api_key() const { return api_key_; }

  int retries() const {
    std::lock_guard lock(mu_);
    return retries_;
  }

  /// POSTs `body` (the model field is filled in) and returns the parsed response.
  json complete(json body) {
    body["model"] = cfg_.model_name;
    const std::uint64_t id = next_id();
    if (transcript_) transcript_->log({{"event", "request"}, {"id", id}, {"route", path_}, {"body", body}});

    httplib::Client http(origin_);
    const auto secs = static_cast<time_t>(cfg_.timeout_seconds);
    const auto usecs = static_cast<time_t>((cfg_.timeout_seconds - static_cast<double>(secs)) * 1e6);
    http.set_connection_timeout(secs, usecs);
    http.set_read_timeout(secs, usecs);
    http.set_write_timeout(secs, usecs);
    httplib::Headers headers;
    if (!api_key_.empty()) headers.emplace("Authorization", "Bearer " + api_key_);
    const std::string payload = body.dump();

    for (int attempt = 0;; ++attempt) {
      auto res = http.Post(path_, headers, payload, "application/json");
      std::string failure;
      bool rate_limited = false;
      if (!res) {
        failure = "transport error: " + httplib::to_string(res.error());
      } else {
        if (transcript_)
          transcript_->log({{"event", "response"}, {"id", id}, {"attempt", attempt}, {"status", res->status},
                            {"body", res->body}});
        if (res->status == 429) {
          rate_limited = true;
          failure = "rate limited (HTTP 429)";
        } else if (res->status >= 500) {
          failure = "server error (HTTP " + std::to_string(res->status) + ")";
        } else if (res->status >= 400) {
          throw EndpointError("endpoint rejected request (HTTP " + std::to_string(res->status) + "): " + res->body);
        } else {
          try {
            return json::parse(res->body);
          } catch (const json::exception& e) {
            throw EndpointError(std::string("malformed endpoint response: ") + e.what());
          }
        }
      }
      if (attempt >= cfg_.retry_limit) {
        const std::string msg = failure + " after " + std::to_string(attempt) + " retries";
        if (rate_limited) throw RateLimited(msg);
        throw EndpointError(msg);
      }
      const double delay_ms = backoff_ms(attempt);
      {
        std::lock_guard lock(mu_);
        ++retries_;
      }
      if (transcript_)
        transcript_->log({{"event", "retry"}, {"id", id}, {"attempt", attempt + 1}, {"reason", failure},
                          {"delay_ms", delay_ms}});
      std::this_thread::sleep_for(std::chrono::duration<double, std::milli>(delay_ms));
    }
  }

 private:
  std::uint64_t next_id() {
    std::lock_guard lock(mu_);
    return ++request_id_;
  }

  double backoff_ms(int attempt) {
    std::lock_guard lock(mu_);
    const double jitter = jitter_.uniform(0.5, 1.5);
    return cfg_.retry_base_delay_ms * static_cast<double>(1u << std::min(attempt, 16)) * jitter;
  }

  LmEndpointConfig cfg_;
  std::string api_key_;
  std::shared_ptr<Transcript> transcript_;
  std::string origin_;
  std::string path_;
  mutable std::mutex mu_;
  RngStream jitter_;
  int retries_ = 0;
  std::uint64_t request_id_ = 0;
};

}  // namespace gflowpo::lm
