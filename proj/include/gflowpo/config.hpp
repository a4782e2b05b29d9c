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

#include <cstdint>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gflowpo/error.hpp"
#include "gflowpo/reward.hpp"
#include "gflowpo/run.hpp"

namespace gflowpo {

using nlohmann::json;

enum class RunMode { toy, lm };

/// Settings for the remote (frozen-sampler) backend.
struct LmSection {
  std::string base_url = "http://127.0.0.1:8000/v1";
  std::string model_name;
  std::string api_key_env_name = "OPENAI_API_KEY";
  int max_parallel_requests = 4;
  int retry_limit = 3;
  double timeout_seconds = 60.0;
  double retry_base_delay_ms = 500.0;
  std::string dataset_path;
  std::vector<std::string> verbalizer;  // empty = exact-match generation
  int max_prompt_tokens = 150;
  int max_answer_tokens = 32;
  double epsilon = 0.1;
  bool score_prior = false;
  std::string transcript = "transcript.jsonl";
};

struct RunConfig {
  RunMode mode = RunMode::toy;
  TaskOracle oracle;
  KernelPrior prior;
  std::vector<TokenSequence> initial_references;
  int num_shots = 5;
  RunSettings settings;
  std::optional<std::uint64_t> seed;
  std::string output_dir = "gflowpo-out";
  LmSection lm;
  json resolved;  // the effective configuration, defaults filled in
};

namespace detail {

template <typename T>
T get_as(const json& j, const std::string& key) {
  try {
    return j.get<T>();
  } catch (const json::exception&) {
    throw ConfigError(key + ": wrong type (" + j.dump() + ")");
  }
}

inline ExampleRecord parse_predicate(const json& p, const std::string& key) {
  if (!p.is_object() || !p.contains("kind")) throw ConfigError(key + ": predicate needs a 'kind'");
  const auto kind = get_as<std::string>(p.at("kind"), key + ".kind");
  auto field = [&](const char* name) -> const json& {
    if (!p.contains(name)) throw ConfigError(key + "." + name + ": missing");
    return p.at(name);
  };
  for (const auto& [k, _] : p.items()) {
    const bool known = k == "kind" || k == "position" || k == "token" || k == "tokens" || k == "count";
    if (!known) throw ConfigError(key + "." + k + ": unknown key");
  }
  if (kind == "token_at")
    return TokenAt{get_as<int>(field("position"), key + ".position"), get_as<TokenId>(field("token"), key + ".token")};
  if (kind == "contains_subsequence")
    return ContainsSubsequence{get_as<std::vector<TokenId>>(field("tokens"), key + ".tokens")};
  if (kind == "count_of_token")
    return CountOfToken{get_as<TokenId>(field("token"), key + ".token"), get_as<int>(field("count"), key + ".count")};
  throw ConfigError(key + ".kind: unknown predicate kind '" + kind + "'");
}

inline json predicate_to_json(const ExampleRecord& e) {
  return std::visit(
      [](const auto& p) -> json {
        using P = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<P, TokenAt>) return {{"kind", "token_at"}, {"position", p.position}, {"token", p.token}};
        else if constexpr (std::is_same_v<P, ContainsSubsequence>) return {{"kind", "contains_subsequence"}, {"tokens", p.tokens}};
        else return {{"kind", "count_of_token"}, {"token", p.token}, {"count", p.count}};
      },
      e);
}

/// Walks an object, handing each key to `handle`; unknown keys are errors.
template <typename F>
void for_each_key(const json& section, const std::string& name, F&& handle) {
  if (!section.is_object()) throw ConfigError(name + ": must be an object");
  for (const auto& [k, v] : section.items()) {
    if (!handle(k, v)) throw ConfigError(name + "." + k + ": unknown key");
  }
}

}  // namespace detail

/**
 * Parses the JSON run configuration. Sections mirror the modules:
 * "task", "gfn", "dmu", "lm"; top-level keys are "mode", "seed" and
 * "output_dir". Every error names the offending key.
 */
inline RunConfig parse_run_config(const json& root) {
  using detail::get_as;
  RunConfig cfg;
  if (!root.is_object()) throw ConfigError("config: top level must be an object");

  detail::for_each_key(root, "config", [&](const std::string& k, const json& v) {
    if (k == "mode") {
      const auto m = get_as<std::string>(v, "mode");
      if (m == "toy") cfg.mode = RunMode::toy;
      else if (m == "lm") cfg.mode = RunMode::lm;
      else throw ConfigError("mode: expected 'toy' or 'lm'");
    } else if (k == "seed") {
      if (!v.is_number_integer()) throw ConfigError("seed: must be an integer");
      cfg.seed = v.get<std::uint64_t>();
    } else if (k == "output_dir") {
      cfg.output_dir = get_as<std::string>(v, "output_dir");
    } else if (k == "task" || k == "gfn" || k == "dmu" || k == "lm" || k == "diagnostics") {
      return true;  // handled below
    } else {
      return false;
    }
    return true;
  });
  if (!cfg.seed) throw ConfigError("seed: required");

  const json empty = json::object();
  const json& task = root.contains("task") ? root.at("task") : empty;
  const json& gfn = root.contains("gfn") ? root.at("gfn") : empty;
  const json& dmu = root.contains("dmu") ? root.at("dmu") : empty;
  const json& lm = root.contains("lm") ? root.at("lm") : empty;
  const json& diag = root.contains("diagnostics") ? root.at("diagnostics") : empty;

  bool has_predicates = false;
  detail::for_each_key(task, "task", [&](const std::string& k, const json& v) {
    const std::string key = "task." + k;
    if (k == "vocab_size") cfg.oracle.vocab_size = cfg.prior.vocab_size = get_as<int>(v, key);
    else if (k == "length") cfg.oracle.length = cfg.prior.length = get_as<int>(v, key);
    else if (k == "epsilon") cfg.oracle.epsilon = get_as<double>(v, key);
    else if (k == "lambda") cfg.prior.lambda = get_as<double>(v, key);
    else if (k == "eta") cfg.prior.eta = get_as<double>(v, key);
    else if (k == "num_shots") cfg.num_shots = get_as<int>(v, key);
    else if (k == "references") {
      for (const auto& r : v) cfg.initial_references.emplace_back(get_as<std::vector<TokenId>>(r, key));
    } else if (k == "predicates") {
      if (!v.is_array()) throw ConfigError(key + ": must be an array");
      has_predicates = true;
      for (std::size_t i = 0; i < v.size(); ++i)
        cfg.oracle.examples.push_back(detail::parse_predicate(v[i], key + "[" + std::to_string(i) + "]"));
    } else return false;
    return true;
  });

  auto& g = cfg.settings.gfn;
  g.learning_rate = cfg.mode == RunMode::lm ? 0.0 : 0.05;
  detail::for_each_key(gfn, "gfn", [&](const std::string& k, const json& v) {
    const std::string key = "gfn." + k;
    if (k == "rho") g.rho = get_as<double>(v, key);
    else if (k == "learning_rate") g.learning_rate = get_as<double>(v, key);
    else if (k == "batch_size") g.batch_size = get_as<int>(v, key);
    else if (k == "train_steps") g.train_steps = get_as<int>(v, key);
    else if (k == "pre_steps") g.pre_steps = get_as<int>(v, key);
    else if (k == "ema_decay") g.ema_decay = get_as<double>(v, key);
    else if (k == "temp_low") g.temp_low = get_as<double>(v, key);
    else if (k == "temp_high") g.temp_high = get_as<double>(v, key);
    else if (k == "dmu_every") g.dmu_every = get_as<int>(v, key);
    else if (k == "use_raw_log_z") g.use_raw_log_z = get_as<bool>(v, key);
    else if (k == "replay_capacity") g.replay_capacity = get_as<std::size_t>(v, key);
    else if (k == "high_reward_capacity") g.high_reward_capacity = get_as<std::size_t>(v, key);
    else if (k == "oracle_budget") g.oracle_budget = get_as<std::uint64_t>(v, key);
    else return false;
    return true;
  });

  auto& d = cfg.settings.dmu;
  detail::for_each_key(dmu, "dmu", [&](const std::string& k, const json& v) {
    const std::string key = "dmu." + k;
    if (k == "k_b") d.k_b = get_as<int>(v, key);
    else if (k == "k_q") d.k_q = get_as<int>(v, key);
    else if (k == "variant") d.variant = parse_dmu_variant(get_as<std::string>(v, key));
    else return false;
    return true;
  });

  detail::for_each_key(diag, "diagnostics", [&](const std::string& k, const json& v) {
    const std::string key = "diagnostics." + k;
    if (k == "tv_every") cfg.settings.tv_every = get_as<int>(v, key);
    else if (k == "log_elbo") cfg.settings.log_elbo = get_as<bool>(v, key);
    else if (k == "enumeration_cap") cfg.settings.enumeration_cap = get_as<std::size_t>(v, key);
    else return false;
    return true;
  });

  auto& l = cfg.lm;
  detail::for_each_key(lm, "lm", [&](const std::string& k, const json& v) {
    const std::string key = "lm." + k;
    if (k == "base_url") l.base_url = get_as<std::string>(v, key);
    else if (k == "model_name") l.model_name = get_as<std::string>(v, key);
    else if (k == "api_key_env_name") l.api_key_env_name = get_as<std::string>(v, key);
    else if (k == "api_key") throw ConfigError(key + ": API keys are read from the environment only");
    else if (k == "max_parallel_requests") l.max_parallel_requests = get_as<int>(v, key);
    else if (k == "retry_limit") l.retry_limit = get_as<int>(v, key);
    else if (k == "timeout_seconds") l.timeout_seconds = get_as<double>(v, key);
    else if (k == "retry_base_delay_ms") l.retry_base_delay_ms = get_as<double>(v, key);
    else if (k == "dataset_path") l.dataset_path = get_as<std::string>(v, key);
    else if (k == "verbalizer") l.verbalizer = get_as<std::vector<std::string>>(v, key);
    else if (k == "max_prompt_tokens") l.max_prompt_tokens = get_as<int>(v, key);
    else if (k == "max_answer_tokens") l.max_answer_tokens = get_as<int>(v, key);
    else if (k == "epsilon") l.epsilon = get_as<double>(v, key);
    else if (k == "score_prior") l.score_prior = get_as<bool>(v, key);
    else if (k == "transcript") l.transcript = get_as<std::string>(v, key);
    else return false;
    return true;
  });

  g.validate();
  d.validate();
  if (cfg.num_shots < 0) throw ConfigError("task.num_shots: must be nonnegative");
  if (cfg.mode == RunMode::toy) {
    if (cfg.oracle.vocab_size <= 0) throw ConfigError("task.vocab_size: required and positive");
    if (cfg.oracle.length <= 0) throw ConfigError("task.length: required and positive");
    if (!has_predicates) throw ConfigError("task.predicates: required");
    cfg.oracle.validate();
    cfg.prior.validate();
    for (std::size_t i = 0; i < cfg.initial_references.size(); ++i) {
      try {
        check_sequence(cfg.initial_references[i], cfg.oracle.vocab_size, cfg.oracle.length);
      } catch (const Error& e) {
        throw ConfigError("task.references[" + std::to_string(i) + "]: " + e.what());
      }
    }
  } else {
    if (g.learning_rate != 0.0)
      throw ConfigError("gfn.learning_rate: gradient steps need the tabular policy and are unavailable in lm mode");
    if (l.model_name.empty()) throw ConfigError("lm.model_name: required in lm mode");
    if (l.dataset_path.empty()) throw ConfigError("lm.dataset_path: required in lm mode");
    if (l.max_parallel_requests <= 0) throw ConfigError("lm.max_parallel_requests: must be positive");
    if (l.retry_limit < 0) throw ConfigError("lm.retry_limit: must be nonnegative");
    if (!(l.epsilon > 0.0)) throw ConfigError("lm.epsilon: must be positive");
    if (l.max_prompt_tokens <= 0) throw ConfigError("lm.max_prompt_tokens: must be positive");
    if (l.verbalizer.size() == 1) throw ConfigError("lm.verbalizer: needs at least two labels");
  }

  json predicates = json::array();
  for (const auto& e : cfg.oracle.examples) predicates.push_back(detail::predicate_to_json(e));
  json refs = json::array();
  for (const auto& r : cfg.initial_references) refs.push_back(r.tokens);
  cfg.resolved = {
      {"mode", cfg.mode == RunMode::toy ? "toy" : "lm"},
      {"seed", *cfg.seed},
      {"output_dir", cfg.output_dir},
      {"task",
       {{"vocab_size", cfg.oracle.vocab_size}, {"length", cfg.oracle.length}, {"epsilon", cfg.oracle.epsilon},
        {"lambda", cfg.prior.lambda}, {"eta", cfg.prior.eta}, {"num_shots", cfg.num_shots},
        {"references", refs}, {"predicates", predicates}}},
      {"gfn",
       {{"rho", g.rho}, {"learning_rate", g.learning_rate}, {"batch_size", g.batch_size},
        {"train_steps", g.train_steps}, {"pre_steps", g.pre_steps}, {"ema_decay", g.ema_decay},
        {"temp_low", g.temp_low}, {"temp_high", g.temp_high}, {"dmu_every", g.dmu_every},
        {"use_raw_log_z", g.use_raw_log_z}, {"replay_capacity", g.replay_capacity},
        {"high_reward_capacity", g.high_reward_capacity}, {"oracle_budget", g.oracle_budget}}},
      {"dmu", {{"k_b", d.k_b}, {"k_q", d.k_q}, {"variant", to_string(d.variant)}}},
      {"diagnostics",
       {{"tv_every", cfg.settings.tv_every}, {"log_elbo", cfg.settings.log_elbo},
        {"enumeration_cap", cfg.settings.enumeration_cap}}},
      {"lm",
       {{"base_url", l.base_url}, {"model_name", l.model_name}, {"api_key_env_name", l.api_key_env_name},
        {"max_parallel_requests", l.max_parallel_requests}, {"retry_limit", l.retry_limit},
        {"timeout_seconds", l.timeout_seconds}, {"retry_base_delay_ms", l.retry_base_delay_ms},
        {"dataset_path", l.dataset_path}, {"verbalizer", l.verbalizer},
        {"max_prompt_tokens", l.max_prompt_tokens}, {"max_answer_tokens", l.max_answer_tokens},
        {"epsilon", l.epsilon}, {"score_prior", l.score_prior}, {"transcript", l.transcript}}}};
  return cfg;
}

/// Applies one "section.key=value" override. The value is read as JSON when
/// it parses, otherwise as a plain string.
inline void apply_override(json& root, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + assignment + "': expected key=value");
  const std::string path = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  json value;
  try {
    value = json::parse(text);
  } catch (const json::exception&) {
    value = text;
  }
  json* node = &root;
  std::size_t start = 0;
  while (true) {
    const auto dot = path.find('.', start);
    const std::string part = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (part.empty()) throw ConfigError("override '" + assignment + "': empty key segment");
    if (dot == std::string::npos) {
      (*node)[part] = value;
      break;
    }
    json& child = (*node)[part];
    if (child.is_null()) child = json::object();
    if (!child.is_object()) throw ConfigError(path.substr(0, dot) + ": not a section");
    node = &child;
    start = dot + 1;
  }
}

inline json load_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open '" + path + "'");
  try {
    return json::parse(in, nullptr, true, true);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: parse error: ") + e.what());
  }
}

/// Where each configuration key comes from.
struct KeyProvenance {
  const char* key;
  const char* source;      // "published" or "invented"
  const char* note;
  json published_default;  // null when invented
};

inline const std::vector<KeyProvenance>& key_provenance() {
  static const std::vector<KeyProvenance> table = {
      {"mode", "invented", "toy enumeration mode or remote lm mode", nullptr},
      {"seed", "invented", "RNG seed; required", nullptr},
      {"output_dir", "invented", "artifact directory", nullptr},
      {"task.vocab_size", "invented", "toy vocabulary size V", nullptr},
      {"task.length", "invented", "toy sequence length L", nullptr},
      {"task.epsilon", "invented", "floor added to the correct count; only 'small positive' is published", nullptr},
      {"task.lambda", "invented", "uniform weight of the toy reference prior", nullptr},
      {"task.eta", "invented", "per-position corruption rate of the toy reference prior", nullptr},
      {"task.num_shots", "published", "hyperparameter 'Num example'", 5},
      {"task.references", "invented", "initial reference set (published algorithm starts empty)", json::array()},
      {"task.predicates", "invented", "toy examples standing in for the training set", nullptr},
      {"gfn.rho", "published", "hyperparameter 'Online/offline ratio'", 0.5},
      {"gfn.learning_rate", "published", "hyperparameter 'Learning Rate' (LoRA scale; tabular default 0.05)", 1e-4},
      {"gfn.batch_size", "invented", "minibatch size m", nullptr},
      {"gfn.train_steps", "published", "hyperparameter 'Total train steps'", 200},
      {"gfn.pre_steps", "published", "hyperparameter 'Pre-steps'", 100},
      {"gfn.ema_decay", "published", "hyperparameter 'EMA decay'", 0.99},
      {"gfn.temp_low", "published", "hyperparameter 'Sampling temperature' lower end", 0.5},
      {"gfn.temp_high", "published", "hyperparameter 'Sampling temperature' upper end", 2.0},
      {"gfn.dmu_every", "published", "hyperparameter 'M-step frequency'", 1},
      {"gfn.use_raw_log_z", "invented", "use the raw batch log Z instead of the EMA in residuals", nullptr},
      {"gfn.replay_capacity", "published", "hyperparameter 'Train buffer size'", 1000},
      {"gfn.high_reward_capacity", "published", "hyperparameter 'High-reward buffer size'", 5},
      {"gfn.oracle_budget", "invented", "stop once this many oracle calls are spent (0 = unlimited)", nullptr},
      {"dmu.k_b", "published", "references drawn from the replay buffer", 2},
      {"dmu.k_q", "published", "references drawn from the high-reward buffer", 1},
      {"dmu.variant", "invented", "both_buffers | replay_only | highreward_only | off", nullptr},
      {"diagnostics.tv_every", "invented", "steps between TV-to-posterior evaluations", nullptr},
      {"diagnostics.log_elbo", "invented", "exact ELBO before/after each memory update", nullptr},
      {"diagnostics.enumeration_cap", "invented", "largest enumerable V^L", nullptr},
      {"lm.base_url", "invented", "OpenAI-compatible endpoint base URL", nullptr},
      {"lm.model_name", "invented", "model served by the endpoint", nullptr},
      {"lm.api_key_env_name", "invented", "environment variable holding the API key", nullptr},
      {"lm.max_parallel_requests", "invented", "in-flight request limit", nullptr},
      {"lm.retry_limit", "invented", "retries per request", nullptr},
      {"lm.timeout_seconds", "invented", "per-request timeout", nullptr},
      {"lm.retry_base_delay_ms", "invented", "first backoff delay", nullptr},
      {"lm.dataset_path", "invented", "JSONL file of {input, output} examples", nullptr},
      {"lm.verbalizer", "invented", "label tokens; empty selects exact-match generation", nullptr},
      {"lm.max_prompt_tokens", "published", "hyperparameter 'Max prompt length'", 150},
      {"lm.max_answer_tokens", "invented", "greedy decode length for exact-match tasks", nullptr},
      {"lm.epsilon", "invented", "floor added to the correct count", nullptr},
      {"lm.score_prior", "invented", "score log p_ref of each sample through echo logprobs", nullptr},
      {"lm.transcript", "invented", "request/response log file name", nullptr},
  };
  return table;
}

/// Run header: every effective key with its provenance and whether it
/// deviates from a published default.
inline json run_header(const RunConfig& cfg, const std::string& variant) {
  json keys = json::array();
  bool any_deviation = false;
  for (const auto& p : key_provenance()) {
    const json::json_pointer ptr("/" + [&] {
      std::string s = p.key;
      for (auto& c : s)
        if (c == '.') c = '/';
      return s;
    }());
    const json value = cfg.resolved.contains(ptr) ? cfg.resolved.at(ptr) : json();
    json entry = {{"key", p.key}, {"value", value}, {"source", p.source}, {"note", p.note}};
    if (!p.published_default.is_null()) {
      entry["published_default"] = p.published_default;
      const bool deviates = value != p.published_default;
      entry["deviates"] = deviates;
      any_deviation = any_deviation || deviates;
    }
    keys.push_back(std::move(entry));
  }
  return {{"variant", variant}, {"mode", cfg.resolved.at("mode")}, {"seed", cfg.resolved.at("seed")},
          {"deviates_from_published_defaults", any_deviation}, {"keys", keys}};
}

}  // namespace gflowpo
