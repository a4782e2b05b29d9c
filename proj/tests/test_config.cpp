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

#include <filesystem>
#include <fstream>
#include <set>

#include "gflowpo/config.hpp"
#include "gflowpo/experiment.hpp"

using namespace gflowpo;
namespace fs = std::filesystem;

namespace {

json toy_json() {
  return json::parse(R"({
    "mode": "toy", "seed": 3,
    "task": {"vocab_size": 3, "length": 3, "references": [[0, 1, 2]],
             "predicates": [{"kind": "token_at", "position": 0, "token": 1},
                            {"kind": "contains_subsequence", "tokens": [2, 2]},
                            {"kind": "count_of_token", "token": 0, "count": 1}]},
    "gfn": {"train_steps": 30, "pre_steps": 10}
  })");
}

std::string error_of(const json& j) {
  try {
    parse_run_config(j);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

fs::path scratch(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("gflowpo_test_" + name);
  fs::remove_all(p);
  return p;
}

}  // namespace

TEST(Config, DefaultsAndPublishedValues) {
  const auto cfg = parse_run_config(toy_json());
  EXPECT_EQ(cfg.settings.gfn.rho, 0.5);
  EXPECT_EQ(cfg.settings.gfn.learning_rate, 0.05);
  EXPECT_EQ(cfg.settings.gfn.ema_decay, 0.99);
  EXPECT_EQ(cfg.settings.gfn.dmu_every, 1);
  EXPECT_EQ(cfg.settings.gfn.replay_capacity, 1000u);
  EXPECT_EQ(cfg.settings.gfn.high_reward_capacity, 5u);
  EXPECT_EQ(cfg.settings.dmu.k_b, 2);
  EXPECT_EQ(cfg.settings.dmu.k_q, 1);
  EXPECT_EQ(cfg.oracle.examples.size(), 3u);
  EXPECT_EQ(cfg.initial_references.size(), 1u);
  EXPECT_EQ(*cfg.seed, 3u);
}

TEST(Config, ErrorsNameTheKey) {
  auto j = toy_json();
  j.erase("seed");
  EXPECT_NE(error_of(j).find("seed"), std::string::npos);

  j = toy_json();
  j["gfn"]["rhoo"] = 0.5;
  EXPECT_NE(error_of(j).find("gfn.rhoo"), std::string::npos);

  j = toy_json();
  j["gfn"]["rho"] = "half";
  EXPECT_NE(error_of(j).find("gfn.rho"), std::string::npos);

  j = toy_json();
  j["task"]["predicates"][1]["kind"] = "regex";
  EXPECT_NE(error_of(j).find("task.predicates[1].kind"), std::string::npos);

  j = toy_json();
  j["task"]["references"] = json::array({json::array({0, 1})});
  EXPECT_NE(error_of(j).find("task.references[0]"), std::string::npos);

  j = toy_json();
  j["gfn"]["temp_low"] = 3.0;
  EXPECT_NE(error_of(j).find("gfn.temp_high"), std::string::npos);
}

TEST(Config, LmModeRefusesGradientStepsAndConfigKeys) {
  json j = {{"mode", "lm"}, {"seed", 1}, {"lm", {{"model_name", "m"}, {"dataset_path", "d.jsonl"}}}};
  const auto cfg = parse_run_config(j);
  EXPECT_EQ(cfg.settings.gfn.learning_rate, 0.0);
  j["gfn"]["learning_rate"] = 1e-4;
  EXPECT_NE(error_of(j).find("gfn.learning_rate"), std::string::npos);
  j["gfn"].erase("learning_rate");
  j["lm"]["api_key"] = "sk-secret";
  EXPECT_NE(error_of(j).find("lm.api_key"), std::string::npos);
}

TEST(Config, Overrides) {
  auto j = toy_json();
  apply_override(j, "dmu.variant=off");
  apply_override(j, "gfn.rho=1");
  apply_override(j, "diagnostics.tv_every=5");
  const auto cfg = parse_run_config(j);
  EXPECT_EQ(cfg.settings.dmu.variant, DmuVariant::off);
  EXPECT_EQ(cfg.settings.gfn.rho, 1.0);
  EXPECT_EQ(cfg.settings.tv_every, 5);
  EXPECT_EQ(variant_label(cfg.settings), "gflowpo-on-X");
  EXPECT_THROW(apply_override(j, "novalue"), ConfigError);
  EXPECT_THROW(apply_override(j, "gfn..rho=1"), ConfigError);
}

TEST(Config, RunHeaderCoversEveryKeyAndFlagsDeviations) {
  auto cfg = parse_run_config(toy_json());
  const auto h = run_header(cfg, "gflowpo-off-O");
  std::set<std::string> keys;
  for (const auto& k : h["keys"]) {
    keys.insert(k["key"].get<std::string>());
    const auto src = k["source"].get<std::string>();
    EXPECT_TRUE(src == "published" || src == "invented");
  }
  for (const auto& [section, body] : cfg.resolved.items()) {
    if (!body.is_object()) {
      EXPECT_TRUE(keys.count(section)) << section;
      continue;
    }
    for (const auto& [k, _] : body.items()) EXPECT_TRUE(keys.count(section + "." + k)) << section << "." << k;
  }
  bool steps_flagged = false, rho_flagged = true;
  for (const auto& k : h["keys"]) {
    if (k["key"] == "gfn.train_steps") steps_flagged = k["deviates"].get<bool>();
    if (k["key"] == "gfn.rho") rho_flagged = k["deviates"].get<bool>();
  }
  EXPECT_TRUE(steps_flagged);  // 30 instead of 200
  EXPECT_FALSE(rho_flagged);
  EXPECT_TRUE(h["deviates_from_published_defaults"].get<bool>());
}

TEST(Experiment, ArtifactsAreReproducible) {
  const auto cfg = parse_run_config(toy_json());
  const auto a = scratch("art_a"), b = scratch("art_b");
  const auto ra = write_run_artifacts(a, cfg, run_toy(cfg));
  write_run_artifacts(b, cfg, run_toy(cfg));
  for (const char* f : {"metrics.jsonl", "replay_buffer.tsv", "high_reward_buffer.tsv", "policy.tsv", "summary.json"}) {
    std::ifstream fa(a / f), fb(b / f);
    const std::string sa{std::istreambuf_iterator<char>(fa), {}}, sb{std::istreambuf_iterator<char>(fb), {}};
    EXPECT_EQ(sa, sb) << f;
    EXPECT_FALSE(sa.empty()) << f;
  }
  std::ifstream hr(ra.high_reward_buffer);
  const auto q = read_records<TokenSequence>(hr);
  ASSERT_TRUE(ra.best.has_value());
  EXPECT_EQ(q.front().sequence, ra.best->sequence);

  std::ifstream m(ra.metrics);
  std::string line;
  std::getline(m, line);
  const auto rec = json::parse(line);
  for (const char* k : {"step", "loss", "raw_log_z", "ema_log_z", "online_count", "best_Q_score", "tv_to_posterior",
                        "oracle_calls"})
    EXPECT_TRUE(rec.contains(k)) << k;
}

TEST(Experiment, AblationGridAndReport) {
  const auto base = parse_run_config(toy_json());
  const auto grid = ablation_grid(base);
  ASSERT_EQ(grid.size(), 4u);
  std::set<std::string> labels;
  const auto dir = scratch("abl");
  for (const auto& v : grid) {
    labels.insert(v.label);
    for (std::uint64_t seed : {1u, 2u}) {
      const auto cfg = with_variant(base, v, seed);
      const auto r = run_toy(cfg);
      EXPECT_EQ(r.variant_label, v.label);
      write_run_artifacts(dir / v.label / std::to_string(seed), cfg, r);
    }
  }
  EXPECT_EQ(labels, (std::set<std::string>{"gflowpo-on-X", "gflowpo-off-X", "gflowpo-on-O", "gflowpo-off-O"}));

  const auto out = write_report(dir, dir / "report");
  EXPECT_EQ(out.runs, 8u);
  std::ifstream calls(out.oracle_series);
  std::string header;
  std::getline(calls, header);
  EXPECT_EQ(header, "variant\tseed\toracle_calls\tbest_found_A");

  const auto empty = scratch("empty");
  fs::create_directories(empty);
  EXPECT_THROW(write_report(empty, empty), MissingArtifacts);
}

TEST(Experiment, SummarizeMeanAndStd) {
  const auto row = summarize("x", {1.0, 2.0, 3.0, 4.0});
  EXPECT_DOUBLE_EQ(row.mean, 2.5);
  EXPECT_NEAR(row.stddev, std::sqrt(5.0 / 3.0), 1e-15);
}
