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
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gflowpo/config.hpp"
#include "gflowpo/run.hpp"

namespace gflowpo {

namespace fs = std::filesystem;

inline json to_json(const StepMetrics& m) {
  return {{"step", m.step},
          {"loss", m.loss},
          {"raw_log_z", m.raw_log_z},
          {"ema_log_z", m.ema_log_z},
          {"online_count", m.online_count},
          {"best_Q_score", m.best_q_score ? json(*m.best_q_score) : json()},
          {"tv_to_posterior", m.tv_to_posterior ? json(*m.tv_to_posterior) : json()},
          {"oracle_calls", m.oracle_calls}};
}

inline json to_json(const std::optional<ElboEstimate>& e) {
  if (!e) return nullptr;
  return {{"accuracy_term", e->accuracy_term}, {"kl_term", e->kl_term}, {"elbo", e->elbo}};
}

inline json to_json(const DmuEvent& ev) {
  json refs = json::array();
  for (const auto& r : ev.reference_set) refs.push_back(r.tokens);
  return {{"step", ev.step},
          {"z_ref", refs},
          {"elbo_before", to_json(ev.elbo_before)},
          {"elbo_after", to_json(ev.elbo_after)},
          {"q_scores", ev.q_scores}};
}

/// Initial meta-context for a toy run: up to num_shots examples drawn once
/// (on a stream separate from training) and the configured references.
inline MetaContext<TokenSequence> make_toy_meta(const RunConfig& cfg) {
  MetaContext<TokenSequence> meta;
  RngStream shot_rng(*cfg.seed ^ 0x5407ull);
  std::vector<std::size_t> idx(cfg.oracle.examples.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  const std::size_t k = std::min<std::size_t>(static_cast<std::size_t>(cfg.num_shots), idx.size());
  for (std::size_t i = 0; i < k; ++i) {
    std::swap(idx[i], idx[i + shot_rng.uniform_index(idx.size() - i)]);
    meta.shots.push_back({describe(cfg.oracle.examples[idx[i]]), "1"});
  }
  meta.reference_set = cfg.initial_references;
  return meta;
}

/// Paths written by write_run_artifacts.
struct RunArtifacts {
  fs::path directory;
  fs::path metrics;
  fs::path dmu_events;
  fs::path replay_buffer;
  fs::path high_reward_buffer;
  fs::path policy;
  fs::path summary;
  fs::path header;
  std::string variant;
  std::optional<ScoredSequence> best;
};

inline void write_jsonl(const fs::path& path, const std::vector<json>& records) {
  std::ofstream out(path);
  for (const auto& r : records) out << r.dump() << '\n';
}

inline RunArtifacts write_run_artifacts(const fs::path& dir, const RunConfig& cfg, const RunResult& r) {
  fs::create_directories(dir);
  RunArtifacts a;
  a.directory = dir;
  a.variant = r.variant_label;
  a.best = r.best();
  a.header = dir / "run_header.json";
  a.metrics = dir / "metrics.jsonl";
  a.dmu_events = dir / "dmu_events.jsonl";
  a.replay_buffer = dir / "replay_buffer.tsv";
  a.high_reward_buffer = dir / "high_reward_buffer.tsv";
  a.policy = dir / "policy.tsv";
  a.summary = dir / "summary.json";

  { std::ofstream(a.header) << run_header(cfg, r.variant_label).dump(2) << '\n'; }
  {
    std::vector<json> recs;
    for (const auto& m : r.metrics) recs.push_back(to_json(m));
    write_jsonl(a.metrics, recs);
  }
  {
    std::vector<json> recs;
    for (const auto& e : r.dmu_events) recs.push_back(to_json(e));
    write_jsonl(a.dmu_events, recs);
  }
  { std::ofstream out(a.replay_buffer); write_records(out, r.state.replay.snapshot()); }
  { std::ofstream out(a.high_reward_buffer); write_records(out, r.state.high_reward.snapshot()); }
  { std::ofstream out(a.policy); r.state.policy.save(out); }

  json summary = {{"variant", r.variant_label},
                  {"seed", *cfg.seed},
                  {"steps", r.state.step},
                  {"oracle_calls", r.state.oracle_calls},
                  {"best_found", r.state.best_found() ? json(*r.state.best_found()) : json()},
                  {"best_prompt", a.best ? json(a.best->sequence.tokens) : json()},
                  {"best_score", a.best ? json(a.best->correct_count) : json()},
                  {"best_found_trace", r.state.best_found_trace}};
  std::ofstream(a.summary) << summary.dump(2) << '\n';
  return a;
}

inline RunResult run_toy(const RunConfig& cfg) {
  if (cfg.mode != RunMode::toy) throw ConfigError("mode: run_toy needs mode 'toy'");
  return run(cfg.settings, cfg.oracle, cfg.prior, make_toy_meta(cfg), *cfg.seed);
}

// --- ablation -------------------------------------------------------------

struct AblationVariant {
  std::string label;
  double rho;
  DmuVariant dmu;
};

/// The 2x2 grid: {on-policy (rho = 1), off-policy (configured rho < 1, default 0.5)} x {memory update off, on}.
inline std::vector<AblationVariant> ablation_grid(const RunConfig& base) {
  const double off_rho = base.settings.gfn.rho < 1.0 ? base.settings.gfn.rho : 0.5;
  const DmuVariant on_variant =
      base.settings.dmu.variant == DmuVariant::off ? DmuVariant::both_buffers : base.settings.dmu.variant;
  return {{"gflowpo-on-X", 1.0, DmuVariant::off},
          {"gflowpo-off-X", off_rho, DmuVariant::off},
          {"gflowpo-on-O", 1.0, on_variant},
          {"gflowpo-off-O", off_rho, on_variant}};
}

inline RunConfig with_variant(RunConfig cfg, const AblationVariant& v, std::uint64_t seed) {
  cfg.settings.gfn.rho = v.rho;
  cfg.settings.dmu.variant = v.dmu;
  cfg.seed = seed;
  cfg.resolved["gfn"]["rho"] = v.rho;
  cfg.resolved["dmu"]["variant"] = to_string(v.dmu);
  cfg.resolved["seed"] = seed;
  return cfg;
}

struct AblationRow {
  std::string label;
  std::vector<double> best_found;  // one per seed
  double mean = 0.0;
  double stddev = 0.0;
};

inline AblationRow summarize(std::string label, std::vector<double> values) {
  AblationRow row{std::move(label), std::move(values), 0.0, 0.0};
  if (row.best_found.empty()) return row;
  for (double v : row.best_found) row.mean += v;
  row.mean /= static_cast<double>(row.best_found.size());
  if (row.best_found.size() > 1) {
    double ss = 0.0;
    for (double v : row.best_found) ss += (v - row.mean) * (v - row.mean);
    row.stddev = std::sqrt(ss / static_cast<double>(row.best_found.size() - 1));
  }
  return row;
}

inline void write_ablation_table(const fs::path& path, const std::vector<AblationRow>& rows) {
  std::ofstream out(path);
  out << "variant\tseeds\tmean_best_A\tstd_best_A\n";
  for (const auto& r : rows)
    out << r.label << '\t' << r.best_found.size() << '\t' << detail::format_real(r.mean) << '\t'
        << detail::format_real(r.stddev) << '\n';
}

// --- report ---------------------------------------------------------------

struct ReportOutputs {
  fs::path tv_series;
  fs::path best_series;
  fs::path oracle_series;
  std::size_t runs = 0;
};

/**
 * Scans `dir` recursively for run directories (metrics.jsonl + summary.json)
 * and writes three tab-separated series keyed by variant label and seed:
 * step vs TV distance, step vs best Q score, and oracle calls vs best-found A.
 */
inline ReportOutputs write_report(const fs::path& dir, const fs::path& out_dir) {
  if (!fs::is_directory(dir)) throw MissingArtifacts("artifacts directory '" + dir.string() + "' does not exist");
  std::vector<fs::path> runs;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file() && e.path().filename() == "metrics.jsonl" &&
        fs::exists(e.path().parent_path() / "summary.json"))
      runs.push_back(e.path().parent_path());
  if (runs.empty()) throw MissingArtifacts("no run artifacts under '" + dir.string() + "'");
  std::sort(runs.begin(), runs.end());

  fs::create_directories(out_dir);
  ReportOutputs o{out_dir / "series_tv.tsv", out_dir / "series_best_by_step.tsv",
                  out_dir / "series_best_by_oracle_calls.tsv", runs.size()};
  std::ofstream tv(o.tv_series), best(o.best_series), calls(o.oracle_series);
  tv << "variant\tseed\tstep\ttv_to_posterior\n";
  best << "variant\tseed\tstep\tbest_Q_score\n";
  calls << "variant\tseed\toracle_calls\tbest_found_A\n";

  for (const auto& run_dir : runs) {
    std::ifstream sin(run_dir / "summary.json");
    json summary;
    try {
      summary = json::parse(sin);
    } catch (const json::exception&) {
      throw MissingArtifacts("unreadable summary in " + run_dir.string());
    }
    const std::string label = summary.value("variant", std::string("unknown"));
    const std::string seed = summary.contains("seed") ? summary.at("seed").dump() : "?";
    std::ifstream min(run_dir / "metrics.jsonl");
    std::string line;
    while (std::getline(min, line)) {
      if (line.empty()) continue;
      const json m = json::parse(line);
      if (!m["tv_to_posterior"].is_null())
        tv << label << '\t' << seed << '\t' << m["step"] << '\t' << detail::format_real(m["tv_to_posterior"].get<double>()) << '\n';
      if (!m["best_Q_score"].is_null())
        best << label << '\t' << seed << '\t' << m["step"] << '\t' << detail::format_real(m["best_Q_score"].get<double>()) << '\n';
    }
    if (summary.contains("best_found_trace")) {
      const auto& trace = summary.at("best_found_trace");
      for (std::size_t i = 0; i < trace.size(); ++i)
        calls << label << '\t' << seed << '\t' << (i + 1) << '\t' << detail::format_real(trace[i].get<double>()) << '\n';
    }
  }
  return o;
}

}  // namespace gflowpo
