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

#include <atomic>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "gflowpo/config.hpp"
#include "gflowpo/experiment.hpp"
#include "gflowpo/selftest.hpp"

#ifdef GFLOWPO_WITH_LMCLIENT
#include "gflowpo/lm/search.hpp"
#include "gflowpo/lm/selftest.hpp"
#endif

namespace fs = std::filesystem;
using namespace gflowpo;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitEndpoint = 3;
constexpr int kExitSelftest = 4;

struct CommonOptions {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::vector<std::string> overrides;
};

RunConfig load_config(const CommonOptions& o) {
  json root = load_json_file(o.config_path);
  for (const auto& s : o.overrides) apply_override(root, s);
  if (o.seed) root["seed"] = *o.seed;
  if (!o.out.empty()) root["output_dir"] = o.out;
  return parse_run_config(root);
}

std::vector<std::uint64_t> parse_seeds(const std::string& text) {
  std::vector<std::uint64_t> seeds;
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto comma = text.find(',', start);
    const std::string part = text.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
    try {
      if (const auto dots = part.find(".."); dots != std::string::npos) {
        const auto lo = std::stoull(part.substr(0, dots)), hi = std::stoull(part.substr(dots + 2));
        if (hi < lo) throw ConfigError("--seeds: empty range '" + part + "'");
        for (auto s = lo; s <= hi; ++s) seeds.push_back(s);
      } else {
        seeds.push_back(std::stoull(part));
      }
    } catch (const std::logic_error&) {
      throw ConfigError("--seeds: cannot parse '" + part + "'");
    }
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return seeds;
}

int cmd_run(const CommonOptions& o) {
  const RunConfig cfg = load_config(o);
  const fs::path dir = cfg.output_dir;
  if (cfg.mode == RunMode::lm) {
#ifdef GFLOWPO_WITH_LMCLIENT
    const auto dataset = lm::load_dataset(cfg.lm.dataset_path);
    lm::LmEndpointConfig ec{cfg.lm.base_url,  cfg.lm.model_name,      cfg.lm.api_key_env_name,
                            cfg.lm.max_parallel_requests, cfg.lm.retry_limit, cfg.lm.timeout_seconds,
                            cfg.lm.retry_base_delay_ms};
    fs::create_directories(dir);
    const char* key = std::getenv(ec.api_key_env_name.c_str());
    auto transcript = std::make_shared<lm::Transcript>((dir / cfg.lm.transcript).string(), key ? key : "");
    auto client = lm::CompletionsClient::from_environment(ec, transcript, *cfg.seed);
    const auto result = lm::lm_search(cfg, client, dataset, [](const lm::SearchMetrics& m) {
      std::fprintf(stderr, "step %llu oracle_calls %llu best %s\n", static_cast<unsigned long long>(m.step),
                   static_cast<unsigned long long>(m.oracle_calls),
                   m.best_q_score ? std::to_string(*m.best_q_score).c_str() : "-");
    });
    lm::write_search_artifacts(dir, cfg, result);
    std::cout << "variant " << result.variant_label << " (frozen sampler, no parameter updates)\n";
    if (auto best = result.high_reward.best())
      std::cout << "best prompt " << json(best->sequence).dump() << " score " << best->correct_count << '\n';
    std::cout << "artifacts " << dir.string() << '\n';
    return 0;
#else
    throw ConfigError("mode: this build has no LM backend (configure with GFLOWPO_WITH_LMCLIENT=ON)");
#endif
  }
  const auto result = run_toy(cfg);
  const auto art = write_run_artifacts(dir, cfg, result);
  std::cout << "variant " << art.variant << '\n';
  if (art.best) std::cout << "best prompt " << to_string(art.best->sequence) << " score " << art.best->correct_count << '\n';
  std::cout << "artifacts " << dir.string() << '\n';
  return 0;
}

int cmd_ablation(const CommonOptions& o, const std::string& seed_spec, int jobs) {
  const RunConfig base = load_config(o);
  if (base.mode != RunMode::toy) throw ConfigError("mode: ablation runs in toy mode only");
  const auto seeds = seed_spec.empty() ? std::vector<std::uint64_t>{*base.seed} : parse_seeds(seed_spec);
  const auto grid = ablation_grid(base);
  const fs::path out = base.output_dir;

  struct Job {
    std::size_t variant;
    std::size_t seed_index;
  };
  std::vector<Job> work;
  for (std::size_t v = 0; v < grid.size(); ++v)
    for (std::size_t s = 0; s < seeds.size(); ++s) work.push_back({v, s});
  std::vector<std::vector<double>> best(grid.size(), std::vector<double>(seeds.size(), 0.0));

  std::atomic<std::size_t> next{0};
  std::mutex print_mu;
  std::exception_ptr failure;
  auto worker = [&] {
    for (std::size_t i = next++; i < work.size(); i = next++) {
      try {
        const auto& v = grid[work[i].variant];
        const std::uint64_t seed = seeds[work[i].seed_index];
        const RunConfig cfg = with_variant(base, v, seed);
        const auto result = run_toy(cfg);
        write_run_artifacts(out / v.label / ("seed-" + std::to_string(seed)), cfg, result);
        best[work[i].variant][work[i].seed_index] = result.state.best_found().value_or(0.0);
        std::lock_guard lock(print_mu);
        std::fprintf(stderr, "%s seed %llu best-found %.4g\n", v.label.c_str(), static_cast<unsigned long long>(seed),
                     best[work[i].variant][work[i].seed_index]);
      } catch (...) {
        std::lock_guard lock(print_mu);
        if (!failure) failure = std::current_exception();
        next = work.size();
      }
    }
  };
  std::vector<std::thread> pool;
  for (int t = 1; t < jobs; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);

  std::vector<AblationRow> rows;
  for (std::size_t v = 0; v < grid.size(); ++v) rows.push_back(summarize(grid[v].label, best[v]));
  write_ablation_table(out / "ablation.tsv", rows);
  std::printf("%-16s %6s %12s %12s\n", "variant", "seeds", "mean_best_A", "std_best_A");
  for (const auto& r : rows) std::printf("%-16s %6zu %12.4f %12.4f\n", r.label.c_str(), r.best_found.size(), r.mean, r.stddev);
  std::cout << "table " << (out / "ablation.tsv").string() << '\n';
  return 0;
}

int cmd_report(const std::string& dir, const std::string& out) {
  const auto o = write_report(dir, out.empty() ? dir : out);
  std::cout << o.runs << " runs\n" << o.tv_series.string() << '\n' << o.best_series.string() << '\n'
            << o.oracle_series.string() << '\n';
  return 0;
}

int cmd_selftest([[maybe_unused]] const std::string& golden) {
  auto results = selftest::run_core_criteria();
#ifdef GFLOWPO_WITH_LMCLIENT
  results.push_back(lm::selftest::lm_contract(golden));
#endif
  bool ok = true;
  for (const auto& r : results) {
    std::cout << selftest::format_line(r) << '\n';
    ok = ok && r.passed;
  }
#ifndef GFLOWPO_WITH_LMCLIENT
  std::cout << "[SKIP] criterion 10: lm client contract: built without the LM backend\n";
#endif
  return ok ? 0 : kExitSelftest;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"GFlowPO prompt-posterior engine"};
  app.require_subcommand(1);

  CommonOptions run_opts, abl_opts;
  auto add_common = [](CLI::App* sub, CommonOptions& o) {
    sub->add_option("--config", o.config_path, "JSON run configuration")->required()->check(CLI::ExistingFile);
    sub->add_option("--seed", o.seed, "override the configured seed");
    sub->add_option("--out", o.out, "output directory (overrides output_dir)");
    sub->add_option("--set", o.overrides, "override one key, section.key=value (repeatable)");
  };

  auto* run = app.add_subcommand("run", "train (toy) or search (lm) and write artifacts");
  add_common(run, run_opts);

  auto* ablation = app.add_subcommand("ablation", "on/off-policy x memory-update grid over seeds");
  add_common(ablation, abl_opts);
  std::string seed_spec;
  int jobs = 1;
  ablation->add_option("--seeds", seed_spec, "seed list, e.g. 1..20 or 1,4,9 (default: the config seed)");
  ablation->add_option("--jobs", jobs, "runs executed in parallel")->check(CLI::PositiveNumber);

  auto* report = app.add_subcommand("report", "plot-ready series from run artifacts");
  std::string report_dir, report_out;
  report->add_option("--dir", report_dir, "artifacts directory")->required();
  report->add_option("--out", report_out, "where series files go (default: --dir)");

  auto* self = app.add_subcommand("selftest", "run the acceptance checks");
  std::string golden = GFLOWPO_GOLDEN_META_PROMPT;
  self->add_option("--golden", golden, "golden meta-prompt file");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) return cmd_run(run_opts);
    if (*ablation) return cmd_ablation(abl_opts, seed_spec, jobs);
    if (*report) return cmd_report(report_dir, report_out);
    if (*self) return cmd_selftest(golden);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
#ifdef GFLOWPO_WITH_LMCLIENT
  } catch (const lm::EndpointError& e) {
    std::cerr << "endpoint error: " << e.what() << '\n';
    return kExitEndpoint;
  } catch (const lm::LogprobsUnsupported& e) {
    std::cerr << "endpoint error: " << e.what() << '\n';
    return kExitEndpoint;
  } catch (const lm::VerbalizerUnscoreable& e) {
    std::cerr << "endpoint error: " << e.what() << '\n';
    return kExitEndpoint;
#endif
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
