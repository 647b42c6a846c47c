// Copyright 2026 The lagdyna Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Experiment plumbing shared by the CLI and the acceptance harness: running
// one variant over several seeds, writing metrics/metadata/checkpoints, and
// reading metric files back for the steps-to-threshold comparison.
//
// Layout under the output directory, per variant:
//
//   <out>/<variant>/seed_<s>.csv          one seed's evaluation curve
//   <out>/<variant>/seed_<s>.log          gate and training events
//   <out>/<variant>/seed_<s>.<role>.ckpt  policy, critic and (MBRL) model
//   <out>/<variant>/metrics.csv           all seeds, written after the runs
//   <out>/<variant>/metadata.txt          hash, resolved config, run counters

#pragma once

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "lagdyna/checkpoint.hpp"
#include "lagdyna/config.hpp"
#include "lagdyna/dyna.hpp"
#include "lagdyna/errors.hpp"

namespace lagdyna {

class AlignmentError : public Error {
 public:
  using Error::Error;
};

inline constexpr const char* kMetricsHeader = "variant,seed,env_steps,avg_return";

/// Shortest decimal text that reads back to exactly `v`.
inline std::string exact_decimal(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

inline void write_metrics_rows(std::ostream& os, const std::string& variant, std::uint64_t seed,
                               const std::vector<EvalPoint>& curve) {
  for (const auto& p : curve)
    os << variant << ',' << seed << ',' << p.env_steps << ',' << exact_decimal(p.avg_return) << '\n';
}

inline void write_metrics_csv(std::ostream& os, const std::string& hash, const std::string& variant,
                              std::uint64_t seed, const std::vector<EvalPoint>& curve) {
  os << "# config_hash=" << hash << '\n' << kMetricsHeader << '\n';
  write_metrics_rows(os, variant, seed, curve);
}

struct SeedOutcome {
  std::uint64_t seed = 0;
  RunReport report;
};

struct TrainResult {
  std::filesystem::path dir;
  std::vector<SeedOutcome> outcomes;
  bool any_aborted() const {
    return std::any_of(outcomes.begin(), outcomes.end(), [](const auto& o) { return o.report.aborted; });
  }
};

/// Parallel seed cap: LAGDYNA_THREADS if set to a positive integer, else the
/// hardware concurrency.
inline unsigned seed_thread_cap() {
  unsigned cap = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("LAGDYNA_THREADS")) {
    unsigned v = 0;
    const std::string s(env);
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec == std::errc() && res.ptr == s.data() + s.size() && v > 0) cap = v;
  }
  return cap;
}

namespace detail {

inline void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot open '" + path.string() + "' for writing");
  os << text;
  if (!os) throw Error("write to '" + path.string() + "' failed");
}

inline void write_seed_outputs(const std::filesystem::path& dir, const std::string& hash,
                               const std::string& variant, const SeedOutcome& o) {
  const std::string stem = "seed_" + std::to_string(o.seed);
  std::ostringstream csv;
  write_metrics_csv(csv, hash, variant, o.seed, o.report.curve);
  write_file(dir / (stem + ".csv"), csv.str());

  std::ostringstream log;
  for (const auto& line : o.report.log) log << line << '\n';
  if (o.report.aborted) log << "aborted: " << o.report.error << '\n';
  write_file(dir / (stem + ".log"), log.str());

  save_checkpoint((dir / (stem + ".policy.ckpt")).string(),
                  {CheckpointRole::kPolicy, o.report.policy.mean_net, {o.report.policy.log_std}});
  save_checkpoint((dir / (stem + ".critic.ckpt")).string(),
                  {CheckpointRole::kCritic, o.report.critic.q_net, {}});
  if (o.report.model)
    save_checkpoint((dir / (stem + ".model.ckpt")).string(), {CheckpointRole::kLagrangian, *o.report.model, {}});
}

inline std::string metadata_text(const ExperimentConfig& cfg, const std::string& hash,
                                 const std::vector<SeedOutcome>& outcomes) {
  std::ostringstream os;
  os << "config_hash=" << hash << '\n' << resolved_dump(cfg);
  for (const auto& o : outcomes) {
    const std::string p = "seed." + std::to_string(o.seed) + ".";
    const auto& r = o.report;
    os << p << "status=" << (r.aborted ? "aborted" : "ok") << '\n';
    if (r.aborted) os << p << "error=" << r.error << '\n';
    os << p << "env_steps=" << r.env_steps << '\n'
       << p << "agent_updates=" << r.agent_updates << '\n'
       << p << "model_updates=" << r.model_updates << '\n'
       << p << "model_transitions=" << r.model_transitions << '\n'
       << p << "rollout_blowups=" << r.rollout_blowups << '\n'
       << p << "physical_updates=" << r.physical_updates << '\n';
    if (r.last_data_loss) os << p << "last_data_loss=" << exact_decimal(*r.last_data_loss) << '\n';
  }
  return os.str();
}

}  // namespace detail

/// Runs every seed of `cfg` (at most `threads` at once), writes the per-seed
/// files as each finishes, then the merged CSV and metadata from this thread.
inline TrainResult train_variant(const ExperimentConfig& cfg, unsigned threads) {
  if (cfg.seeds.empty()) throw PreconditionError("seed list is empty");
  const std::string variant = to_string(cfg.variant);
  const std::string hash = config_hash(cfg);
  TrainResult result;
  result.dir = std::filesystem::path(cfg.out_dir) / variant;
  std::filesystem::create_directories(result.dir);
  result.outcomes.resize(cfg.seeds.size());

  std::atomic<std::size_t> next{0};
  std::vector<std::string> io_errors(cfg.seeds.size());
  auto worker = [&]() {
    for (std::size_t i = next++; i < cfg.seeds.size(); i = next++) {
      DynaConfig d = cfg.dyna;
      d.seed = cfg.seeds[i];
      SeedOutcome& o = result.outcomes[i];
      o.seed = cfg.seeds[i];
      o.report = run(d);
      try {
        detail::write_seed_outputs(result.dir, hash, variant, o);
      } catch (const std::exception& e) {
        io_errors[i] = e.what();
      }
    }
  };
  const unsigned n = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(cfg.seeds.size())));
  if (n == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (unsigned t = 0; t < n; ++t) pool.emplace_back(worker);
  }
  for (const auto& e : io_errors)
    if (!e.empty()) throw Error(e);

  std::ostringstream merged;
  merged << "# config_hash=" << hash << '\n' << kMetricsHeader << '\n';
  for (const auto& o : result.outcomes) write_metrics_rows(merged, variant, o.seed, o.report.curve);
  detail::write_file(result.dir / "metrics.csv", merged.str());
  detail::write_file(result.dir / "metadata.txt", detail::metadata_text(cfg, hash, result.outcomes));
  return result;
}

// --- comparison ---------------------------------------------------------------

struct MetricsTable {
  std::string config_hash;
  /// variant -> seed -> curve
  std::map<std::string, std::map<std::uint64_t, std::vector<EvalPoint>>> curves;
};

/// Reads a metrics CSV (comment lines, then the fixed header, then rows) and
/// adds its rows to `table`.
inline void read_metrics_csv(std::istream& is, MetricsTable& table, const std::string& origin) {
  std::string line;
  bool header = false;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    if (line.front() == '#') {
      const std::string key = "# config_hash=";
      if (line.rfind(key, 0) == 0 && table.config_hash.empty()) table.config_hash = line.substr(key.size());
      continue;
    }
    if (!header) {
      if (line != kMetricsHeader) throw Error(origin + ": unexpected header '" + line + "'");
      header = true;
      continue;
    }
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() != 4) throw Error(origin + ":" + std::to_string(lineno) + ": expected 4 columns");
    try {
      const auto seed = detail::parse_number<std::uint64_t>(cells[1]);
      const auto steps = detail::parse_number<long>(cells[2]);
      const auto ret = detail::parse_number<double>(cells[3]);
      table.curves[cells[0]][seed].push_back({steps, ret});
    } catch (const Error& e) {
      throw Error(origin + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  if (!header) throw Error(origin + ": missing header row");
}

/// Accepts a run directory (reads its metrics.csv) or a CSV path.
inline MetricsTable load_metrics(const std::vector<std::string>& paths) {
  MetricsTable table;
  for (const auto& p : paths) {
    std::filesystem::path file(p);
    if (std::filesystem::is_directory(file)) file /= "metrics.csv";
    std::ifstream is(file);
    if (!is) throw Error("cannot open '" + file.string() + "'");
    MetricsTable one;
    read_metrics_csv(is, one, file.string());
    for (auto& [variant, seeds] : one.curves)
      for (auto& [seed, curve] : seeds) {
        if (table.curves[variant].count(seed))
          throw Error("seed " + std::to_string(seed) + " of " + variant + " appears twice");
        table.curves[variant][seed] = std::move(curve);
      }
    if (table.config_hash.empty()) table.config_hash = one.config_hash;
  }
  return table;
}

struct VariantSummary {
  std::string variant;
  std::size_t seeds = 0;
  std::optional<long> steps_to_threshold;
  long final_env_steps = 0;
  double final_median = 0, final_min = 0, final_max = 0;
  /// Seed-median curve over the steps every seed reached.
  std::vector<EvalPoint> median_curve;
};

inline double median(std::vector<double> v) {
  if (v.empty()) throw PreconditionError("median of an empty set");
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

/// Per variant, the first env-step count at which the seed-median return is
/// at least `threshold`, plus final-return statistics. Every curve must be
/// sampled on the same cadence: points at c, 2c, 3c, ...
inline std::vector<VariantSummary> compare_runs(const MetricsTable& table, double threshold) {
  std::optional<long> cadence;
  for (const auto& [variant, seeds] : table.curves)
    for (const auto& [seed, curve] : seeds) {
      if (curve.empty()) continue;
      const long c = curve.front().env_steps;
      for (std::size_t i = 0; i < curve.size(); ++i)
        if (curve[i].env_steps != c * static_cast<long>(i + 1))
          throw AlignmentError(variant + " seed " + std::to_string(seed) +
                               ": evaluation points are not evenly spaced from the first");
      if (cadence && *cadence != c)
        throw AlignmentError("evaluation cadence " + std::to_string(c) + " (" + variant + " seed " +
                             std::to_string(seed) + ") differs from " + std::to_string(*cadence));
      cadence = c;
    }

  std::vector<VariantSummary> out;
  for (const auto& [variant, seeds] : table.curves) {
    VariantSummary s;
    s.variant = variant;
    s.seeds = seeds.size();
    std::size_t common = std::numeric_limits<std::size_t>::max();
    for (const auto& [seed, curve] : seeds) common = std::min(common, curve.size());
    for (std::size_t i = 0; i < common; ++i) {
      std::vector<double> at;
      for (const auto& [seed, curve] : seeds) at.push_back(curve[i].avg_return);
      const long step = seeds.begin()->second[i].env_steps;
      s.median_curve.push_back({step, median(at)});
      if (!s.steps_to_threshold && s.median_curve.back().avg_return >= threshold) s.steps_to_threshold = step;
    }
    if (common > 0) {
      std::vector<double> finals;
      for (const auto& [seed, curve] : seeds) finals.push_back(curve[common - 1].avg_return);
      s.final_env_steps = s.median_curve.back().env_steps;
      s.final_median = median(finals);
      s.final_min = *std::min_element(finals.begin(), finals.end());
      s.final_max = *std::max_element(finals.begin(), finals.end());
    }
    out.push_back(std::move(s));
  }
  return out;
}

inline std::string steps_text(const std::optional<long>& steps) {
  return steps ? std::to_string(*steps) : "not reached";
}

inline void write_summary_csv(std::ostream& os, const std::vector<VariantSummary>& rows, double threshold) {
  os << "# threshold=" << exact_decimal(threshold) << '\n'
     << "variant,seeds,steps_to_threshold,final_env_steps,final_return_median,final_return_min,"
        "final_return_max\n";
  for (const auto& r : rows)
    os << r.variant << ',' << r.seeds << ',' << steps_text(r.steps_to_threshold) << ',' << r.final_env_steps
       << ',' << exact_decimal(r.final_median) << ',' << exact_decimal(r.final_min) << ','
       << exact_decimal(r.final_max) << '\n';
}

inline void write_summary_table(std::ostream& os, const std::vector<VariantSummary>& rows, double threshold) {
  std::ostringstream title;
  title << "steps to " << threshold;
  os << std::left << std::setw(10) << "variant" << std::setw(7) << "seeds" << std::setw(16) << title.str()
     << std::setw(13) << "final step" << "final return (median [min, max])\n";
  for (const auto& r : rows) {
    std::ostringstream fin;
    fin << std::fixed << std::setprecision(1) << r.final_median << " [" << r.final_min << ", " << r.final_max
        << "]";
    os << std::left << std::setw(10) << r.variant << std::setw(7) << r.seeds << std::setw(16)
       << steps_text(r.steps_to_threshold) << std::setw(13) << r.final_env_steps << fin.str() << '\n';
  }
}

}  // namespace lagdyna
