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

// lagdyna train --config PATH [--variant V] [--seeds a,b,c] [--out DIR]
// lagdyna compare DIR... [--threshold T] [--csv PATH]
// lagdyna check
//
// Exit codes: 0 success, 1 runtime failure (aborted run, failed check, bad
// metrics), 2 invalid configuration or usage.

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "lagdyna/checks.hpp"
#include "lagdyna/config.hpp"
#include "lagdyna/experiment.hpp"

namespace {

using namespace lagdyna;

int cmd_train(const std::string& path, const std::optional<std::string>& variant,
              const std::optional<std::string>& seeds, const std::optional<std::string>& out) {
  ExperimentConfig cfg;
  try {
    std::ifstream is(path);
    if (!is) throw ConfigError(0, "cannot open config file '" + path + "'");
    ConfigDocument doc = parse_config_text(is);
    // Command-line overrides replace the file's values before binding, so
    // required-field and validation rules apply to the merged result.
    if (variant) doc.entries["experiment.variant"] = {*variant, 0};
    if (seeds) doc.entries["experiment.seeds"] = {*seeds, 0};
    if (out) doc.entries["experiment.out"] = {*out, 0};
    cfg = bind_config(doc);
  } catch (const Error& e) {
    std::cerr << path << ": " << e.what() << '\n';
    return 2;
  }

  const unsigned threads = seed_thread_cap();
  std::cout << "training " << to_string(cfg.variant) << " on " << cfg.seeds.size() << " seed(s), up to "
            << threads << " in parallel, config hash " << config_hash(cfg) << '\n';
  try {
    const TrainResult res = train_variant(cfg, threads);
    for (const auto& o : res.outcomes) {
      std::cout << "seed " << o.seed << ": ";
      if (o.report.aborted) {
        std::cout << "aborted (" << o.report.error << ")\n";
      } else {
        std::cout << o.report.env_steps << " env steps";
        if (!o.report.curve.empty()) std::cout << ", final return " << o.report.curve.back().avg_return;
        std::cout << '\n';
      }
    }
    std::cout << "outputs in " << res.dir.string() << '\n';
    if (res.any_aborted()) {
      std::cerr << "one or more runs aborted; partial outputs were written\n";
      return 1;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

int cmd_compare(const std::vector<std::string>& dirs, double threshold, const std::optional<std::string>& csv) {
  try {
    const auto rows = compare_runs(load_metrics(dirs), threshold);
    write_summary_table(std::cout, rows, threshold);
    if (csv) {
      std::ofstream os(*csv);
      if (!os) throw Error("cannot open '" + *csv + "' for writing");
      write_summary_csv(os, rows, threshold);
    } else {
      std::cout << '\n';
      write_summary_csv(std::cout, rows, threshold);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

int cmd_check() {
  bool all = true;
  for (const auto& r : checks::run_all()) {
    std::cout << (r.passed ? "PASS " : "FAIL ") << r.name << ": " << r.detail << '\n';
    all = all && r.passed;
  }
  return all ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Lagrangian-network Dyna experiments on the pendulum"};
  app.require_subcommand(1);

  auto* train = app.add_subcommand("train", "Run one variant over a list of seeds");
  std::string config_path;
  std::optional<std::string> variant, seeds, out;
  train->add_option("--config", config_path, "Experiment config file")->required();
  train->add_option("--variant", variant, "lnn-adam, lnn-ekf or mfrl (overrides the file)");
  train->add_option("--seeds", seeds, "Comma-separated seed list (overrides the file)");
  train->add_option("--out", out, "Output directory (overrides the file)");

  auto* compare = app.add_subcommand("compare", "Steps-to-threshold summary of finished runs");
  std::vector<std::string> dirs;
  double threshold = -300.0;
  std::optional<std::string> csv;
  compare->add_option("dirs", dirs, "Run directories or metrics CSV files")->required();
  compare->add_option("--threshold", threshold, "Return level to reach")->capture_default_str();
  compare->add_option("--csv", csv, "Write the summary CSV here instead of stdout");

  auto* check = app.add_subcommand("check", "Run the fast invariant suite");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  if (*train) return cmd_train(config_path, variant, seeds, out);
  if (*compare) return cmd_compare(dirs, threshold, csv);
  if (*check) return cmd_check();
  return 2;
}
