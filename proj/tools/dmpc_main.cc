// Copyright 2026 The diffmpc Authors
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

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "diffmpc/experiment.h"

namespace {

// --out wins, then DMPC_OUT_DIR, then the config's output_dir.
std::optional<std::filesystem::path> resolve_out_dir(
    const std::string& flag, const std::optional<std::string>& from_config) {
  if (!flag.empty()) return flag;
  if (const char* env = std::getenv("DMPC_OUT_DIR"); env && *env) return env;
  if (from_config) return *from_config;
  return std::nullopt;
}

int run_command(const std::string& config_path, const std::string& out_flag,
                const std::optional<std::uint64_t>& seed) {
  diffmpc::ExperimentConfig config = diffmpc::load_config(config_path);
  if (seed) config.seed = *seed;
  const auto out = resolve_out_dir(out_flag, config.output_dir);
  if (!out) {
    std::cerr << "error: no output directory (use --out or DMPC_OUT_DIR)\n";
    return 2;
  }
  const diffmpc::RunOutcome outcome = diffmpc::run_experiment(config, *out);
  if (!outcome.ok) {
    std::cerr << "error: " << outcome.message << "\n";
    return 1;
  }
  std::cout << "results written to " << out->string() << "\n";
  return 0;
}

int gradcheck_command(const std::string& env, double eps, int instances,
                      std::uint64_t seed, const std::string& out_flag) {
  diffmpc::GradcheckOptions options;
  options.env = diffmpc::env_kind_from_name(env);
  options.eps = eps;
  options.instances = instances;
  options.max_candidates = std::max(50, 5 * instances);
  options.seed = seed;
  const diffmpc::GradcheckReport report = diffmpc::run_gradcheck(options);
  const std::string text = diffmpc::gradcheck_to_json(report);
  std::cout << text;
  if (const auto out = resolve_out_dir(out_flag, std::nullopt)) {
    std::filesystem::create_directories(*out);
    std::ofstream(*out / "gradcheck.json", std::ios::binary) << text;
  }
  return report.passed() ? 0 : 1;
}

int bench_command(const std::string& env, const std::vector<int>& caps,
                  const std::vector<int>& horizons, int trials, int warmup,
                  std::uint64_t seed, const std::string& out_flag) {
  diffmpc::BenchOptions options;
  options.env = diffmpc::env_kind_from_name(env);
  options.caps = caps;
  options.horizons = horizons;
  options.trials = trials;
  options.warmup = warmup;
  options.seed = seed;
  const auto rows = diffmpc::run_bench(options);
  diffmpc::write_bench_csv(std::cout, rows);
  if (const auto out = resolve_out_dir(out_flag, std::nullopt)) {
    std::filesystem::create_directories(*out);
    std::ofstream csv(*out / "bench.csv", std::ios::binary);
    diffmpc::write_bench_csv(csv, rows);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Differentiable MPC experiments"};
  app.require_subcommand(1);

  std::string config_path, out_dir;
  std::optional<std::uint64_t> seed;
  CLI::App* run = app.add_subcommand("run", "Run an experiment from a JSON config");
  run->add_option("--config", config_path, "Experiment config file")
      ->required()
      ->check(CLI::ExistingFile);
  run->add_option("--out", out_dir, "Output directory");
  run->add_option("--seed", seed, "Override the config seed");

  std::string gc_env = "pendulum";
  double eps = 1e-5;
  int instances = 10;
  std::uint64_t gc_seed = 0;
  std::string gc_out;
  CLI::App* gc = app.add_subcommand("gradcheck", "Finite-difference gradient check");
  gc->add_option("--env", gc_env, "Environment")
      ->check(CLI::IsMember({"pendulum", "cartpole", "lqr"}));
  gc->add_option("--eps", eps, "Relative finite-difference step")
      ->check(CLI::PositiveNumber);
  gc->add_option("--instances", instances, "Instances to check")
      ->check(CLI::PositiveNumber);
  gc->add_option("--seed", gc_seed, "Random seed");
  gc->add_option("--out", gc_out, "Also write gradcheck.json here");

  std::string bench_env = "pendulum";
  std::vector<int> caps{10, 50, 100};
  std::vector<int> horizons{20};
  int trials = 10, warmup = 1;
  std::uint64_t bench_seed = 0;
  std::string bench_out;
  CLI::App* bench = app.add_subcommand("bench", "Forward/backward timing benchmark");
  bench->add_option("--env", bench_env, "Environment")
      ->check(CLI::IsMember({"pendulum", "cartpole", "lqr"}));
  bench->add_option("--caps", caps, "Forward iteration caps")
      ->delimiter(',')
      ->check(CLI::PositiveNumber);
  bench->add_option("--horizons", horizons, "Horizons to sweep")
      ->delimiter(',')
      ->check(CLI::PositiveNumber);
  bench->add_option("--trials", trials, "Measured trials")->check(CLI::PositiveNumber);
  bench->add_option("--warmup", warmup, "Discarded warmup runs")
      ->check(CLI::NonNegativeNumber);
  bench->add_option("--seed", bench_seed, "Random seed");
  bench->add_option("--out", bench_out, "Also write bench.csv here");

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) return run_command(config_path, out_dir, seed);
    if (gc->parsed()) return gradcheck_command(gc_env, eps, instances, gc_seed, gc_out);
    if (bench->parsed()) {
      return bench_command(bench_env, caps, horizons, trials, warmup, bench_seed,
                           bench_out);
    }
  } catch (const diffmpc::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
