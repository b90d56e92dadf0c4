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

#ifndef DIFFMPC_EXPERIMENT_H_
#define DIFFMPC_EXPERIMENT_H_

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "diffmpc/envs.h"
#include "diffmpc/imitation.h"

namespace diffmpc {

inline constexpr int kSchemaVersion = 1;

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Environment section. Unset optionals take the environment defaults;
// which physical keys are accepted depends on `name`.
struct EnvConfig {
  std::string name = "pendulum";
  std::optional<int> horizon;
  std::optional<double> u_bound;  // symmetric control box [-u_bound, u_bound]
  std::optional<std::vector<double>> cost_weights;
  std::optional<std::vector<double>> cost_goal;
  // pendulum
  std::optional<double> mass;
  std::optional<double> damping;
  std::optional<double> wind;
  // cartpole
  std::optional<double> cart_mass;
  std::optional<double> pole_mass;
  // pendulum and cartpole
  std::optional<double> length;
  std::optional<double> gravity;
  std::optional<double> dt;
  // linear: expert A = I + a_scale N(0, 1), B = b_scale N(0, 1)
  std::optional<int> n_state;
  std::optional<int> n_ctrl;
  std::optional<double> a_scale;
  std::optional<double> b_scale;

  bool operator==(const EnvConfig&) const = default;
};

// How each trial's learner is initialized from the expert.
struct LearnerConfig {
  // "perturb": every dynamics parameter scaled by U[1 - spread, 1 + spread].
  // "random": linear only; A, B drawn like the expert's.
  std::string init = "perturb";
  double spread = 0.5;
  // Cost methods: weights scaled by U[1 - cost_spread, 1 + cost_spread],
  // goal shifted by N(0, goal_noise^2).
  double cost_spread = 0.5;
  double goal_noise = 0.2;

  bool operator==(const LearnerConfig&) const = default;
};

struct DatasetConfig {
  int train = 100;
  int val = 100;
  int test = 100;
  std::optional<std::uint64_t> seed;  // defaults to the experiment seed

  bool operator==(const DatasetConfig&) const = default;
};

struct TrainSection {
  std::string method = "mpc.dx";
  std::optional<std::string> loss;  // "tau" | "controls"; default per method
  std::string optimizer = "rmsprop";
  double learning_rate = 1e-2;
  double decay = 0.5;
  int batch_size = 32;
  int epochs = 50;
  int alternation_period = 10;
  bool evaluate_every_epoch = true;

  bool operator==(const TrainSection&) const = default;
};

struct SolverConfig {
  int max_iters = 50;
  double convergence_tol = 1e-7;

  bool operator==(const SolverConfig&) const = default;
};

struct BenchConfig {
  std::vector<int> caps{10, 50, 100};
  std::vector<int> horizons{20};
  int trials = 10;
  int warmup = 1;

  bool operator==(const BenchConfig&) const = default;
};

struct GradcheckConfig {
  double eps = 1e-5;
  int instances = 10;
  int max_candidates = 50;
  double weak_tol = 1e-4;
  double tolerance = 1e-3;

  bool operator==(const GradcheckConfig&) const = default;
};

struct ExperimentConfig {
  // lqr-imitate | mpc-imitate | sysid-compare | bench-backward | gradcheck
  std::string experiment;
  std::uint64_t seed = 0;
  std::optional<std::string> output_dir;
  int trials = 1;
  EnvConfig env;
  LearnerConfig learner;
  DatasetConfig dataset;
  TrainSection train;
  // sysid-compare only: settings of the sysid arm (defaults to `train`).
  std::optional<TrainSection> sysid_train;
  SolverConfig solver;
  BenchConfig bench;
  GradcheckConfig gradcheck;

  bool operator==(const ExperimentConfig&) const = default;
};

// Strict JSON parsing: unknown keys, wrong types and out-of-range values
// raise ConfigError naming the offending key path.
ExperimentConfig parse_config(const std::string& json_text);
ExperimentConfig load_config(const std::filesystem::path& path);
// Canonical JSON form; parse_config(config_to_json(c)) == c.
std::string config_to_json(const ExperimentConfig& config);

// Expert environment described by the env section (linear A, B drawn from
// `seed`). sysid-compare experts get damping 0.1 and wind 0.5 unless set.
Env build_expert(const ExperimentConfig& config);
// Learner model class of the expert: same cost and bounds, pendulum
// damping and wind removed.
Env learner_class(const Env& expert);
// Initial learner for one trial.
Env initial_learner(const ExperimentConfig& config, const Env& expert,
                    Method method, std::uint64_t trial_seed);
TrainConfig train_config(const ExperimentConfig& config, std::uint64_t seed);

struct GradcheckOptions {
  EnvKind env = EnvKind::kPendulum;
  double eps = 1e-5;
  int instances = 10;
  int max_candidates = 50;
  double weak_tol = 1e-4;
  double tolerance = 1e-3;
  std::uint64_t seed = 0;
  SolverSettings solver{200, 1e-11, {}};
};

struct GradcheckInstance {
  int index = 0;
  // Norm-wise relative error per parameter group.
  double dynamics_error = 0.0;
  double weights_error = 0.0;
  double goal_error = 0.0;
  double max_error() const;
};

struct GradcheckReport {
  std::string env;
  double eps = 0.0;
  double tolerance = 0.0;
  std::vector<GradcheckInstance> instances;
  int skipped_weakly_active = 0;
  int skipped_unconverged = 0;
  double max_relative_error = 0.0;
  bool passed() const;
};

// Compares the fixed-point gradient of a random linear functional of
// tau_{1:T} with central differences through warm-started solves.
GradcheckReport run_gradcheck(const GradcheckOptions& options);
std::string gradcheck_to_json(const GradcheckReport& report);

struct BenchOptions {
  EnvKind env = EnvKind::kPendulum;
  std::vector<int> caps{10, 50, 100};
  std::vector<int> horizons{20};
  int trials = 10;
  int warmup = 1;
  std::uint64_t seed = 0;
};

struct BenchRow {
  std::string env;
  int n_state = 0;
  int n_ctrl = 0;
  int horizon = 0;
  int cap = 0;
  int trials = 0;
  double forward_mean_s = 0.0;
  double forward_std_s = 0.0;
  double backward_mean_s = 0.0;
  double backward_std_s = 0.0;
};

// Forward solves run exactly `cap` iterations; the backward pass is timed
// on the resulting trajectory. Monotonic clock, warmup discarded.
std::vector<BenchRow> run_bench(const BenchOptions& options);
void write_bench_csv(std::ostream& os, const std::vector<BenchRow>& rows);

struct RunOutcome {
  bool ok = true;
  std::string message;
};

using SolveObserver = std::function<void(const MpcProblem&, const FixedPoint&)>;

// Runs one experiment and writes its results bundle into out_dir:
// config.json, one CSV per trained model, summary.json. `observer` sees
// every controller solve of dataset generation and training.
RunOutcome run_experiment(const ExperimentConfig& config,
                          const std::filesystem::path& out_dir,
                          const SolveObserver& observer = {});

// Header and row formatting of the per-epoch learning-curve CSV.
std::string epoch_csv_header();
std::string epoch_csv_row(const EpochRecord& r);

}  // namespace diffmpc

#endif  // DIFFMPC_EXPERIMENT_H_
