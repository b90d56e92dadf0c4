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

#ifndef DIFFMPC_IMITATION_H_
#define DIFFMPC_IMITATION_H_

#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "diffmpc/core.h"
#include "diffmpc/envs.h"
#include "diffmpc/mpc_diff.h"
#include "diffmpc/optim.h"

namespace diffmpc {

enum class Method { kSysId, kMpcDx, kMpcCost, kMpcCostDx, kLqrDx };

Method method_from_name(const std::string& name);
std::string method_name(Method method);
bool learns_dynamics(Method method);
bool learns_cost(Method method);

// What the imitation loss compares: the whole tau_{1:T} or u_{1:T} only.
enum class LossTarget { kTrajectory, kControls };

LossTarget loss_target_from_name(const std::string& name);
std::string loss_target_name(LossTarget target);

struct SolverSettings {
  int max_iters = 50;
  double convergence_tol = 1e-7;
  // Called after every controller solve made on behalf of a dataset or a
  // loss evaluation.
  std::function<void(const MpcProblem&, const FixedPoint&)> observer;
};

struct ImitationRecord {
  Vector x_init;
  Trajectory expert;
};

struct Transition {
  Vector x;
  Vector u;
  Vector x_next;
};

struct ImitationDataset {
  std::vector<ImitationRecord> train;
  std::vector<ImitationRecord> val;
  std::vector<ImitationRecord> test;
  std::uint64_t seed = 0;
};

// Samples initial states and keeps the expert's converged solutions from
// u_init = 0. Initial states whose expert solve fails to converge are
// redrawn; throws std::runtime_error after too many failures.
ImitationDataset generate_dataset(const Env& expert, int n_train, int n_val,
                                  int n_test, std::uint64_t seed,
                                  const SolverSettings& solver = {});

// One-step transitions (x_t, u_t, x_{t+1}) of every record.
std::vector<Transition> transitions_of(std::span<const ImitationRecord> records);

// Flat learner parameter vector [weights, goal, dynamics]; the goal cost
// contributes 2 n_tau entries and the dynamics dyn_params(env).
Vector pack_params(const Env& env);
Env unpack_params(const Env& base, const Vector& theta);
int num_cost_params(const Env& env);

MpcProblem learner_problem(const Env& env, const Vector& x_init,
                           const SolverSettings& solver);

struct LossEval {
  double loss = 0.0;
  Vector grad;  // over pack_params layout; empty without gradients
  int used = 0;
  int skipped = 0;  // learner solves that failed to converge
};

class NoConvergedSolves : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Mean over records of ||tau_hat - tau||^2 (or the control block only).
// With gradients, records whose learner solve did not converge are dropped
// and counted; if none remain NoConvergedSolves is thrown. Without
// gradients every record contributes the learner's returned trajectory.
LossEval imitation_loss(const Env& learner,
                        std::span<const ImitationRecord> records,
                        LossTarget target, bool with_grad,
                        const SolverSettings& solver = {},
                        const MpcBackwardOptions& backward = {});

// Mean over transitions of ||f_hat(x, u) - x'||^2, gradient over the
// dynamics block of pack_params (zero elsewhere).
LossEval sysid_loss(const Env& learner, std::span<const Transition> data,
                    bool with_grad);

// Mean squared difference of two flat parameter vectors.
double model_loss(const Vector& theta, const Vector& theta_hat);

struct TrainConfig {
  Method method = Method::kMpcDx;
  LossTarget loss_target = LossTarget::kControls;
  OptimizerConfig optimizer;
  int batch_size = 32;
  int epochs = 10;
  int alternation_period = 10;
  std::uint64_t seed = 0;
  SolverSettings solver;
  // Skip imitation-loss evaluation on val/test for sysid runs except at
  // the end (the selection criterion is then the sysid loss).
  bool evaluate_every_epoch = true;

  void validate(int train_size) const;
};

// One row of the learning curve, taken after the epoch's updates.
struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;  // mean of the method's batch objective
  double val_imitation = 0.0;
  double test_imitation = 0.0;
  double val_sysid = 0.0;
  double test_sysid = 0.0;
  double model_loss = 0.0;  // MSE of dynamics parameters against the expert
  int skipped = 0;
};

struct TrainResult {
  EpochRecord initial;  // evaluation of the initial learner (epoch 0)
  std::vector<EpochRecord> history;
  Vector initial_params;
  Vector final_params;
  Vector best_params;
  EpochRecord best_record;  // the row of best_epoch (initial if 0)
  int best_epoch = 0;
  double best_val = 0.0;
  long total_skipped = 0;
  bool aborted = false;
  std::string abort_reason;
};

// Mask over pack_params selecting what `method` updates during `epoch`
// (0-based): cost methods alternate weights and goal every
// alternation_period epochs, starting with the weights.
Vector update_mask(const Env& env, Method method, int epoch,
                   int alternation_period);

using EpochCallback = std::function<void(const EpochRecord&)>;

// Gradient-based training of `learner_init` against the expert's dataset.
// Selection uses the validation imitation loss, or the validation sysid
// loss for the sysid method. Non-finite losses or parameters abort the
// run with `aborted` set and the partial history kept.
TrainResult train(const TrainConfig& config, const ImitationDataset& data,
                  const Env& expert, const Env& learner_init,
                  const EpochCallback& on_epoch = {});

}  // namespace diffmpc

#endif  // DIFFMPC_IMITATION_H_
