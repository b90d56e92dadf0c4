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

#include "diffmpc/imitation.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <string>

namespace diffmpc {

namespace {

bool all_finite(const Vector& v) { return v.allFinite(); }

void solve_settings(MpcProblem& problem, const SolverSettings& solver) {
  problem.max_iters = solver.max_iters;
  problem.convergence_tol = solver.convergence_tol;
}

double selection_value(Method method, const EpochRecord& r) {
  return method == Method::kSysId ? r.val_sysid : r.val_imitation;
}

}  // namespace

Method method_from_name(const std::string& name) {
  if (name == "sysid") return Method::kSysId;
  if (name == "mpc.dx") return Method::kMpcDx;
  if (name == "mpc.cost") return Method::kMpcCost;
  if (name == "mpc.cost.dx") return Method::kMpcCostDx;
  if (name == "lqr.dx") return Method::kLqrDx;
  throw std::invalid_argument("unknown method '" + name + "'");
}

std::string method_name(Method method) {
  switch (method) {
    case Method::kSysId:
      return "sysid";
    case Method::kMpcDx:
      return "mpc.dx";
    case Method::kMpcCost:
      return "mpc.cost";
    case Method::kMpcCostDx:
      return "mpc.cost.dx";
    case Method::kLqrDx:
      return "lqr.dx";
  }
  return "unknown";
}

bool learns_dynamics(Method method) { return method != Method::kMpcCost; }

bool learns_cost(Method method) {
  return method == Method::kMpcCost || method == Method::kMpcCostDx;
}

LossTarget loss_target_from_name(const std::string& name) {
  if (name == "tau" || name == "trajectory") return LossTarget::kTrajectory;
  if (name == "controls") return LossTarget::kControls;
  throw std::invalid_argument("unknown loss target '" + name + "'");
}

std::string loss_target_name(LossTarget target) {
  return target == LossTarget::kTrajectory ? "tau" : "controls";
}

MpcProblem learner_problem(const Env& env, const Vector& x_init,
                           const SolverSettings& solver) {
  MpcProblem problem = make_mpc_problem(env, x_init);
  solve_settings(problem, solver);
  return problem;
}

ImitationDataset generate_dataset(const Env& expert, int n_train, int n_val,
                                  int n_test, std::uint64_t seed,
                                  const SolverSettings& solver) {
  if (n_train < 0 || n_val < 0 || n_test < 0) {
    throw std::invalid_argument("generate_dataset: negative split size");
  }
  ImitationDataset data;
  data.seed = seed;
  std::mt19937_64 rng(seed);
  const int total = n_train + n_val + n_test;
  const int max_attempts = 20 * std::max(total, 1);
  std::vector<ImitationRecord> records;
  records.reserve(total);
  int attempts = 0;
  while (static_cast<int>(records.size()) < total) {
    if (++attempts > max_attempts) {
      throw std::runtime_error(
          "generate_dataset: expert failed to converge on too many initial "
          "states (" + std::to_string(attempts - 1) + " attempts)");
    }
    const Vector x0 = sample_initial_state(expert, rng);
    const MpcProblem problem = learner_problem(expert, x0, solver);
    const FixedPoint fp = mpc_solve(problem);
    if (solver.observer) solver.observer(problem, fp);
    if (!fp.converged) continue;
    records.push_back(ImitationRecord{x0, fp.traj});
  }
  auto take = [&](int begin, int count) {
    return std::vector<ImitationRecord>(records.begin() + begin,
                                        records.begin() + begin + count);
  };
  data.train = take(0, n_train);
  data.val = take(n_train, n_val);
  data.test = take(n_train + n_val, n_test);
  return data;
}

std::vector<Transition> transitions_of(
    std::span<const ImitationRecord> records) {
  std::vector<Transition> out;
  for (const ImitationRecord& r : records) {
    const Trajectory& e = r.expert;
    for (int t = 0; t + 1 < e.horizon(); ++t) {
      out.push_back(Transition{e.x[t], e.u[t], e.x[t + 1]});
    }
  }
  return out;
}

int num_cost_params(const Env& env) {
  return static_cast<int>(env.cost.weights.size() + env.cost.goal.size());
}

Vector pack_params(const Env& env) {
  const Vector dyn = dyn_params(env);
  Vector theta(num_cost_params(env) + dyn.size());
  theta << env.cost.weights, env.cost.goal, dyn;
  return theta;
}

Env unpack_params(const Env& base, const Vector& theta) {
  const Eigen::Index nt = base.cost.weights.size();
  const int nc = num_cost_params(base);
  if (theta.size() != nc + dyn_params(base).size()) {
    throw DimensionError("unpack_params: parameter vector has wrong length");
  }
  Env env = with_dyn_params(base, theta.tail(theta.size() - nc));
  env.cost.weights = theta.head(nt);
  env.cost.goal = theta.segment(nt, nt);
  return env;
}

LossEval imitation_loss(const Env& learner,
                        std::span<const ImitationRecord> records,
                        LossTarget target, bool with_grad,
                        const SolverSettings& solver,
                        const MpcBackwardOptions& backward) {
  const Dims dims = learner.dims();
  const int n = dims.n_state;
  const int T = dims.horizon;
  LossEval out;
  if (records.empty()) throw std::invalid_argument("imitation_loss: no records");

  struct Solved {
    MpcProblem problem;
    FixedPoint fp;
    std::vector<Vector> diff;
  };
  std::vector<Solved> solved;
  solved.reserve(records.size());
  double sum = 0.0;
  for (const ImitationRecord& r : records) {
    if (r.expert.horizon() != T) {
      throw DimensionError("imitation_loss: record horizon mismatch");
    }
    MpcProblem problem = learner_problem(learner, r.x_init, solver);
    FixedPoint fp = mpc_solve(problem);
    if (solver.observer) solver.observer(problem, fp);
    if (with_grad && !fp.converged) {
      ++out.skipped;
      continue;
    }
    std::vector<Vector> diff(T);
    for (int t = 0; t < T; ++t) {
      diff[t] = fp.traj.tau(t) - r.expert.tau(t);
      if (target == LossTarget::kControls) diff[t].head(n).setZero();
      sum += diff[t].squaredNorm();
    }
    ++out.used;
    if (with_grad) {
      solved.push_back(Solved{std::move(problem), std::move(fp), std::move(diff)});
    }
  }
  if (out.used == 0) {
    throw NoConvergedSolves("imitation_loss: no learner solve converged");
  }
  out.loss = sum / out.used;
  if (!with_grad) return out;

  const CostParamAdjoint cost_adj = goal_cost_adjoint(learner.cost);
  const DynParamAdjoint dyn_adj = dyn_adjoint(learner);
  out.grad = Vector::Zero(cost_adj.num_params + dyn_adj.num_params);
  const double scale = 2.0 / out.used;
  for (Solved& s : solved) {
    std::vector<Vector> grad_tau(T);
    for (int t = 0; t < T; ++t) grad_tau[t] = scale * s.diff[t];
    const MpcGradients g = mpc_backward(s.problem, s.fp, grad_tau, backward);
    out.grad += chain_to_params(g, s.fp, cost_adj, dyn_adj);
  }
  return out;
}

LossEval sysid_loss(const Env& learner, std::span<const Transition> data,
                    bool with_grad) {
  if (data.empty()) throw std::invalid_argument("sysid_loss: no transitions");
  const DynamicsFn dyn = make_dynamics(learner);
  const int nc = num_cost_params(learner);
  const Eigen::Index k = dyn_params(learner).size();
  LossEval out;
  Vector grad = Vector::Zero(k);
  double sum = 0.0;
  for (const Transition& tr : data) {
    const Vector r = dyn.step(tr.x, tr.u) - tr.x_next;
    sum += r.squaredNorm();
    if (with_grad) {
      grad.noalias() += dyn_param_jacobian(learner, tr.x, tr.u).transpose() * r;
    }
  }
  const double N = static_cast<double>(data.size());
  out.used = static_cast<int>(data.size());
  out.loss = sum / N;
  if (with_grad) {
    out.grad = Vector::Zero(nc + k);
    out.grad.tail(k) = 2.0 * grad / N;
  }
  return out;
}

double model_loss(const Vector& theta, const Vector& theta_hat) {
  if (theta.size() != theta_hat.size()) {
    throw DimensionError("model_loss: parameter structures differ");
  }
  if (theta.size() == 0) return 0.0;
  return (theta - theta_hat).squaredNorm() / static_cast<double>(theta.size());
}

void TrainConfig::validate(int train_size) const {
  if (alternation_period < 1) {
    throw std::invalid_argument("TrainConfig: alternation period must be >= 1");
  }
  if (batch_size < 1 || batch_size > train_size) {
    throw std::invalid_argument(
        "TrainConfig: batch size must be in [1, train size]");
  }
  if (epochs < 0) throw std::invalid_argument("TrainConfig: negative epochs");
  if (!(optimizer.learning_rate > 0.0)) {
    throw std::invalid_argument("TrainConfig: learning rate must be positive");
  }
  if (solver.max_iters < 1) {
    throw std::invalid_argument("TrainConfig: solver max_iters must be >= 1");
  }
}

Vector update_mask(const Env& env, Method method, int epoch,
                   int alternation_period) {
  const Eigen::Index nt = env.cost.weights.size();
  const Eigen::Index k = dyn_params(env).size();
  Vector mask = Vector::Zero(2 * nt + k);
  if (learns_dynamics(method)) mask.tail(k).setOnes();
  if (learns_cost(method)) {
    const bool weights_phase = (epoch / alternation_period) % 2 == 0;
    mask.segment(weights_phase ? 0 : nt, nt).setOnes();
  }
  return mask;
}

TrainResult train(const TrainConfig& config, const ImitationDataset& data,
                  const Env& expert, const Env& learner_init,
                  const EpochCallback& on_epoch) {
  const int train_size = static_cast<int>(data.train.size());
  config.validate(train_size);
  if (data.val.empty() || data.test.empty()) {
    throw std::invalid_argument("train: validation and test splits required");
  }

  const Vector expert_dyn = dyn_params(expert);
  const std::vector<Transition> val_tr = transitions_of(data.val);
  const std::vector<Transition> test_tr = transitions_of(data.test);
  const bool sysid = config.method == Method::kSysId;
  const int nc = num_cost_params(learner_init);

  auto evaluate = [&](const Vector& theta, bool imitation, EpochRecord& r) {
    const Env env = unpack_params(learner_init, theta);
    if (imitation) {
      r.val_imitation = imitation_loss(env, data.val, config.loss_target, false,
                                       config.solver).loss;
      r.test_imitation = imitation_loss(env, data.test, config.loss_target,
                                        false, config.solver).loss;
    } else {
      r.val_imitation = std::numeric_limits<double>::quiet_NaN();
      r.test_imitation = std::numeric_limits<double>::quiet_NaN();
    }
    r.val_sysid = sysid_loss(env, val_tr, false).loss;
    r.test_sysid = sysid_loss(env, test_tr, false).loss;
    r.model_loss = model_loss(expert_dyn, theta.tail(theta.size() - nc));
  };
  const bool eval_imitation_each = config.evaluate_every_epoch || !sysid;

  TrainResult result;
  Vector theta = pack_params(learner_init);
  result.initial_params = theta;
  evaluate(theta, true, result.initial);
  result.best_params = theta;
  result.best_record = result.initial;
  result.best_val = selection_value(config.method, result.initial);

  std::mt19937_64 rng(config.seed);
  Optimizer optimizer(config.optimizer);
  std::vector<int> order(train_size);
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    const Vector mask =
        update_mask(learner_init, config.method, epoch, config.alternation_period);
    EpochRecord rec;
    rec.epoch = epoch + 1;
    double loss_sum = 0.0;
    int batches = 0;
    for (int start = 0; start + config.batch_size <= train_size;
         start += config.batch_size) {
      std::vector<ImitationRecord> batch;
      batch.reserve(config.batch_size);
      for (int i = start; i < start + config.batch_size; ++i) {
        batch.push_back(data.train[order[i]]);
      }
      const Env env = unpack_params(learner_init, theta);
      LossEval ev;
      if (sysid) {
        ev = sysid_loss(env, transitions_of(batch), true);
      } else {
        try {
          ev = imitation_loss(env, batch, config.loss_target, true, config.solver);
        } catch (const NoConvergedSolves&) {
          rec.skipped += config.batch_size;
          continue;
        }
      }
      rec.skipped += ev.skipped;
      if (!std::isfinite(ev.loss) || !all_finite(ev.grad)) {
        result.aborted = true;
        result.abort_reason = "non-finite loss or gradient in epoch " +
                              std::to_string(rec.epoch);
        break;
      }
      optimizer.step(theta, ev.grad, mask);
      if (!all_finite(theta)) {
        result.aborted = true;
        result.abort_reason =
            "non-finite parameters after update in epoch " + std::to_string(rec.epoch);
        break;
      }
      loss_sum += ev.loss;
      ++batches;
    }
    result.total_skipped += rec.skipped;
    if (result.aborted) break;
    rec.train_loss = batches > 0 ? loss_sum / batches
                                 : std::numeric_limits<double>::quiet_NaN();
    evaluate(theta, eval_imitation_each, rec);
    const double sel = selection_value(config.method, rec);
    if (sel < result.best_val) {
      result.best_val = sel;
      result.best_params = theta;
      result.best_epoch = rec.epoch;
      result.best_record = rec;
    }
    result.history.push_back(rec);
    if (on_epoch) on_epoch(rec);
  }
  result.final_params = theta;
  if (!eval_imitation_each && result.best_epoch > 0) {
    evaluate(result.best_params, true, result.best_record);
  }
  return result;
}

}  // namespace diffmpc
