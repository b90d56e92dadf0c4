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

#ifndef DIFFMPC_MPC_H_
#define DIFFMPC_MPC_H_

#include <functional>
#include <vector>

#include "diffmpc/boxqp.h"
#include "diffmpc/core.h"

namespace diffmpc {

// Second-order model of a scalar cost at an expansion point:
// hessian is symmetric, gradient is the first derivative there.
struct QuadraticExpansion {
  Matrix hessian;
  Vector gradient;
};

// Time-indexed stage cost C_t(tau_t).
struct CostFn {
  std::function<double(const Vector& tau, int t)> value;
  std::function<QuadraticExpansion(const Vector& tau, int t)> expand;
};

// x_{t+1} = step(x_t, u_t).
struct DynamicsFn {
  std::function<Vector(const Vector& x, const Vector& u)> step;
  // n_state x n_tau Jacobian with respect to [x; u].
  std::function<Matrix(const Vector& x, const Vector& u)> jacobian;
  // sum_i lambda_i * Hessian(step_i) with respect to [x; u]. Optional;
  // dynamics_curvature() falls back to differencing the Jacobian.
  std::function<Matrix(const Vector& x, const Vector& u, const Vector& lambda)>
      curvature;
};

// Evaluates DynamicsFn::curvature, or central differences of
// jacobian(x, u)' lambda when none is supplied.
Matrix dynamics_curvature(const DynamicsFn& dynamics, const Vector& x,
                          const Vector& u, const Vector& lambda);

struct LineSearchOptions {
  double alpha_init = 1.0;
  double decay = 0.5;
  int max_backtracks = 10;
};

struct MpcProblem {
  Dims dims;
  CostFn cost;
  DynamicsFn dynamics;
  Vector u_lower;  // broadcast over time; +/- inf allowed
  Vector u_upper;
  Vector x_init;
  std::vector<Vector> u_init;  // empty means zeros
  int max_iters = 50;
  double convergence_tol = 1e-7;
  LineSearchOptions line_search;
  // Run exactly max_iters iterations (benchmarking); the converged flag is
  // still computed from the last proposed step.
  bool run_all_iters = false;

  void validate() const;
};

// Taylor terms of cost and dynamics around a trajectory, stored both in
// deviation form (gradient p) and in the absolute LQR form
// c = p - H tau, f = step(tau) - F tau.
struct Linearization {
  std::vector<Matrix> H;
  std::vector<Vector> p;
  std::vector<Vector> c;
  std::vector<Matrix> F;  // F.back() is zero
  std::vector<Vector> f;  // f.back() is zero
};

struct FixedPoint {
  Trajectory traj;
  Linearization lin;
  // clamped[t][i]: u_{t,i} sits exactly on one of its bounds.
  std::vector<std::vector<bool>> clamped;
  bool converged = false;
  int iters_used = 0;
  double total_cost = 0.0;
  // Accepted total cost after each iteration, preceded by the initial cost.
  std::vector<double> cost_history;
};

struct StepResult {
  Trajectory traj;
  bool accepted = false;
  double new_cost = 0.0;
  // Control change of the undamped (alpha = 1) proposal.
  double full_step_norm = 0.0;
  double alpha = 0.0;
};

// Projects a control into [u_lower, u_upper].
Vector clip_control(const MpcProblem& problem, const Vector& u);

// Forward simulation of the true dynamics from problem.x_init.
Trajectory rollout(const MpcProblem& problem, const std::vector<Vector>& u);

double total_cost(const MpcProblem& problem, const Trajectory& traj);

// Quadratic cost / affine dynamics model built at traj.
Linearization linearize(const MpcProblem& problem, const Trajectory& traj);

// Builds the LQR problem (H, c, F, f, x_init) of a linearization.
LqrProblem to_lqr_problem(const MpcProblem& problem, const Linearization& lin);

// One box-DDP iteration: constrained Riccati recursion over the model,
// then a line-searched rollout through the true dynamics and cost.
StepResult mpc_step(const MpcProblem& problem, const Trajectory& traj,
                    const Linearization& lin);

// Iterates mpc_step to a fixed point (or max_iters).
FixedPoint mpc_solve(const MpcProblem& problem);

// Clamp mask of a control sequence with respect to the problem bounds.
std::vector<std::vector<bool>> clamp_mask(const MpcProblem& problem,
                                          const std::vector<Vector>& u);

}  // namespace diffmpc

#endif  // DIFFMPC_MPC_H_
