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

#include "diffmpc/lqr_diff.h"

#include <utility>

namespace diffmpc {

namespace {

LqrGradients from_differential(const LqrProblem& problem,
                               const LqrProblem& diff, const Trajectory& traj,
                               const Duals& duals, const Trajectory& d_traj) {
  const int T = problem.dims.horizon;
  std::vector<Vector> d_tau(T);
  for (int t = 0; t < T; ++t) d_tau[t] = d_traj.tau(t);
  Duals d_duals = lqr_duals(diff, d_traj);
  return assemble_lqr_gradients(traj, duals, std::move(d_tau),
                                std::move(d_duals.lambda));
}

}  // namespace

LqrGradients assemble_lqr_gradients(const Trajectory& traj,
                                    const Duals& duals,
                                    std::vector<Vector> d_tau,
                                    std::vector<Vector> d_lambda) {
  const int T = traj.horizon();
  if (static_cast<int>(d_tau.size()) != T ||
      static_cast<int>(d_lambda.size()) != T ||
      static_cast<int>(duals.lambda.size()) != T) {
    throw DimensionError("assemble_lqr_gradients: horizon mismatch");
  }
  const Eigen::Index n = traj.x[0].size();
  LqrGradients g;
  g.dC.resize(T);
  g.dc.resize(T);
  g.dF.resize(T);
  g.df.resize(T);
  for (int t = 0; t < T; ++t) {
    const Vector tau = traj.tau(t);
    const Matrix outer = d_tau[t] * tau.transpose();
    g.dC[t] = 0.5 * (outer + outer.transpose());
    g.dc[t] = d_tau[t];
    if (t + 1 < T) {
      g.dF[t] = d_lambda[t + 1] * tau.transpose() +
                duals.lambda[t + 1] * d_tau[t].transpose();
      g.df[t] = d_lambda[t + 1];
    } else {
      g.dF[t] = Matrix::Zero(n, tau.size());
      g.df[t] = Vector::Zero(n);
    }
  }
  g.dx_init = d_lambda[0];
  g.d_tau = std::move(d_tau);
  g.d_lambda = std::move(d_lambda);
  return g;
}

LqrProblem differential_problem(const LqrProblem& problem,
                                const std::vector<Vector>& grad_tau) {
  const int T = problem.dims.horizon;
  if (static_cast<int>(grad_tau.size()) != T) {
    throw DimensionError("grad_tau must have one entry per timestep");
  }
  LqrProblem diff = problem;
  for (int t = 0; t < T; ++t) {
    if (grad_tau[t].size() != problem.dims.n_tau()) {
      throw DimensionError("grad_tau entry has wrong length");
    }
    diff.c[t] = grad_tau[t];
    diff.f[t].setZero();
  }
  diff.x_init.setZero();
  return diff;
}

LqrGradients lqr_backward(const LqrProblem& problem, const Trajectory& traj,
                          const Duals& duals,
                          const std::vector<Vector>& grad_tau,
                          const RiccatiCache& cache) {
  const LqrProblem diff = differential_problem(problem, grad_tau);
  const LqrResult d = lqr_solve_reusing(diff, cache);
  return from_differential(problem, diff, traj, duals, d.traj);
}

LqrGradients lqr_backward_fresh(const LqrProblem& problem,
                                const Trajectory& traj, const Duals& duals,
                                const std::vector<Vector>& grad_tau) {
  const LqrProblem diff = differential_problem(problem, grad_tau);
  const LqrResult d = lqr_solve(diff);
  return from_differential(problem, diff, traj, duals, d.traj);
}

}  // namespace diffmpc
