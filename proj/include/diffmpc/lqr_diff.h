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

#ifndef DIFFMPC_LQR_DIFF_H_
#define DIFFMPC_LQR_DIFF_H_

#include <vector>

#include "diffmpc/core.h"
#include "diffmpc/lqr.h"

namespace diffmpc {

// Gradients of a downstream loss with respect to every LqrProblem input.
// Shapes mirror LqrProblem; dF.back() and df.back() are always zero since
// no dynamics constraint is attached to the final step.
struct LqrGradients {
  std::vector<Matrix> dC;  // symmetric
  std::vector<Vector> dc;
  std::vector<Matrix> dF;
  std::vector<Vector> df;
  Vector dx_init;

  // Differential trajectory (d_tau) and differential duals (d_lambda).
  std::vector<Vector> d_tau;
  std::vector<Vector> d_lambda;
};

// Assembles the parameter gradients from the primal/dual solution and the
// differential solution:
//   dC_t = 1/2 (d_tau_t tau_t' + tau_t d_tau_t'),   dc_t = d_tau_t,
//   dF_t = d_lambda_{t+1} tau_t' + lambda_{t+1} d_tau_t',
//   df_t = d_lambda_{t+1},                          dx_init = d_lambda_0.
LqrGradients assemble_lqr_gradients(const Trajectory& traj,
                                    const Duals& duals,
                                    std::vector<Vector> d_tau,
                                    std::vector<Vector> d_lambda);

// Backward pass of an LQR layer: d_tau solves the same LQR with c replaced
// by grad_tau and f, x_init set to zero, reusing the Riccati factorizations
// of the forward solve.
LqrGradients lqr_backward(const LqrProblem& problem, const Trajectory& traj,
                          const Duals& duals,
                          const std::vector<Vector>& grad_tau,
                          const RiccatiCache& cache);

// Same as lqr_backward but re-factorizes from scratch.
LqrGradients lqr_backward_fresh(const LqrProblem& problem,
                                const Trajectory& traj, const Duals& duals,
                                const std::vector<Vector>& grad_tau);

// The differential problem (C, grad_tau, F, 0) with x_init = 0.
LqrProblem differential_problem(const LqrProblem& problem,
                                const std::vector<Vector>& grad_tau);

}  // namespace diffmpc

#endif  // DIFFMPC_LQR_DIFF_H_
