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

#ifndef DIFFMPC_LQR_H_
#define DIFFMPC_LQR_H_

#include <vector>

#include "diffmpc/core.h"

namespace diffmpc {

// Per-timestep quantities of the Riccati backward recursion. Q, K and V
// depend only on (C, F), so a cache from one solve serves every problem
// that shares those terms.
struct RiccatiCache {
  std::vector<PdFactorization> q_uu;  // factorization of Q_{t,uu}
  std::vector<Matrix> Q;              // full n_tau x n_tau Q_t
  std::vector<Matrix> K;              // n_ctrl x n_state
  std::vector<Vector> k;              // n_ctrl
  std::vector<Matrix> V;              // n_state x n_state, symmetric
  std::vector<Vector> v;              // n_state
};

struct LqrResult {
  Trajectory traj;
  RiccatiCache cache;
};

// Riccati solve of the LQR problem. C_t is symmetrized on ingestion.
// Throws NotPositiveDefinite naming the timestep whose Q_{t,uu} fails to
// factor.
LqrResult lqr_solve(const LqrProblem& problem);

// Solves a problem that has the same C and F as the one `cache` was built
// from, reusing its factorizations. Only c, f and x_init are read.
LqrResult lqr_solve_reusing(const LqrProblem& problem,
                            const RiccatiCache& cache);

// Rolls u_t = K_t x_t + k_t forward from x_init through the affine dynamics.
Trajectory lqr_rollout(const LqrProblem& problem, const RiccatiCache& cache);

// Multipliers of the dynamics constraints recovered from an optimal
// trajectory by the backward recursion
//   lambda_{T-1} = C_{T-1,x} tau_{T-1} + c_{T-1,x}
//   lambda_t     = F_{t,x}' lambda_{t+1} + C_{t,x} tau_t + c_{t,x}.
Duals lqr_duals(const LqrProblem& problem, const Trajectory& traj);

}  // namespace diffmpc

#endif  // DIFFMPC_LQR_H_
