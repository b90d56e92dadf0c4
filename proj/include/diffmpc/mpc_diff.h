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

#ifndef DIFFMPC_MPC_DIFF_H_
#define DIFFMPC_MPC_DIFF_H_

#include <functional>
#include <stdexcept>
#include <vector>

#include "diffmpc/core.h"
#include "diffmpc/lqr_diff.h"
#include "diffmpc/mpc.h"

namespace diffmpc {

// Raised when differentiating a solve that did not reach a fixed point:
// the KKT-based derivative is only valid at one.
class NotAFixedPoint : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// The curvature used by the differential LQR solve.
enum class BackwardCurvature {
  // Cost Hessian plus the dynamics second-order term sum_i lambda_i
  // Hess(f_i). Matches the sensitivity of the converged solver output.
  kLagrangian,
  // Cost Hessian only, i.e. the final convex approximation as is.
  kCostOnly,
};

struct MpcBackwardOptions {
  BackwardCurvature curvature = BackwardCurvature::kLagrangian;
  // Skip the fixed-point check (timing runs only).
  bool allow_unconverged = false;
};

// Gradients with respect to the final convex approximation written in LQR
// form (H, c, F, f, x_init), plus the differential solution.
struct MpcGradients {
  LqrGradients lqr;
  Duals duals;   // multipliers of the true problem at the fixed point
  Vector dtheta;  // filled by chain_to_params
};

// Fixed-point backward pass: one zero-constrained LQR solve in which the
// clamped controls are pinned to d_u = 0.
MpcGradients mpc_backward(const MpcProblem& problem, const FixedPoint& fp,
                          const std::vector<Vector>& grad_tau,
                          const MpcBackwardOptions& options = {});

// Multipliers of the dynamics constraints at a trajectory, from the cost
// gradients and dynamics Jacobians of `lin`.
Duals fixed_point_duals(const FixedPoint& fp);

// Parameter contraction of one timestep's cost expansion:
//   sum <dC, dH/dtheta> + <dc, dp/dtheta - dH/dtheta tau>.
struct CostParamAdjoint {
  int num_params = 0;
  std::function<Vector(const Vector& tau, int t, const Matrix& dC,
                       const Vector& dc)>
      contract;
};

// Parameter contraction of one timestep's dynamics linearization:
//   sum <dF, dF/dtheta> + <df, df(tau)/dtheta - dF/dtheta tau>.
struct DynParamAdjoint {
  int num_params = 0;
  std::function<Vector(const Vector& x, const Vector& u, const Matrix& dF,
                       const Vector& df)>
      contract;
};

// Chain rule into structured parameters, holding the fixed-point trajectory
// constant. Result is [cost params..., dynamics params...]; either adjoint
// may have num_params == 0.
Vector chain_to_params(const MpcGradients& grads, const FixedPoint& fp,
                       const CostParamAdjoint& cost_adjoint,
                       const DynParamAdjoint& dyn_adjoint);

// Central-difference dynamics adjoint for a family theta -> DynamicsFn.
DynParamAdjoint finite_difference_dyn_adjoint(
    std::function<DynamicsFn(const Vector& theta)> family, Vector theta,
    double rel_step = 1e-6);

// Bound activity at a fixed point. multiplier[t][i] is the control
// stationarity residual p_{t,u} + F_{t,u}' lambda_{t+1}; distance[t][i] the
// gap to the nearest bound.
struct BoundActivity {
  std::vector<Vector> multiplier;
  std::vector<Vector> distance;
  // Smallest |multiplier| over clamped entries and smallest distance over
  // free entries (infinity when the respective set is empty).
  double min_clamped_multiplier = 0.0;
  double min_free_distance = 0.0;
};

BoundActivity bound_activity(const MpcProblem& problem, const FixedPoint& fp);

// True when some bound is active with a (near-)zero multiplier or some free
// control is within `tol` of a bound.
bool has_weakly_active_bound(const MpcProblem& problem, const FixedPoint& fp,
                             double tol);

}  // namespace diffmpc

#endif  // DIFFMPC_MPC_DIFF_H_
