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

#include "diffmpc/mpc_diff.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <utility>

#include "diffmpc/lqr.h"

namespace diffmpc {

Duals fixed_point_duals(const FixedPoint& fp) {
  LqrProblem lqr;
  const int T = fp.traj.horizon();
  lqr.dims = Dims{static_cast<int>(fp.traj.x[0].size()),
                  static_cast<int>(fp.traj.u[0].size()), T};
  lqr.C = fp.lin.H;
  lqr.c = fp.lin.c;
  lqr.F = fp.lin.F;
  lqr.f = fp.lin.f;
  lqr.x_init = fp.traj.x[0];
  return lqr_duals(lqr, fp.traj);
}

MpcGradients mpc_backward(const MpcProblem& problem, const FixedPoint& fp,
                          const std::vector<Vector>& grad_tau,
                          const MpcBackwardOptions& options) {
  if (!fp.converged && !options.allow_unconverged) {
    throw NotAFixedPoint(
        "mpc_backward: solver did not reach a fixed point; implicit "
        "differentiation would give wrong gradients");
  }
  const int T = problem.dims.horizon;
  const int n = problem.dims.n_state;
  const int m = problem.dims.n_ctrl;
  const int nt = problem.dims.n_tau();
  if (static_cast<int>(grad_tau.size()) != T) {
    throw DimensionError("mpc_backward: grad_tau must have horizon entries");
  }
  if (fp.traj.horizon() != T) {
    throw DimensionError("mpc_backward: fixed point horizon mismatch");
  }

  MpcGradients out;
  out.duals = fixed_point_duals(fp);

  LqrProblem diff = LqrProblem::zeros(problem.dims);
  for (int t = 0; t < T; ++t) {
    if (grad_tau[t].size() != nt) {
      throw DimensionError("mpc_backward: grad_tau entry has wrong length");
    }
    Matrix W = fp.lin.H[t];
    if (options.curvature == BackwardCurvature::kLagrangian && t + 1 < T) {
      W += dynamics_curvature(problem.dynamics, fp.traj.x[t], fp.traj.u[t],
                              out.duals.lambda[t + 1]);
    }
    Vector c = grad_tau[t];
    Matrix F = fp.lin.F[t];
    // Pin d_u = 0 on clamped controls: decouple the coordinate from the
    // objective and from the dynamics.
    for (int i = 0; i < m; ++i) {
      if (!fp.clamped[t][i]) continue;
      const int idx = n + i;
      W.row(idx).setZero();
      W.col(idx).setZero();
      W(idx, idx) = 1.0;
      c[idx] = 0.0;
      F.col(idx).setZero();
    }
    diff.C[t] = std::move(W);
    diff.c[t] = std::move(c);
    diff.F[t] = std::move(F);
  }

  LqrResult d = lqr_solve(diff);
  for (int t = 0; t < T; ++t) {
    for (int i = 0; i < m; ++i) {
      if (fp.clamped[t][i]) d.traj.u[t][i] = 0.0;
    }
  }
  Duals d_duals = lqr_duals(diff, d.traj);
  std::vector<Vector> d_tau(T);
  for (int t = 0; t < T; ++t) d_tau[t] = d.traj.tau(t);
  out.lqr = assemble_lqr_gradients(fp.traj, out.duals, std::move(d_tau),
                                   std::move(d_duals.lambda));
  return out;
}

Vector chain_to_params(const MpcGradients& grads, const FixedPoint& fp,
                       const CostParamAdjoint& cost_adjoint,
                       const DynParamAdjoint& dyn_adjoint) {
  const int T = fp.traj.horizon();
  const LqrGradients& g = grads.lqr;
  if (static_cast<int>(g.dC.size()) != T) {
    throw DimensionError("chain_to_params: gradient horizon mismatch");
  }
  if ((cost_adjoint.num_params > 0 && !cost_adjoint.contract) ||
      (dyn_adjoint.num_params > 0 && !dyn_adjoint.contract)) {
    throw std::invalid_argument("chain_to_params: adjoint without contraction");
  }
  Vector cost_part = Vector::Zero(cost_adjoint.num_params);
  Vector dyn_part = Vector::Zero(dyn_adjoint.num_params);
  for (int t = 0; t < T; ++t) {
    if (cost_adjoint.num_params > 0) {
      const Vector v = cost_adjoint.contract(fp.traj.tau(t), t, g.dC[t], g.dc[t]);
      if (v.size() != cost_adjoint.num_params) {
        throw DimensionError("chain_to_params: cost parameter count mismatch");
      }
      cost_part += v;
    }
    if (dyn_adjoint.num_params > 0 && t + 1 < T) {
      const Vector v =
          dyn_adjoint.contract(fp.traj.x[t], fp.traj.u[t], g.dF[t], g.df[t]);
      if (v.size() != dyn_adjoint.num_params) {
        throw DimensionError("chain_to_params: dynamics parameter count mismatch");
      }
      dyn_part += v;
    }
  }
  Vector out(cost_part.size() + dyn_part.size());
  out << cost_part, dyn_part;
  return out;
}

DynParamAdjoint finite_difference_dyn_adjoint(
    std::function<DynamicsFn(const Vector& theta)> family, Vector theta,
    double rel_step) {
  DynParamAdjoint adj;
  adj.num_params = static_cast<int>(theta.size());
  adj.contract = [family = std::move(family), theta = std::move(theta),
                  rel_step](const Vector& x, const Vector& u, const Matrix& dF,
                            const Vector& df) {
    const Vector tau = assemble_tau(x, u);
    auto contraction = [&](const Vector& th) {
      const DynamicsFn dyn = family(th);
      const Matrix J = dyn.jacobian(x, u);
      const Vector offset = dyn.step(x, u) - J * tau;
      return (dF.array() * J.array()).sum() + df.dot(offset);
    };
    Vector grad(theta.size());
    for (Eigen::Index j = 0; j < theta.size(); ++j) {
      const double h = rel_step * std::max(1.0, std::abs(theta[j]));
      Vector plus = theta, minus = theta;
      plus[j] += h;
      minus[j] -= h;
      grad[j] = (contraction(plus) - contraction(minus)) / (2.0 * h);
    }
    return grad;
  };
  return adj;
}

BoundActivity bound_activity(const MpcProblem& problem, const FixedPoint& fp) {
  const int T = problem.dims.horizon;
  const int m = problem.dims.n_ctrl;
  const Duals duals = fixed_point_duals(fp);
  BoundActivity act;
  act.multiplier.resize(T);
  act.distance.resize(T);
  act.min_clamped_multiplier = std::numeric_limits<double>::infinity();
  act.min_free_distance = std::numeric_limits<double>::infinity();
  for (int t = 0; t < T; ++t) {
    Vector r = fp.lin.p[t].tail(m);
    if (t + 1 < T) {
      r.noalias() += fp.lin.F[t].rightCols(m).transpose() * duals.lambda[t + 1];
    }
    const Vector& u = fp.traj.u[t];
    Vector dist = (u - problem.u_lower).cwiseMin(problem.u_upper - u);
    for (int i = 0; i < m; ++i) {
      if (fp.clamped[t][i]) {
        act.min_clamped_multiplier =
            std::min(act.min_clamped_multiplier, std::abs(r[i]));
      } else {
        act.min_free_distance = std::min(act.min_free_distance, dist[i]);
      }
    }
    act.multiplier[t] = std::move(r);
    act.distance[t] = std::move(dist);
  }
  return act;
}

bool has_weakly_active_bound(const MpcProblem& problem, const FixedPoint& fp,
                             double tol) {
  const BoundActivity act = bound_activity(problem, fp);
  return act.min_clamped_multiplier < tol || act.min_free_distance < tol;
}

}  // namespace diffmpc
