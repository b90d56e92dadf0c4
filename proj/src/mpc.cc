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

#include "diffmpc/mpc.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>

namespace diffmpc {

namespace {

constexpr double kInitialRegularization = 1e-6;
constexpr double kRegularizationGrowth = 10.0;
constexpr double kMaxRegularization = 1e6;
constexpr double kStagnationTol = 1e-10;
constexpr double kCostRoundoff = 1e-13;
constexpr int kStagnationPatience = 3;

struct Gains {
  std::vector<Matrix> K;
  std::vector<Vector> k;
};

// Box-constrained Riccati recursion in deviation coordinates around traj.
// Throws NotPositiveDefinite / BoxQpError when Q_uu + mu I is unusable.
Gains constrained_backward(const MpcProblem& problem, const Trajectory& traj,
                           const Linearization& lin, double mu) {
  const int T = problem.dims.horizon;
  const int n = problem.dims.n_state;
  const int m = problem.dims.n_ctrl;
  Gains gains;
  gains.K.resize(T);
  gains.k.resize(T);
  Matrix V = Matrix::Zero(n, n);
  Vector v = Vector::Zero(n);
  for (int t = T - 1; t >= 0; --t) {
    Matrix Q = lin.H[t];
    Vector q = lin.p[t];
    if (t < T - 1) {
      Q.noalias() += lin.F[t].transpose() * V * lin.F[t];
      q.noalias() += lin.F[t].transpose() * v;
      Q = 0.5 * (Q + Q.transpose()).eval();
    }
    Matrix Quu = Q.bottomRightCorner(m, m);
    Quu.diagonal().array() += mu;
    const Matrix Qux = Q.bottomLeftCorner(m, n);
    const Vector qu = q.tail(m);

    BoxQp qp{Quu, qu, problem.u_lower - traj.u[t], problem.u_upper - traj.u[t]};
    BoxQpSolution sol;
    try {
      sol = boxqp_solve(qp, Vector::Zero(m));
    } catch (const NotPositiveDefinite&) {
      throw NotPositiveDefinite("Q_uu not positive definite", t);
    }
    Vector k = sol.x_star;
    Matrix K = Matrix::Zero(m, n);
    if (sol.has_free()) {
      Matrix Qux_free(sol.free_idx.size(), n);
      for (std::size_t i = 0; i < sol.free_idx.size(); ++i) {
        Qux_free.row(i) = Qux.row(sol.free_idx[i]);
      }
      const Matrix K_free = -sol.free_factor.solve(Qux_free);
      for (std::size_t i = 0; i < sol.free_idx.size(); ++i) {
        K.row(sol.free_idx[i]) = K_free.row(i);
      }
    }

    const auto Qxx = Q.topLeftCorner(n, n);
    const auto Qxu = Q.topRightCorner(n, m);
    Matrix Vt = Qxx + Qxu * K + K.transpose() * Qux + K.transpose() * Quu * K;
    V = 0.5 * (Vt + Vt.transpose());
    v = q.head(n) + Qxu * k + K.transpose() * qu + K.transpose() * (Quu * k);
    gains.K[t] = std::move(K);
    gains.k[t] = std::move(k);
  }
  return gains;
}

std::optional<Gains> regularized_backward(const MpcProblem& problem,
                                          const Trajectory& traj,
                                          const Linearization& lin) {
  double mu = 0.0;
  while (true) {
    try {
      return constrained_backward(problem, traj, lin, mu);
    } catch (const NotPositiveDefinite&) {
    } catch (const BoxQpError&) {
    }
    mu = mu == 0.0 ? kInitialRegularization : mu * kRegularizationGrowth;
    if (mu > kMaxRegularization) return std::nullopt;
  }
}

Trajectory forward_rollout(const MpcProblem& problem, const Trajectory& traj,
                           const Gains& gains, double alpha) {
  const int T = problem.dims.horizon;
  Trajectory out;
  out.x.resize(T);
  out.u.resize(T);
  out.x[0] = problem.x_init;
  for (int t = 0; t < T; ++t) {
    out.u[t] = clip_control(
        problem, traj.u[t] + alpha * gains.k[t] +
                     gains.K[t] * (out.x[t] - traj.x[t]));
    if (t + 1 < T) out.x[t + 1] = problem.dynamics.step(out.x[t], out.u[t]);
  }
  return out;
}

double control_change(const Trajectory& a, const Trajectory& b) {
  double d = 0.0;
  for (std::size_t t = 0; t < a.u.size(); ++t) {
    d = std::max(d, (a.u[t] - b.u[t]).cwiseAbs().maxCoeff());
  }
  return d;
}

}  // namespace

Matrix dynamics_curvature(const DynamicsFn& dynamics, const Vector& x,
                          const Vector& u, const Vector& lambda) {
  if (dynamics.curvature) return dynamics.curvature(x, u, lambda);
  const Eigen::Index n = x.size();
  const Eigen::Index nt = n + u.size();
  Vector tau = assemble_tau(x, u);
  Matrix out(nt, nt);
  for (Eigen::Index j = 0; j < nt; ++j) {
    const double h = 1e-5 * std::max(1.0, std::abs(tau[j]));
    Vector plus = tau, minus = tau;
    plus[j] += h;
    minus[j] -= h;
    const Vector gp = dynamics.jacobian(plus.head(n), plus.tail(nt - n))
                          .transpose() * lambda;
    const Vector gm = dynamics.jacobian(minus.head(n), minus.tail(nt - n))
                          .transpose() * lambda;
    out.col(j) = (gp - gm) / (2.0 * h);
  }
  return 0.5 * (out + out.transpose());
}

void MpcProblem::validate() const {
  dims.validate();
  const int m = dims.n_ctrl;
  if (x_init.size() != dims.n_state || u_lower.size() != m ||
      u_upper.size() != m) {
    throw DimensionError("MpcProblem: x_init or bounds have wrong length");
  }
  if ((u_lower.array() > u_upper.array()).any()) {
    throw std::invalid_argument("MpcProblem: u_lower exceeds u_upper");
  }
  if (!u_init.empty()) {
    if (static_cast<int>(u_init.size()) != dims.horizon) {
      throw DimensionError("MpcProblem: u_init must have horizon entries");
    }
    for (const auto& u : u_init) {
      if (u.size() != m) throw DimensionError("MpcProblem: bad u_init entry");
    }
  }
  if (!cost.value || !cost.expand || !dynamics.step || !dynamics.jacobian) {
    throw std::invalid_argument("MpcProblem: cost and dynamics callables required");
  }
  if (max_iters < 1) throw std::invalid_argument("MpcProblem: max_iters < 1");
}

Vector clip_control(const MpcProblem& problem, const Vector& u) {
  return u.cwiseMax(problem.u_lower).cwiseMin(problem.u_upper);
}

Trajectory rollout(const MpcProblem& problem, const std::vector<Vector>& u) {
  const int T = problem.dims.horizon;
  if (static_cast<int>(u.size()) != T) {
    throw DimensionError("rollout: control sequence has wrong horizon");
  }
  Trajectory traj;
  traj.x.resize(T);
  traj.u = u;
  traj.x[0] = problem.x_init;
  for (int t = 0; t + 1 < T; ++t) {
    traj.x[t + 1] = problem.dynamics.step(traj.x[t], traj.u[t]);
  }
  return traj;
}

double total_cost(const MpcProblem& problem, const Trajectory& traj) {
  double sum = 0.0;
  for (int t = 0; t < traj.horizon(); ++t) {
    sum += problem.cost.value(traj.tau(t), t);
  }
  return sum;
}

Linearization linearize(const MpcProblem& problem, const Trajectory& traj) {
  const int T = problem.dims.horizon;
  const int n = problem.dims.n_state;
  const int nt = problem.dims.n_tau();
  Linearization lin;
  lin.H.resize(T);
  lin.p.resize(T);
  lin.c.resize(T);
  lin.F.resize(T);
  lin.f.resize(T);
  for (int t = 0; t < T; ++t) {
    const Vector tau = traj.tau(t);
    QuadraticExpansion e = problem.cost.expand(tau, t);
    if (e.hessian.rows() != nt || e.hessian.cols() != nt ||
        e.gradient.size() != nt) {
      throw DimensionError("cost expansion has wrong shape at timestep " +
                           std::to_string(t));
    }
    lin.H[t] = 0.5 * (e.hessian + e.hessian.transpose());
    lin.p[t] = std::move(e.gradient);
    lin.c[t] = lin.p[t] - lin.H[t] * tau;
    if (t + 1 < T) {
      lin.F[t] = problem.dynamics.jacobian(traj.x[t], traj.u[t]);
      if (lin.F[t].rows() != n || lin.F[t].cols() != nt) {
        throw DimensionError("dynamics Jacobian has wrong shape");
      }
      lin.f[t] = problem.dynamics.step(traj.x[t], traj.u[t]) - lin.F[t] * tau;
    } else {
      lin.F[t] = Matrix::Zero(n, nt);
      lin.f[t] = Vector::Zero(n);
    }
  }
  return lin;
}

LqrProblem to_lqr_problem(const MpcProblem& problem, const Linearization& lin) {
  LqrProblem lqr;
  lqr.dims = problem.dims;
  lqr.C = lin.H;
  lqr.c = lin.c;
  lqr.F = lin.F;
  lqr.f = lin.f;
  lqr.x_init = problem.x_init;
  return lqr;
}

StepResult mpc_step(const MpcProblem& problem, const Trajectory& traj,
                    const Linearization& lin) {
  const double old_cost = total_cost(problem, traj);
  StepResult result;
  result.traj = traj;
  result.new_cost = old_cost;

  const std::optional<Gains> gains = regularized_backward(problem, traj, lin);
  if (!gains) {
    result.full_step_norm = std::numeric_limits<double>::infinity();
    return result;
  }

  double alpha = problem.line_search.alpha_init;
  for (int b = 0; b <= problem.line_search.max_backtracks; ++b) {
    Trajectory candidate = forward_rollout(problem, traj, *gains, alpha);
    const double cost = total_cost(problem, candidate);
    if (b == 0) {
      result.full_step_norm = control_change(candidate, traj);
      if (result.full_step_norm < problem.convergence_tol) {
        // Fixed point: the model re-solve reproduces traj within tolerance.
        result.accepted = true;
        result.alpha = alpha;
        if (cost <= old_cost) {
          result.traj = std::move(candidate);
          result.new_cost = cost;
        }
        return result;
      }
    }
    // The undamped step may also raise the cost by floating-point noise:
    // near a fixed point the true change is below roundoff of the sum.
    const bool within_roundoff =
        b == 0 && cost - old_cost <= kCostRoundoff * std::max(1.0, std::abs(old_cost));
    if (cost <= old_cost || within_roundoff) {
      result.traj = std::move(candidate);
      result.new_cost = cost;
      result.accepted = true;
      result.alpha = alpha;
      return result;
    }
    alpha *= problem.line_search.decay;
  }
  return result;
}

std::vector<std::vector<bool>> clamp_mask(const MpcProblem& problem,
                                          const std::vector<Vector>& u) {
  std::vector<std::vector<bool>> mask(u.size());
  for (std::size_t t = 0; t < u.size(); ++t) {
    mask[t].resize(u[t].size());
    for (Eigen::Index i = 0; i < u[t].size(); ++i) {
      mask[t][i] = u[t][i] == problem.u_lower[i] || u[t][i] == problem.u_upper[i];
    }
  }
  return mask;
}

FixedPoint mpc_solve(const MpcProblem& problem) {
  problem.validate();
  const int T = problem.dims.horizon;
  std::vector<Vector> u0(T);
  for (int t = 0; t < T; ++t) {
    u0[t] = clip_control(problem, problem.u_init.empty()
                                      ? Vector::Zero(problem.dims.n_ctrl)
                                      : problem.u_init[t]);
  }

  FixedPoint fp;
  Trajectory traj = rollout(problem, u0);
  double cost = total_cost(problem, traj);
  fp.cost_history.push_back(cost);

  int stalled = 0;
  double last_step_norm = std::numeric_limits<double>::infinity();
  for (int i = 0; i < problem.max_iters; ++i) {
    const Linearization lin = linearize(problem, traj);
    StepResult step = mpc_step(problem, traj, lin);
    fp.iters_used = i + 1;
    fp.converged = step.full_step_norm < problem.convergence_tol;
    if (step.accepted) {
      // Zero-progress acceptance with a step that is not shrinking.
      const bool cycling = cost - step.new_cost < kStagnationTol &&
                           step.full_step_norm >= 0.9 * last_step_norm;
      stalled = cycling ? stalled + 1 : 0;
      traj = std::move(step.traj);
      cost = step.new_cost;
      fp.cost_history.push_back(cost);
    }
    last_step_norm = step.full_step_norm;
    if (problem.run_all_iters) continue;
    if (fp.converged || !step.accepted || stalled >= kStagnationPatience) break;
  }

  fp.lin = linearize(problem, traj);
  fp.clamped = clamp_mask(problem, traj.u);
  fp.total_cost = cost;
  fp.traj = std::move(traj);
  return fp;
}

}  // namespace diffmpc
