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

#include "diffmpc/lqr.h"

#include <string>

namespace diffmpc {

namespace {

void check_trajectory(const LqrProblem& problem, const Trajectory& traj) {
  const int T = problem.dims.horizon;
  if (traj.horizon() != T || static_cast<int>(traj.u.size()) != T) {
    throw DimensionError("trajectory horizon does not match problem");
  }
  for (int t = 0; t < T; ++t) {
    if (traj.x[t].size() != problem.dims.n_state ||
        traj.u[t].size() != problem.dims.n_ctrl) {
      throw DimensionError("trajectory entry " + std::to_string(t) +
                           " has wrong shape");
    }
  }
}

// Value-function update shared by the fresh and the cached recursion.
void value_update(const Matrix& Q, const Vector& q, const Matrix& K,
                  const Vector& k, int n, Matrix* V, Vector* v) {
  const int m = static_cast<int>(Q.rows()) - n;
  const auto Qxx = Q.topLeftCorner(n, n);
  const auto Qxu = Q.topRightCorner(n, m);
  const auto Qux = Q.bottomLeftCorner(m, n);
  const auto Quu = Q.bottomRightCorner(m, m);
  if (V != nullptr) {
    Matrix Vt = Qxx + Qxu * K + K.transpose() * Qux +
                K.transpose() * Quu * K;
    *V = 0.5 * (Vt + Vt.transpose());
  }
  *v = q.head(n) + Qxu * k + K.transpose() * q.tail(m) +
       K.transpose() * (Quu * k);
}

}  // namespace

LqrResult lqr_solve(const LqrProblem& problem) {
  problem.validate();
  const int T = problem.dims.horizon;
  const int n = problem.dims.n_state;
  const int m = problem.dims.n_ctrl;

  RiccatiCache cache;
  cache.q_uu.resize(T);
  cache.Q.resize(T);
  cache.K.resize(T);
  cache.k.resize(T);
  cache.V.resize(T);
  cache.v.resize(T);

  for (int t = T - 1; t >= 0; --t) {
    Matrix Q = 0.5 * (problem.C[t] + problem.C[t].transpose());
    Vector q = problem.c[t];
    if (t < T - 1) {
      const Matrix& Ft = problem.F[t];
      Q.noalias() += Ft.transpose() * cache.V[t + 1] * Ft;
      q.noalias() +=
          Ft.transpose() * (cache.V[t + 1] * problem.f[t] + cache.v[t + 1]);
      Q = 0.5 * (Q + Q.transpose()).eval();
    }
    cache.q_uu[t] = PdFactorization(Q.bottomRightCorner(m, m), t);
    cache.K[t] = -cache.q_uu[t].solve(Matrix(Q.bottomLeftCorner(m, n)));
    cache.k[t] = -cache.q_uu[t].solve(Vector(q.tail(m)));
    value_update(Q, q, cache.K[t], cache.k[t], n, &cache.V[t], &cache.v[t]);
    cache.Q[t] = std::move(Q);
  }

  LqrResult result;
  result.traj = lqr_rollout(problem, cache);
  result.cache = std::move(cache);
  return result;
}

LqrResult lqr_solve_reusing(const LqrProblem& problem,
                            const RiccatiCache& cache) {
  problem.validate();
  const int T = problem.dims.horizon;
  const int n = problem.dims.n_state;
  const int m = problem.dims.n_ctrl;
  if (static_cast<int>(cache.Q.size()) != T) {
    throw DimensionError("lqr_solve_reusing: cache horizon mismatch");
  }

  LqrResult result;
  result.cache.q_uu = cache.q_uu;
  result.cache.Q = cache.Q;
  result.cache.K = cache.K;
  result.cache.V = cache.V;
  result.cache.k.resize(T);
  result.cache.v.resize(T);
  for (int t = T - 1; t >= 0; --t) {
    Vector q = problem.c[t];
    if (t < T - 1) {
      const Matrix& Ft = problem.F[t];
      q.noalias() += Ft.transpose() *
                     (cache.V[t + 1] * problem.f[t] + result.cache.v[t + 1]);
    }
    result.cache.k[t] = -cache.q_uu[t].solve(Vector(q.tail(m)));
    value_update(cache.Q[t], q, cache.K[t], result.cache.k[t], n, nullptr,
                 &result.cache.v[t]);
  }
  result.traj = lqr_rollout(problem, result.cache);
  return result;
}

Trajectory lqr_rollout(const LqrProblem& problem, const RiccatiCache& cache) {
  const int T = problem.dims.horizon;
  Trajectory traj;
  traj.x.resize(T);
  traj.u.resize(T);
  traj.x[0] = problem.x_init;
  for (int t = 0; t < T; ++t) {
    traj.u[t] = cache.K[t] * traj.x[t] + cache.k[t];
    if (t + 1 < T) {
      traj.x[t + 1] = problem.F[t] * assemble_tau(traj.x[t], traj.u[t]) +
                      problem.f[t];
    }
  }
  return traj;
}

Duals lqr_duals(const LqrProblem& problem, const Trajectory& traj) {
  problem.validate();
  check_trajectory(problem, traj);
  const int T = problem.dims.horizon;
  const int n = problem.dims.n_state;
  Duals duals;
  duals.lambda.resize(T);
  for (int t = T - 1; t >= 0; --t) {
    const Vector tau = traj.tau(t);
    // First block-row of the symmetrized C_t.
    Vector lam = 0.5 * (problem.C[t].topRows(n) * tau +
                        problem.C[t].leftCols(n).transpose() * tau) +
                 problem.c[t].head(n);
    if (t < T - 1) {
      lam.noalias() += problem.F[t].leftCols(n).transpose() * duals.lambda[t + 1];
    }
    duals.lambda[t] = std::move(lam);
  }
  return duals;
}

}  // namespace diffmpc
