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

#include "diffmpc/boxqp.h"

#include <algorithm>
#include <cmath>
#include <string>

namespace diffmpc {

namespace {

Vector clip(const Vector& x, const Vector& lo, const Vector& hi) {
  return x.cwiseMax(lo).cwiseMin(hi);
}

// Clamped set at x: the coordinate is at a bound and the gradient points
// out of the box. Exactly-zero gradient at a bound counts as free.
std::vector<bool> clamped_set(const BoxQp& qp, const Vector& x,
                              const Vector& g) {
  const Eigen::Index k = x.size();
  std::vector<bool> clamped(k, false);
  for (Eigen::Index i = 0; i < k; ++i) {
    clamped[i] = (x[i] == qp.lower[i] && g[i] > 0.0) ||
                 (x[i] == qp.upper[i] && g[i] < 0.0);
  }
  return clamped;
}

std::vector<int> free_indices(const std::vector<bool>& clamped) {
  std::vector<int> idx;
  for (std::size_t i = 0; i < clamped.size(); ++i) {
    if (!clamped[i]) idx.push_back(static_cast<int>(i));
  }
  return idx;
}

Matrix sub_matrix(const Matrix& Q, const std::vector<int>& idx) {
  const int n = static_cast<int>(idx.size());
  Matrix out(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) out(i, j) = Q(idx[i], idx[j]);
  }
  return out;
}

Vector sub_vector(const Vector& v, const std::vector<int>& idx) {
  Vector out(idx.size());
  for (std::size_t i = 0; i < idx.size(); ++i) out[i] = v[idx[i]];
  return out;
}

// One exact Newton step on the free coordinates, kept only if it stays in
// the box. Removes the residual left by the gradient tolerance.
void polish_free(const BoxQp& qp, const std::vector<int>& free_idx,
                 const PdFactorization& factor, const Vector& g_free,
                 Vector& x) {
  const Vector d = -factor.solve(g_free);
  Vector y = x;
  for (std::size_t i = 0; i < free_idx.size(); ++i) {
    const int j = free_idx[i];
    y[j] += d[i];
    if (y[j] < qp.lower[j] || y[j] > qp.upper[j]) return;
  }
  x = y;
}

}  // namespace

void BoxQp::validate() const {
  const Eigen::Index k = p.size();
  if (Q.rows() != k || Q.cols() != k || lower.size() != k ||
      upper.size() != k) {
    throw DimensionError("BoxQp: inconsistent shapes");
  }
  if ((lower.array() > upper.array()).any()) {
    throw std::invalid_argument("BoxQp: lower bound exceeds upper bound");
  }
}

double BoxQp::objective(const Vector& x) const {
  return 0.5 * x.dot(Q * x) + p.dot(x);
}

Vector boxqp_gradient(const BoxQp& qp, const Vector& x) {
  return qp.Q * x + qp.p;
}

BoxQpSolution boxqp_solve(const BoxQp& qp, const Vector& x_warm,
                          const BoxQpOptions& options) {
  qp.validate();
  if (x_warm.size() != qp.p.size()) {
    throw DimensionError("boxqp_solve: warm start has wrong length");
  }
  const Eigen::Index k = qp.p.size();
  Vector x = clip(x_warm, qp.lower, qp.upper);
  double value = qp.objective(x);
  double residual = 0.0;

  for (int iter = 0; iter < options.max_iters; ++iter) {
    const Vector g = boxqp_gradient(qp, x);
    std::vector<bool> clamped = clamped_set(qp, x, g);
    std::vector<int> free_idx = free_indices(clamped);

    const Vector g_free = sub_vector(g, free_idx);
    residual = g_free.size() ? g_free.cwiseAbs().maxCoeff() : 0.0;

    BoxQpSolution sol;
    if (!free_idx.empty()) {
      sol.free_factor = PdFactorization(sub_matrix(qp.Q, free_idx));
    }
    if (residual <= options.grad_tol) {
      if (residual > 0.0) polish_free(qp, free_idx, sol.free_factor, g_free, x);
      sol.x_star = x;
      sol.clamped = std::move(clamped);
      sol.free_idx = std::move(free_idx);
      sol.iters = iter;
      return sol;
    }

    // Newton direction on the free set, zero on the clamped set.
    Vector dir = Vector::Zero(k);
    const Vector d_free = -sol.free_factor.solve(g_free);
    for (std::size_t i = 0; i < free_idx.size(); ++i) {
      dir[free_idx[i]] = d_free[i];
    }
    if (dir.cwiseAbs().maxCoeff() <= options.step_tol) {
      sol.x_star = x;
      sol.clamped = std::move(clamped);
      sol.free_idx = std::move(free_idx);
      sol.iters = iter;
      return sol;
    }

    // Armijo backtracking along the projection arc.
    double alpha = 1.0;
    bool accepted = false;
    for (int ls = 0; ls < options.max_line_search; ++ls) {
      const Vector candidate = clip(x + alpha * dir, qp.lower, qp.upper);
      const double cand_value = qp.objective(candidate);
      if (cand_value - value <= options.armijo * g.dot(candidate - x)) {
        const bool moved = (candidate - x).cwiseAbs().maxCoeff() > 0.0;
        x = candidate;
        value = cand_value;
        accepted = moved;
        break;
      }
      alpha *= options.backtrack;
    }
    if (!accepted) {
      // No representable descent left along the arc.
      sol.x_star = x;
      const Vector g_now = boxqp_gradient(qp, x);
      sol.clamped = clamped_set(qp, x, g_now);
      sol.free_idx = free_indices(sol.clamped);
      sol.free_factor = sol.free_idx.empty()
                            ? PdFactorization()
                            : PdFactorization(sub_matrix(qp.Q, sol.free_idx));
      sol.iters = iter + 1;
      return sol;
    }
  }
  throw BoxQpError("boxqp_solve: iteration cap of " +
                       std::to_string(options.max_iters) + " exceeded",
                   x, residual);
}

BoxQpGradients boxqp_backward(const BoxQp& qp, const BoxQpSolution& sol,
                              const Vector& grad_x) {
  const Eigen::Index k = qp.p.size();
  if (grad_x.size() != k || sol.x_star.size() != k) {
    throw DimensionError("boxqp_backward: shape mismatch");
  }
  BoxQpGradients out;
  out.d_x = Vector::Zero(k);
  if (sol.has_free()) {
    const Vector d_free = -sol.free_factor.solve(sub_vector(grad_x, sol.free_idx));
    for (std::size_t i = 0; i < sol.free_idx.size(); ++i) {
      out.d_x[sol.free_idx[i]] = d_free[i];
    }
  }
  const Matrix outer = out.d_x * sol.x_star.transpose();
  out.dQ = 0.5 * (outer + outer.transpose());
  out.dp = out.d_x;
  return out;
}

}  // namespace diffmpc
