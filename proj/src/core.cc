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

#include "diffmpc/core.h"

#include <algorithm>
#include <cmath>

namespace diffmpc {

namespace {

// Pivots below this fraction of the largest diagonal entry are treated as a
// factorization failure so that near-singular blocks get regularized.
constexpr double kRelativePivotFloor = 1e-13;

std::string shape(const Matrix& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

}  // namespace

void Dims::validate() const {
  if (n_state < 1 || n_ctrl < 1 || horizon < 1) {
    throw DimensionError("Dims: n_state, n_ctrl and horizon must be >= 1");
  }
}

void LqrProblem::validate() const {
  dims.validate();
  const std::size_t T = dims.horizon;
  const int n = dims.n_state;
  const int nt = dims.n_tau();
  if (C.size() != T || c.size() != T || F.size() != T || f.size() != T) {
    throw DimensionError("LqrProblem: C, c, F, f must have horizon entries");
  }
  if (x_init.size() != n) {
    throw DimensionError("LqrProblem: x_init has wrong length");
  }
  for (std::size_t t = 0; t < T; ++t) {
    if (C[t].rows() != nt || C[t].cols() != nt) {
      throw DimensionError("LqrProblem: C[" + std::to_string(t) + "] is " +
                           shape(C[t]));
    }
    if (c[t].size() != nt) {
      throw DimensionError("LqrProblem: c[" + std::to_string(t) +
                           "] has wrong length");
    }
    if (F[t].rows() != n || F[t].cols() != nt) {
      throw DimensionError("LqrProblem: F[" + std::to_string(t) + "] is " +
                           shape(F[t]));
    }
    if (f[t].size() != n) {
      throw DimensionError("LqrProblem: f[" + std::to_string(t) +
                           "] has wrong length");
    }
  }
}

void LqrProblem::symmetrize() {
  for (auto& m : C) m = 0.5 * (m + m.transpose()).eval();
}

LqrProblem LqrProblem::zeros(const Dims& dims) {
  dims.validate();
  LqrProblem p;
  p.dims = dims;
  const int n = dims.n_state;
  const int nt = dims.n_tau();
  p.C.assign(dims.horizon, Matrix::Zero(nt, nt));
  p.c.assign(dims.horizon, Vector::Zero(nt));
  p.F.assign(dims.horizon, Matrix::Zero(n, nt));
  p.f.assign(dims.horizon, Vector::Zero(n));
  p.x_init = Vector::Zero(n);
  return p;
}

Vector Trajectory::tau(int t) const { return assemble_tau(x[t], u[t]); }

Vector assemble_tau(const Vector& x, const Vector& u) {
  if (x.size() == 0 || u.size() == 0) {
    throw DimensionError("assemble_tau: empty state or control");
  }
  Vector tau(x.size() + u.size());
  tau << x, u;
  return tau;
}

Vector assemble_tau(const Dims& dims, const Vector& x, const Vector& u) {
  if (x.size() != dims.n_state || u.size() != dims.n_ctrl) {
    throw DimensionError("assemble_tau: block lengths do not match Dims");
  }
  return assemble_tau(x, u);
}

void split_tau(const Vector& tau, int n_state, Vector* x, Vector* u) {
  if (n_state < 1 || n_state >= tau.size()) {
    throw DimensionError("split_tau: n_state out of range");
  }
  *x = tau.head(n_state);
  *u = tau.tail(tau.size() - n_state);
}

PdFactorization::PdFactorization(const Matrix& a, int index) {
  if (a.rows() != a.cols() || a.rows() == 0) {
    throw DimensionError("PdFactorization: matrix must be square, non-empty");
  }
  llt_.compute(a);
  const double max_diag = a.diagonal().cwiseAbs().maxCoeff();
  bool ok = llt_.info() == Eigen::Success && max_diag > 0.0 &&
            std::isfinite(max_diag);
  if (ok) {
    const Vector piv = llt_.matrixLLT().diagonal();
    const double min_pivot_sq = piv.cwiseProduct(piv).minCoeff();
    ok = min_pivot_sq > kRelativePivotFloor * max_diag;
  }
  if (!ok) {
    throw NotPositiveDefinite(
        "matrix is not positive definite" +
            (index >= 0 ? " at timestep " + std::to_string(index)
                        : std::string()),
        index);
  }
}

Matrix PdFactorization::solve(const Matrix& b) const {
  if (b.rows() != llt_.rows()) {
    throw DimensionError("PdFactorization::solve: rhs has wrong row count");
  }
  return llt_.solve(b);
}

Vector PdFactorization::solve(const Vector& b) const {
  if (b.size() != llt_.rows()) {
    throw DimensionError("PdFactorization::solve: rhs has wrong length");
  }
  return llt_.solve(b);
}

Matrix solve_pd(const Matrix& a, const Matrix& b) {
  return PdFactorization(a).solve(b);
}

double inf_norm(const Matrix& m) {
  return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff();
}

}  // namespace diffmpc
