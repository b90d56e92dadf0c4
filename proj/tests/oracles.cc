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

#include "oracles.h"

#include <cmath>
#include <limits>

#include <Eigen/Eigenvalues>
#include <Eigen/LU>
#include <Eigen/QR>

#include "diffmpc/lqr.h"

namespace diffmpc::testing {

DenseKktSolution dense_kkt_solve(const LqrProblem& problem) {
  const int n = problem.dims.n_state;
  const int nt = problem.dims.n_tau();
  const int T = problem.dims.horizon;
  const int nz = T * nt;
  const int nl = T * n;

  Matrix K = Matrix::Zero(nz + nl, nz + nl);
  Vector rhs = Vector::Zero(nz + nl);
  for (int t = 0; t < T; ++t) {
    const Matrix Ct = 0.5 * (problem.C[t] + problem.C[t].transpose());
    K.block(t * nt, t * nt, nt, nt) = Ct;
    rhs.segment(t * nt, nt) = -problem.c[t];
  }
  // Row block of lambda_0: -x_0 = -x_init.
  Matrix G = Matrix::Zero(nl, nz);
  G.block(0, 0, n, n) = -Matrix::Identity(n, n);
  rhs.segment(nz, n) = -problem.x_init;
  // Row block of lambda_{t+1}: F_t tau_t - x_{t+1} = -f_t.
  for (int t = 0; t + 1 < T; ++t) {
    const int row = (t + 1) * n;
    G.block(row, t * nt, n, nt) = problem.F[t];
    G.block(row, (t + 1) * nt, n, n) -= Matrix::Identity(n, n);
    rhs.segment(nz + row, n) = -problem.f[t];
  }
  K.block(0, nz, nz, nl) = G.transpose();
  K.block(nz, 0, nl, nz) = G;

  const Vector sol = K.fullPivLu().solve(rhs);

  DenseKktSolution out;
  out.residual = (K * sol - rhs).lpNorm<Eigen::Infinity>();
  for (int t = 0; t < T; ++t) {
    const Vector tau = sol.segment(t * nt, nt);
    out.traj.x.push_back(tau.head(n));
    out.traj.u.push_back(tau.tail(nt - n));
    out.duals.lambda.push_back(sol.segment(nz + t * n, n));
  }
  return out;
}

Vector boxqp_enumerate(const BoxQp& qp) {
  const int k = static_cast<int>(qp.p.size());
  int patterns = 1;
  for (int i = 0; i < k; ++i) patterns *= 3;

  Vector best;
  double best_value = std::numeric_limits<double>::infinity();
  for (int code = 0; code < patterns; ++code) {
    // state 0: at lower, 1: free, 2: at upper
    std::vector<int> state(k);
    int c = code;
    bool usable = true;
    for (int i = 0; i < k; ++i) {
      state[i] = c % 3;
      c /= 3;
      if (state[i] == 0 && !std::isfinite(qp.lower[i])) usable = false;
      if (state[i] == 2 && !std::isfinite(qp.upper[i])) usable = false;
    }
    if (!usable) continue;

    Vector x = Vector::Zero(k);
    std::vector<int> free;
    for (int i = 0; i < k; ++i) {
      if (state[i] == 0) x[i] = qp.lower[i];
      else if (state[i] == 2) x[i] = qp.upper[i];
      else free.push_back(i);
    }
    if (!free.empty()) {
      const int nf = static_cast<int>(free.size());
      Matrix Qff(nf, nf);
      Vector r(nf);
      for (int a = 0; a < nf; ++a) {
        r[a] = -qp.p[free[a]];
        for (int i = 0; i < k; ++i) {
          if (state[i] != 1) r[a] -= qp.Q(free[a], i) * x[i];
        }
        for (int b = 0; b < nf; ++b) Qff(a, b) = qp.Q(free[a], free[b]);
      }
      const Vector xf = Qff.colPivHouseholderQr().solve(r);
      for (int a = 0; a < nf; ++a) x[free[a]] = xf[a];
    }
    bool feasible = true;
    for (int i = 0; i < k; ++i) {
      if (x[i] < qp.lower[i] - 1e-12 || x[i] > qp.upper[i] + 1e-12) feasible = false;
    }
    if (!feasible) continue;
    const double value = 0.5 * x.dot(qp.Q * x) + qp.p.dot(x);
    if (value < best_value) {
      best_value = value;
      best = x;
    }
  }
  return best;
}

BoxQp condensed_qp(const LqrProblem& problem, const Vector& lower,
                   const Vector& upper) {
  const int n = problem.dims.n_state;
  const int m = problem.dims.n_ctrl;
  const int T = problem.dims.horizon;
  const int nu = T * m;
  // x_t = a + B U, tau_t = alpha + Gamma U.
  Vector a = problem.x_init;
  Matrix B = Matrix::Zero(n, nu);
  BoxQp qp{Matrix::Zero(nu, nu), Vector::Zero(nu), Vector(nu), Vector(nu)};
  for (int t = 0; t < T; ++t) {
    Vector alpha = Vector::Zero(n + m);
    alpha.head(n) = a;
    Matrix gamma = Matrix::Zero(n + m, nu);
    gamma.topRows(n) = B;
    gamma.block(n, t * m, m, m) = Matrix::Identity(m, m);
    const Matrix Ct = 0.5 * (problem.C[t] + problem.C[t].transpose());
    qp.Q += gamma.transpose() * Ct * gamma;
    qp.p += gamma.transpose() * (Ct * alpha + problem.c[t]);
    qp.lower.segment(t * m, m) = lower;
    qp.upper.segment(t * m, m) = upper;
    const Matrix Fx = problem.F[t].leftCols(n);
    const Matrix Fu = problem.F[t].rightCols(m);
    a = (Fx * a + problem.f[t]).eval();
    B = (Fx * B).eval();
    B.middleCols(t * m, m) += Fu;
  }
  qp.Q = 0.5 * (qp.Q + qp.Q.transpose()).eval();
  return qp;
}

MpcProblem mpc_problem_from_lqr(const LqrProblem& problem, const Vector& lower,
                                const Vector& upper) {
  MpcProblem mp;
  mp.dims = problem.dims;
  const std::vector<Matrix> C = problem.C;
  const std::vector<Vector> c = problem.c;
  mp.cost.value = [C, c](const Vector& tau, int t) {
    return 0.5 * tau.dot(C[t] * tau) + c[t].dot(tau);
  };
  mp.cost.expand = [C, c](const Vector& tau, int t) {
    const Matrix H = 0.5 * (C[t] + C[t].transpose());
    return QuadraticExpansion{H, H * tau + c[t]};
  };
  const int n = problem.dims.n_state;
  const Matrix F = problem.F[0];
  const Vector f = problem.f[0];
  mp.dynamics.step = [F, f, n](const Vector& x, const Vector& u) -> Vector {
    return F.leftCols(n) * x + F.rightCols(F.cols() - n) * u + f;
  };
  mp.dynamics.jacobian = [F](const Vector&, const Vector&) -> Matrix { return F; };
  mp.dynamics.curvature = [F](const Vector&, const Vector&, const Vector&) -> Matrix {
    return Matrix::Zero(F.cols(), F.cols());
  };
  mp.u_lower = lower;
  mp.u_upper = upper;
  mp.x_init = problem.x_init;
  return mp;
}

Matrix random_pd(std::mt19937_64& rng, int n, double lo, double hi) {
  const Matrix a = random_matrix(rng, n, n);
  const Eigen::HouseholderQR<Matrix> qr(a);
  const Matrix q = qr.householderQ();
  std::uniform_real_distribution<double> eig(lo, hi);
  Vector d(n);
  for (int i = 0; i < n; ++i) d[i] = eig(rng);
  Matrix m = q * d.asDiagonal() * q.transpose();
  return 0.5 * (m + m.transpose());
}

Matrix random_matrix(std::mt19937_64& rng, int rows, int cols, double scale) {
  std::normal_distribution<double> normal(0.0, scale);
  Matrix m(rows, cols);
  for (int j = 0; j < cols; ++j) {
    for (int i = 0; i < rows; ++i) m(i, j) = normal(rng);
  }
  return m;
}

Vector random_vector(std::mt19937_64& rng, int n, double scale) {
  return random_matrix(rng, n, 1, scale).col(0);
}

LqrProblem random_lqr_problem(std::mt19937_64& rng, const Dims& dims) {
  LqrProblem p = LqrProblem::zeros(dims);
  const int n = dims.n_state;
  for (int t = 0; t < dims.horizon; ++t) {
    p.C[t] = random_pd(rng, dims.n_tau());
    p.c[t] = random_vector(rng, dims.n_tau());
    p.F[t] = random_matrix(rng, n, dims.n_tau(), 0.5);
    p.F[t].leftCols(n) += Matrix::Identity(n, n);
    p.f[t] = random_vector(rng, n, 0.5);
  }
  p.x_init = random_vector(rng, n);
  return p;
}

namespace {

// Perturbs every entry of each matrix in `field` in turn.
template <typename Seq>
Vector fd_over(Seq& field, const std::function<double()>& value, double h) {
  std::vector<double> out;
  for (auto& m : field) {
    for (Eigen::Index i = 0; i < m.size(); ++i) {
      const double keep = m.data()[i];
      m.data()[i] = keep + h;
      const double up = value();
      m.data()[i] = keep - h;
      const double down = value();
      m.data()[i] = keep;
      out.push_back((up - down) / (2.0 * h));
    }
  }
  return Eigen::Map<Vector>(out.data(), static_cast<Eigen::Index>(out.size()));
}

}  // namespace

LqrNumericGradients numeric_lqr_gradients(
    const LqrProblem& problem,
    const std::function<double(const Trajectory&)>& loss, double h) {
  LqrProblem p = problem;
  const std::function<double()> value = [&] { return loss(lqr_solve(p).traj); };
  LqrNumericGradients g;
  g.C = fd_over(p.C, value, h);
  g.c = fd_over(p.c, value, h);
  g.F = fd_over(p.F, value, h);
  g.f = fd_over(p.f, value, h);
  std::vector<double> dx;
  for (Eigen::Index i = 0; i < p.x_init.size(); ++i) {
    const double keep = p.x_init[i];
    p.x_init[i] = keep + h;
    const double up = value();
    p.x_init[i] = keep - h;
    const double down = value();
    p.x_init[i] = keep;
    dx.push_back((up - down) / (2.0 * h));
  }
  g.x_init = Eigen::Map<Vector>(dx.data(), static_cast<Eigen::Index>(dx.size()));
  return g;
}

double central_difference(const std::function<double(const Vector&)>& f,
                          const Vector& x, Eigen::Index i, double h) {
  Vector xp = x;
  Vector xm = x;
  xp[i] += h;
  xm[i] -= h;
  return (f(xp) - f(xm)) / (2.0 * h);
}

Vector numeric_gradient(const std::function<double(const Vector&)>& f,
                        const Vector& x, double h) {
  Vector g(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    g[i] = central_difference(f, x, i, h * std::max(1.0, std::abs(x[i])));
  }
  return g;
}

double relative_error(const Matrix& a, const Matrix& b, double floor) {
  return (a - b).norm() / std::max(b.norm(), floor);
}

Vector flatten(const std::vector<Matrix>& ms) {
  Eigen::Index total = 0;
  for (const Matrix& m : ms) total += m.size();
  Vector out(total);
  Eigen::Index at = 0;
  for (const Matrix& m : ms) {
    out.segment(at, m.size()) = m.reshaped();
    at += m.size();
  }
  return out;
}

Vector flatten(const std::vector<Vector>& vs) {
  std::vector<Matrix> ms(vs.begin(), vs.end());
  return flatten(ms);
}

}  // namespace diffmpc::testing
