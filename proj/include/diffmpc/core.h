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

#ifndef DIFFMPC_CORE_H_
#define DIFFMPC_CORE_H_

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Core>

namespace diffmpc {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

// Raised when arguments disagree on shape.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Raised when a matrix that must be symmetric positive definite is not.
// `index` is the timestep (or -1 when not applicable).
class NotPositiveDefinite : public std::runtime_error {
 public:
  NotPositiveDefinite(const std::string& what, int index)
      : std::runtime_error(what), index_(index) {}
  int index() const { return index_; }

 private:
  int index_;
};

// Problem dimensions. Every joint vector tau_t = [x_t; u_t] has length
// n_tau() with the state block first.
struct Dims {
  int n_state = 1;
  int n_ctrl = 1;
  int horizon = 1;

  int n_tau() const { return n_state + n_ctrl; }
  void validate() const;
};

// Finite-horizon LQR problem
//   min sum_t 1/2 tau_t' C_t tau_t + c_t' tau_t
//   s.t. x_0 = x_init, x_{t+1} = F_t tau_t + f_t.
// Timesteps are zero-based. F.back() and f.back() are stored for shape
// uniformity and never read.
struct LqrProblem {
  Dims dims;
  std::vector<Matrix> C;
  std::vector<Vector> c;
  std::vector<Matrix> F;
  std::vector<Vector> f;
  Vector x_init;

  // Throws DimensionError on any shape mismatch.
  void validate() const;
  // Replaces every C_t by (C_t + C_t') / 2.
  void symmetrize();
  // Zero-initialized problem of the given dimensions.
  static LqrProblem zeros(const Dims& dims);
};

struct Trajectory {
  std::vector<Vector> x;
  std::vector<Vector> u;

  int horizon() const { return static_cast<int>(x.size()); }
  Vector tau(int t) const;
};

// lambda[t] is the multiplier of the constraint that defines x_t:
// lambda[0] belongs to x_0 = x_init, lambda[t] (t >= 1) to
// x_t = F_{t-1} tau_{t-1} + f_{t-1}.
struct Duals {
  std::vector<Vector> lambda;
};

Vector assemble_tau(const Vector& x, const Vector& u);
// Same, checking the block lengths against `dims`.
Vector assemble_tau(const Dims& dims, const Vector& x, const Vector& u);
// Inverse of assemble_tau.
void split_tau(const Vector& tau, int n_state, Vector* x, Vector* u);

// Cholesky factorization of a symmetric positive-definite matrix, kept so
// that later right-hand sides reuse it.
class PdFactorization {
 public:
  PdFactorization() = default;
  // Throws NotPositiveDefinite if `a` is not numerically PD.
  explicit PdFactorization(const Matrix& a, int index = -1);

  Matrix solve(const Matrix& b) const;
  Vector solve(const Vector& b) const;
  Eigen::Index size() const { return llt_.rows(); }
  const Eigen::LLT<Matrix>& llt() const { return llt_; }

 private:
  Eigen::LLT<Matrix> llt_;
};

// Solves A X = B for symmetric positive-definite A.
Matrix solve_pd(const Matrix& a, const Matrix& b);

// Max-abs entry; zero for empty inputs.
double inf_norm(const Matrix& m);

}  // namespace diffmpc

#endif  // DIFFMPC_CORE_H_
