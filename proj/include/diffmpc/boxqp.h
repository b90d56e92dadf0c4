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

#ifndef DIFFMPC_BOXQP_H_
#define DIFFMPC_BOXQP_H_

#include <stdexcept>
#include <vector>

#include "diffmpc/core.h"

namespace diffmpc {

// min 1/2 x' Q x + p' x  s.t.  lower <= x <= upper.
// Bounds may be +/- infinity.
struct BoxQp {
  Matrix Q;
  Vector p;
  Vector lower;
  Vector upper;

  void validate() const;
  double objective(const Vector& x) const;
};

struct BoxQpOptions {
  int max_iters = 100;
  double grad_tol = 1e-8;   // free-gradient inf-norm
  double step_tol = 1e-10;  // Newton-step inf-norm
  double armijo = 0.1;
  double backtrack = 0.5;
  int max_line_search = 30;
};

struct BoxQpSolution {
  Vector x_star;
  // clamped[i]: x_i sits at a bound and the gradient pushes outward.
  std::vector<bool> clamped;
  std::vector<int> free_idx;
  // Cholesky of Q restricted to the free indices (empty if none are free).
  PdFactorization free_factor;
  int iters = 0;

  bool has_free() const { return !free_idx.empty(); }
};

class BoxQpError : public std::runtime_error {
 public:
  BoxQpError(const std::string& what, Vector last_iterate, double residual)
      : std::runtime_error(what),
        last_iterate_(std::move(last_iterate)),
        residual_(residual) {}
  const Vector& last_iterate() const { return last_iterate_; }
  double residual() const { return residual_; }

 private:
  Vector last_iterate_;
  double residual_;
};

// Projected-Newton solve. x_warm is clipped into the box before use.
// Throws BoxQpError when the iteration cap is hit and NotPositiveDefinite
// when the free block of Q cannot be factored.
BoxQpSolution boxqp_solve(const BoxQp& qp, const Vector& x_warm,
                          const BoxQpOptions& options = {});

struct BoxQpGradients {
  Matrix dQ;
  Vector dp;
  Vector d_x;
};

// Implicit differentiation with the active set held fixed:
// d_x,free = -Q_ff^{-1} grad_x,free and d_x,clamped = 0.
BoxQpGradients boxqp_backward(const BoxQp& qp, const BoxQpSolution& sol,
                              const Vector& grad_x);

// Gradient Q x + p.
Vector boxqp_gradient(const BoxQp& qp, const Vector& x);

}  // namespace diffmpc

#endif  // DIFFMPC_BOXQP_H_
