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

#include "diffmpc/lqr_diff.h"

#include <gtest/gtest.h>

#include <random>

#include "oracles.h"

namespace diffmpc {
namespace {

using testing::flatten;
using testing::numeric_lqr_gradients;
using testing::relative_error;

// l = 1/2 sum_t ||u_t||^2 + r' tau.
struct QuadraticLoss {
  int n_state;
  std::vector<Vector> r;

  double operator()(const Trajectory& traj) const {
    double l = 0.0;
    for (int t = 0; t < traj.horizon(); ++t) {
      l += 0.5 * traj.u[t].squaredNorm() + r[t].dot(traj.tau(t));
    }
    return l;
  }
  std::vector<Vector> grad(const Trajectory& traj) const {
    std::vector<Vector> g;
    for (int t = 0; t < traj.horizon(); ++t) {
      Vector gt = r[t];
      gt.tail(traj.u[t].size()) += traj.u[t];
      g.push_back(gt);
    }
    return g;
  }
};

void expect_matches_fd(const LqrProblem& p, const QuadraticLoss& loss, double tol) {
  const LqrResult fwd = lqr_solve(p);
  const Duals duals = lqr_duals(p, fwd.traj);
  const LqrGradients g = lqr_backward(p, fwd.traj, duals, loss.grad(fwd.traj), fwd.cache);
  const auto fd = numeric_lqr_gradients(p, loss, 1e-5);
  EXPECT_LE(relative_error(flatten(g.dC), fd.C), tol);
  EXPECT_LE(relative_error(flatten(g.dc), fd.c), tol);
  EXPECT_LE(relative_error(flatten(g.dF), fd.F), tol);
  EXPECT_LE(relative_error(flatten(g.df), fd.f), tol);
  EXPECT_LE(relative_error(g.dx_init, fd.x_init), tol);
}

TEST(LqrBackward, ZeroUpstreamGradientGivesZero) {
  std::mt19937_64 rng(2);
  const LqrProblem p = testing::random_lqr_problem(rng, Dims{2, 2, 3});
  const LqrResult fwd = lqr_solve(p);
  const Duals duals = lqr_duals(p, fwd.traj);
  const std::vector<Vector> zero(3, Vector::Zero(4));
  const LqrGradients g = lqr_backward(p, fwd.traj, duals, zero, fwd.cache);
  for (int t = 0; t < 3; ++t) {
    EXPECT_EQ(inf_norm(g.dC[t]), 0.0);
    EXPECT_EQ(inf_norm(g.dc[t]), 0.0);
    EXPECT_EQ(inf_norm(g.dF[t]), 0.0);
    EXPECT_EQ(inf_norm(g.df[t]), 0.0);
    EXPECT_EQ(inf_norm(g.d_lambda[t]), 0.0);
  }
  EXPECT_EQ(inf_norm(g.dx_init), 0.0);
}

TEST(LqrBackward, ScalarTwoStepMatchesFiniteDifferences) {
  LqrProblem p = LqrProblem::zeros(Dims{1, 1, 2});
  for (int t = 0; t < 2; ++t) {
    p.C[t] = Matrix::Identity(2, 2);
    p.F[t] = Matrix{{1.0, 1.0}};
  }
  p.x_init = Vector{{1.0}};
  const QuadraticLoss loss{1, std::vector<Vector>(2, Vector::Zero(2))};
  expect_matches_fd(p, loss, 1e-4);
}

TEST(LqrBackward, RandomProblemsMatchFiniteDifferences) {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 4; ++trial) {
    const Dims dims{1 + trial % 3, 1 + trial % 2, 2 + trial};
    const LqrProblem p = testing::random_lqr_problem(rng, dims);
    QuadraticLoss loss{dims.n_state, {}};
    for (int t = 0; t < dims.horizon; ++t) {
      loss.r.push_back(testing::random_vector(rng, dims.n_tau()));
    }
    expect_matches_fd(p, loss, 1e-4);
  }
}

TEST(LqrBackward, LinearTermGradientIsDifferentialTrajectory) {
  std::mt19937_64 rng(4);
  const LqrProblem p = testing::random_lqr_problem(rng, Dims{3, 2, 4});
  const LqrResult fwd = lqr_solve(p);
  std::vector<Vector> grad_tau;
  for (int t = 0; t < 4; ++t) grad_tau.push_back(testing::random_vector(rng, 5));
  const LqrGradients g = lqr_backward(p, fwd.traj, lqr_duals(p, fwd.traj), grad_tau, fwd.cache);
  for (int t = 0; t < 4; ++t) EXPECT_EQ(g.dc[t], g.d_tau[t]);
  EXPECT_EQ(g.dF.back().norm(), 0.0);
  EXPECT_EQ(g.df.back().norm(), 0.0);
  for (const Matrix& dC : g.dC) EXPECT_EQ(dC, dC.transpose());
}

TEST(LqrBackward, CachedAndFreshAgree) {
  std::mt19937_64 rng(8);
  const LqrProblem p = testing::random_lqr_problem(rng, Dims{2, 1, 5});
  const LqrResult fwd = lqr_solve(p);
  const Duals duals = lqr_duals(p, fwd.traj);
  std::vector<Vector> grad_tau;
  for (int t = 0; t < 5; ++t) grad_tau.push_back(testing::random_vector(rng, 3));
  const LqrGradients a = lqr_backward(p, fwd.traj, duals, grad_tau, fwd.cache);
  const LqrGradients b = lqr_backward_fresh(p, fwd.traj, duals, grad_tau);
  EXPECT_LE((flatten(a.dC) - flatten(b.dC)).norm(), 1e-12);
  EXPECT_LE((flatten(a.dF) - flatten(b.dF)).norm(), 1e-12);
  EXPECT_LE((a.dx_init - b.dx_init).norm(), 1e-12);
}

TEST(DifferentialProblem, ReplacesLinearTermsAndOffsets) {
  std::mt19937_64 rng(6);
  const LqrProblem p = testing::random_lqr_problem(rng, Dims{2, 1, 3});
  std::vector<Vector> grad_tau(3, Vector::Ones(3));
  const LqrProblem d = differential_problem(p, grad_tau);
  for (int t = 0; t < 3; ++t) {
    EXPECT_EQ(d.C[t], p.C[t]);
    EXPECT_EQ(d.F[t], p.F[t]);
    EXPECT_EQ(d.c[t], grad_tau[t]);
    EXPECT_EQ(d.f[t], Vector::Zero(2));
  }
  EXPECT_EQ(d.x_init, Vector::Zero(2));
  EXPECT_THROW(differential_problem(p, std::vector<Vector>(2, Vector::Ones(3))),
               DimensionError);
}

}  // namespace
}  // namespace diffmpc
