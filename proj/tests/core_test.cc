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

#include <gtest/gtest.h>

#include <Eigen/LU>

namespace diffmpc {
namespace {

TEST(AssembleTau, ConcatenatesStateThenControl) {
  EXPECT_EQ(assemble_tau(Vector{{1.0, 2.0}}, Vector{{3.0}}), (Vector{{1.0, 2.0, 3.0}}));
  EXPECT_EQ(assemble_tau(Vector::Zero(2), Vector::Zero(1)), Vector::Zero(3));
  EXPECT_EQ(assemble_tau(Vector{{-1.0}}, Vector{{2.0, 5.0}}), (Vector{{-1.0, 2.0, 5.0}}));
}

TEST(AssembleTau, ChecksDims) {
  const Dims dims{2, 1, 3};
  EXPECT_NO_THROW(assemble_tau(dims, Vector::Zero(2), Vector::Zero(1)));
  EXPECT_THROW(assemble_tau(dims, Vector::Zero(3), Vector::Zero(1)), DimensionError);
  EXPECT_THROW(assemble_tau(dims, Vector::Zero(2), Vector::Zero(2)), DimensionError);
}

TEST(SplitTau, InvertsAssemble) {
  const Vector tau{{4.0, -1.0, 0.5, 7.0}};
  Vector x, u;
  split_tau(tau, 3, &x, &u);
  EXPECT_EQ(x, (Vector{{4.0, -1.0, 0.5}}));
  EXPECT_EQ(u, (Vector{{7.0}}));
  EXPECT_EQ(assemble_tau(x, u), tau);
}

TEST(SolvePd, IdentityAndScalar) {
  const Matrix b{{3.0}, {4.0}};
  EXPECT_EQ(solve_pd(Matrix::Identity(2, 2), b), b);
  EXPECT_NEAR(solve_pd(Matrix{{2.0}}, Matrix{{6.0}})(0, 0), 3.0, 1e-15);
}

TEST(SolvePd, MatchesDirectInverse) {
  const Matrix a{{4.0, 1.0}, {1.0, 3.0}};
  const Matrix b{{1.0}, {2.0}};
  const Matrix x = solve_pd(a, b);
  EXPECT_LE((a * x - b).norm(), 1e-14);
  EXPECT_LE((x - a.inverse() * b).norm(), 1e-14);
}

TEST(SolvePd, RejectsIndefinite) {
  const Matrix a{{1.0, 2.0}, {2.0, 1.0}};
  EXPECT_THROW(solve_pd(a, Matrix::Identity(2, 2)), NotPositiveDefinite);
  try {
    PdFactorization f(a, 4);
    FAIL() << "expected NotPositiveDefinite";
  } catch (const NotPositiveDefinite& e) {
    EXPECT_EQ(e.index(), 4);
  }
  EXPECT_THROW(solve_pd(Matrix::Identity(2, 2), Matrix::Identity(3, 3)), DimensionError);
}

TEST(PdFactorization, ReusesFactorForSeveralRhs) {
  const Matrix a{{5.0, 2.0, 0.0}, {2.0, 4.0, 1.0}, {0.0, 1.0, 3.0}};
  const PdFactorization f(a);
  EXPECT_EQ(f.size(), 3);
  const Vector b1{{1.0, 0.0, -1.0}};
  const Vector b2{{0.5, 2.0, 3.0}};
  EXPECT_LE((a * f.solve(b1) - b1).norm(), 1e-14);
  EXPECT_LE((a * f.solve(b2) - b2).norm(), 1e-14);
}

TEST(LqrProblem, ZerosValidates) {
  const Dims dims{2, 1, 4};
  LqrProblem p = LqrProblem::zeros(dims);
  EXPECT_NO_THROW(p.validate());
  EXPECT_EQ(p.C.size(), 4u);
  EXPECT_EQ(p.F[0].rows(), 2);
  EXPECT_EQ(p.F[0].cols(), 3);
}

TEST(LqrProblem, ValidateRejectsShapeMismatch) {
  LqrProblem p = LqrProblem::zeros(Dims{2, 1, 3});
  p.C[1] = Matrix::Zero(2, 2);
  EXPECT_THROW(p.validate(), DimensionError);
  p = LqrProblem::zeros(Dims{2, 1, 3});
  p.f.pop_back();
  EXPECT_THROW(p.validate(), DimensionError);
  p = LqrProblem::zeros(Dims{2, 1, 3});
  p.x_init = Vector::Zero(3);
  EXPECT_THROW(p.validate(), DimensionError);
  EXPECT_THROW((Dims{0, 1, 1}.validate()), DimensionError);
}

TEST(LqrProblem, SymmetrizeAverages) {
  LqrProblem p = LqrProblem::zeros(Dims{1, 1, 1});
  p.C[0] = Matrix{{1.0, 4.0}, {0.0, 2.0}};
  p.symmetrize();
  EXPECT_EQ(p.C[0], (Matrix{{1.0, 2.0}, {2.0, 2.0}}));
}

TEST(InfNorm, EmptyIsZero) {
  EXPECT_EQ(inf_norm(Matrix()), 0.0);
  EXPECT_EQ(inf_norm(Matrix{{1.0, -3.0}}), 3.0);
}

}  // namespace
}  // namespace diffmpc
