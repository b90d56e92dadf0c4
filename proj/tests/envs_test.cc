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

#include "diffmpc/envs.h"

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "oracles.h"

namespace diffmpc {
namespace {

// Central-difference Jacobian of a vector map.
Matrix fd_jacobian(const std::function<Vector(const Vector&)>& f, const Vector& z,
                   double h = 1e-6) {
  const Vector f0 = f(z);
  Matrix J(f0.size(), z.size());
  for (Eigen::Index i = 0; i < z.size(); ++i) {
    Vector zp = z, zm = z;
    zp[i] += h;
    zm[i] -= h;
    J.col(i) = (f(zp) - f(zm)) / (2.0 * h);
  }
  return J;
}

Vector on_circle(double th, std::initializer_list<double> rest, bool cart) {
  std::vector<double> v;
  auto it = rest.begin();
  if (cart) {
    v.push_back(*it++);
    v.push_back(*it++);
  }
  v.push_back(std::cos(th));
  v.push_back(std::sin(th));
  v.push_back(*it);
  return Eigen::Map<Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

TEST(Pendulum, UprightAndHangingAreEquilibria) {
  const PendulumParams params;
  const Vector up{{1.0, 0.0, 0.0}};
  EXPECT_LE((pendulum_step(params, up, 0.0) - up).norm(), 1e-15);
  const Vector down{{-1.0, 0.0, 0.0}};
  EXPECT_LE((pendulum_step(params, down, 0.0) - down).norm(), 1e-15);
}

TEST(Pendulum, UprightIsUnstable) {
  const PendulumParams params;
  Vector x = on_circle(0.05, {0.0}, false);
  for (int i = 0; i < 20; ++i) x = pendulum_step(params, x, 0.0);
  EXPECT_GT(std::abs(std::atan2(x[1], x[0])), 0.05);
}

TEST(Pendulum, StaysOnUnitCircle) {
  PendulumParams params;
  params.damping = 0.1;
  params.wind = 0.5;
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> th(-std::numbers::pi, std::numbers::pi);
  for (int i = 0; i < 10; ++i) {
    const Vector x = on_circle(th(rng), {0.7}, false);
    const Vector y = pendulum_step(params, x, 1.3);
    EXPECT_NEAR(y.head(2).norm(), 1.0, 1e-14);
  }
}

TEST(Pendulum, JacobiansMatchFiniteDifferences) {
  PendulumParams params;
  params.damping = 0.1;
  params.wind = 0.5;
  std::mt19937_64 rng(2);
  for (int i = 0; i < 5; ++i) {
    const Vector x = on_circle(1.0 + i, {0.3 * i - 0.5}, false);
    const double u = 0.4 * i - 1.0;
    const auto f = [&](const Vector& z) { return pendulum_step(params, z.head(3), z[3]); };
    EXPECT_LE(testing::relative_error(pendulum_jacobian(params, x, u),
                                      fd_jacobian(f, assemble_tau(x, Vector{{u}}))),
              1e-4);
    const auto g = [&](const Vector& th) {
      PendulumParams q = params;
      q.mass = th[0];
      q.length = th[1];
      q.gravity = th[2];
      return pendulum_step(q, x, u);
    };
    EXPECT_LE(testing::relative_error(
                  pendulum_param_jacobian(params, x, u),
                  fd_jacobian(g, Vector{{params.mass, params.length, params.gravity}})),
              1e-4);
  }
}

TEST(Cartpole, BalancedRestIsEquilibrium) {
  const CartpoleParams params;
  const Vector x{{0.0, 0.0, 1.0, 0.0, 0.0}};
  EXPECT_LE((cartpole_step(params, x, 0.0) - x).norm(), 1e-15);
}

TEST(Cartpole, PushAtRestUsesPreStepVelocity) {
  const CartpoleParams params;
  const Vector x{{0.2, 0.0, 1.0, 0.0, 0.0}};
  const Vector y = cartpole_step(params, x, 1.0);
  EXPECT_GT(y[1], 0.0);
  EXPECT_EQ(y[0], 0.2);
  // Pushing the cart right tips an upright pole left.
  EXPECT_LT(y[4], 0.0);
}

TEST(Cartpole, JacobiansMatchFiniteDifferences) {
  const CartpoleParams params;
  for (int i = 0; i < 5; ++i) {
    const Vector x = on_circle(0.7 * i - 1.5, {0.1 * i, -0.2, 0.4 - 0.15 * i}, true);
    const double u = 1.5 - 0.6 * i;
    const auto f = [&](const Vector& z) { return cartpole_step(params, z.head(5), z[5]); };
    EXPECT_LE(testing::relative_error(cartpole_jacobian(params, x, u),
                                      fd_jacobian(f, assemble_tau(x, Vector{{u}}))),
              1e-4);
    const auto g = [&](const Vector& th) {
      CartpoleParams q = params;
      q.cart_mass = th[0];
      q.pole_mass = th[1];
      q.gravity = th[2];
      q.length = th[3];
      return cartpole_step(q, x, u);
    };
    const Vector th{{params.cart_mass, params.pole_mass, params.gravity, params.length}};
    EXPECT_LE(testing::relative_error(cartpole_param_jacobian(params, x, u), fd_jacobian(g, th)),
              1e-4);
  }
}

TEST(GoalCost, UnitWeightsAtOrigin) {
  const GoalCost cost{Vector::Ones(3), Vector::Zero(3)};
  const QuadraticExpansion e = goal_cost_expansion(cost, Vector::Zero(3));
  EXPECT_EQ(e.hessian, 2.0 * Matrix::Identity(3, 3));
  EXPECT_EQ(e.gradient, Vector::Zero(3));
}

TEST(GoalCost, ZeroWeightsAreDegenerate) {
  const GoalCost cost{Vector::Zero(2), Vector{{1.0, 2.0}}};
  const QuadraticExpansion e = goal_cost_expansion(cost, Vector{{3.0, -1.0}});
  EXPECT_EQ(e.hessian, Matrix::Zero(2, 2));
  EXPECT_EQ(e.gradient, Vector::Zero(2));
}

TEST(GoalCost, ExpansionReproducesValue) {
  std::mt19937_64 rng(4);
  const GoalCost cost{testing::random_vector(rng, 4), testing::random_vector(rng, 4)};
  const Vector tau0 = testing::random_vector(rng, 4);
  const QuadraticExpansion e = goal_cost_expansion(cost, tau0);
  const double c0 = goal_cost_value(cost, tau0);
  for (int i = 0; i < 3; ++i) {
    const Vector tau = testing::random_vector(rng, 4);
    const Vector d = tau - tau0;
    EXPECT_NEAR(c0 + e.gradient.dot(d) + 0.5 * d.dot(e.hessian * d), goal_cost_value(cost, tau),
                1e-12 * std::max(1.0, c0));
  }
}

TEST(GoalCost, AdjointMatchesFiniteDifferences) {
  std::mt19937_64 rng(5);
  const int nt = 4;
  GoalCost cost{testing::random_vector(rng, nt), testing::random_vector(rng, nt)};
  const Vector tau = testing::random_vector(rng, nt);
  const Matrix dC = [&] {
    const Matrix a = testing::random_matrix(rng, nt, nt);
    return Matrix(0.5 * (a + a.transpose()));
  }();
  const Vector dc = testing::random_vector(rng, nt);
  const CostParamAdjoint adj = goal_cost_adjoint(cost);
  ASSERT_EQ(adj.num_params, 2 * nt);
  const Vector analytic = adj.contract(tau, 0, dC, dc);
  // <dC, H(theta)> + <dc, p(theta) - H(theta) tau> as a function of theta.
  const auto phi = [&](const Vector& theta) {
    const GoalCost c{theta.head(nt), theta.tail(nt)};
    const QuadraticExpansion e = goal_cost_expansion(c, tau);
    return (dC.array() * e.hessian.array()).sum() + dc.dot(e.gradient - e.hessian * tau);
  };
  Vector theta(2 * nt);
  theta << cost.weights, cost.goal;
  EXPECT_LE(testing::relative_error(analytic, testing::numeric_gradient(phi, theta, 1e-6)), 1e-7);
  // Goal part in closed form: dp/dgoal = -2 diag(w^2), dH/dgoal = 0.
  const Vector w2 = cost.weights.array().square();
  EXPECT_LE((analytic.tail(nt) - (-2.0 * w2.array() * dc.array()).matrix()).norm(), 1e-12);
}

TEST(Env, NamesRoundTrip) {
  for (EnvKind k : {EnvKind::kLinear, EnvKind::kPendulum, EnvKind::kCartpole}) {
    EXPECT_EQ(env_kind_from_name(env_name(k)), k);
  }
  EXPECT_EQ(env_name(EnvKind::kLinear), "lqr");
  EXPECT_THROW(env_kind_from_name("acrobot"), std::invalid_argument);
}

TEST(Env, DefaultsAndDims) {
  const Env pend = default_env(EnvKind::kPendulum);
  EXPECT_EQ(pend.dims().n_state, 3);
  EXPECT_EQ(pend.dims().n_ctrl, 1);
  EXPECT_EQ(pend.horizon, 20);
  EXPECT_EQ(pend.u_upper[0], 2.0);
  const Env cart = default_env(EnvKind::kCartpole);
  EXPECT_EQ(cart.dims().n_state, 5);
  const Env lin = default_env(EnvKind::kLinear);
  EXPECT_EQ(lin.dims().n_state, 3);
  EXPECT_EQ(lin.dims().n_ctrl, 3);
  EXPECT_EQ(lin.horizon, 5);
  // 1/2 ||tau||^2: the expansion Hessian is the identity.
  EXPECT_LE((goal_cost_expansion(lin.cost, Vector::Zero(6)).hessian - Matrix::Identity(6, 6))
                .norm(),
            1e-15);
}

TEST(Env, DynParamsRoundTrip) {
  std::mt19937_64 rng(6);
  Env lin = default_env(EnvKind::kLinear);
  lin.linear.A = testing::random_matrix(rng, 3, 3);
  lin.linear.B = testing::random_matrix(rng, 3, 3);
  const Vector theta = dyn_params(lin);
  ASSERT_EQ(theta.size(), 18);
  EXPECT_EQ(theta[1], lin.linear.A(0, 1));  // row-major
  const Env back = with_dyn_params(lin, theta);
  EXPECT_EQ(back.linear.A, lin.linear.A);
  EXPECT_EQ(back.linear.B, lin.linear.B);
  EXPECT_EQ(dyn_param_names(lin).size(), 18u);

  Env pend = default_env(EnvKind::kPendulum);
  EXPECT_EQ(dyn_params(pend), (Vector{{1.0, 1.0, 10.0}}));
  EXPECT_EQ(with_dyn_params(pend, Vector{{2.0, 3.0, 4.0}}).pendulum.length, 3.0);
  EXPECT_THROW(with_dyn_params(pend, Vector::Zero(2)), DimensionError);
  EXPECT_EQ(dyn_params(default_env(EnvKind::kCartpole)).size(), 4);
}

TEST(Env, ParamJacobianMatchesFiniteDifferences) {
  for (EnvKind k : {EnvKind::kLinear, EnvKind::kPendulum, EnvKind::kCartpole}) {
    std::mt19937_64 rng(7);
    Env env = default_env(k);
    if (k == EnvKind::kLinear) {
      env.linear.A = testing::random_matrix(rng, 3, 3);
      env.linear.B = testing::random_matrix(rng, 3, 3);
    }
    const Vector x = sample_initial_state(env, rng);
    const Vector u = testing::random_vector(rng, env.dims().n_ctrl);
    const DynamicsFn dyn = make_dynamics(env);
    const auto f = [&](const Vector& theta) {
      return make_dynamics(with_dyn_params(env, theta)).step(x, u);
    };
    EXPECT_LE(testing::relative_error(dyn_param_jacobian(env, x, u), fd_jacobian(f, dyn_params(env))),
              1e-4)
        << env_name(k);
    const auto g = [&](const Vector& z) {
      return dyn.step(z.head(x.size()), z.tail(u.size()));
    };
    EXPECT_LE(testing::relative_error(dyn.jacobian(x, u), fd_jacobian(g, assemble_tau(x, u))),
              1e-4)
        << env_name(k);
  }
}

TEST(Env, InitialStateSampler) {
  std::mt19937_64 rng(8);
  const Env pend = default_env(EnvKind::kPendulum);
  const Env cart = default_env(EnvKind::kCartpole);
  for (int i = 0; i < 50; ++i) {
    const Vector p = sample_initial_state(pend, rng);
    EXPECT_NEAR(p.head(2).norm(), 1.0, 1e-14);
    EXPECT_LE(std::abs(p[2]), 1.0);
    const Vector c = sample_initial_state(cart, rng);
    EXPECT_LE(std::abs(c[0]), 0.5);
    EXPECT_LE(std::abs(c[1]), 0.5);
    EXPECT_NEAR(c.segment(2, 2).norm(), 1.0, 1e-14);
    EXPECT_LE(std::abs(c[4]), 0.5);
  }
}

TEST(Env, MpcProblemCarriesBoundsAndHorizon) {
  const Env env = default_env(EnvKind::kCartpole);
  const MpcProblem p = make_mpc_problem(env, Vector{{0.0, 0.0, 1.0, 0.0, 0.0}});
  EXPECT_NO_THROW(p.validate());
  EXPECT_EQ(p.dims.horizon, 20);
  EXPECT_EQ(p.u_lower[0], -2.0);
  EXPECT_NEAR(p.cost.value(Vector{{0.0, 0.0, 1.0, 0.0, 0.0, 1.0}}, 0), 0.1, 1e-15);
}

}  // namespace
}  // namespace diffmpc
