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

#include <array>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include <unsupported/Eigen/AutoDiff>

namespace diffmpc {

namespace {

// Forward-mode scalar; derivative vectors stay on the stack.
using AdDerivative = Eigen::Matrix<double, Eigen::Dynamic, 1, 0, 16, 1>;
using Ad = Eigen::AutoDiffScalar<AdDerivative>;

template <class S>
struct PendulumTerms {
  S mass, length, gravity;
};

// Explicit Euler step. The angle is carried as a (cos, sin) pair that is
// renormalized before use and rotated by dt * omega.
template <class S>
std::array<S, 3> pendulum_equations(const PendulumTerms<S>& p, double damping,
                                    double wind, double dt, const S* x,
                                    const S& u) {
  using std::cos;
  using std::sin;
  using std::sqrt;
  const S r = sqrt(x[0] * x[0] + x[1] * x[1]);
  const S c = x[0] / r;
  const S s = x[1] / r;
  const S omega = x[2];
  const S acc = 3.0 * p.gravity / (2.0 * p.length) * s +
                3.0 * u / (p.mass * p.length * p.length) - damping * omega +
                3.0 * wind / (p.mass * p.length) * c;
  const S dth = dt * omega;
  const S cd = cos(dth);
  const S sd = sin(dth);
  return {c * cd - s * sd, s * cd + c * sd, omega + dt * acc};
}

template <class S>
struct CartpoleTerms {
  S cart_mass, pole_mass, gravity, length;
};

template <class S>
std::array<S, 5> cartpole_equations(const CartpoleTerms<S>& p, double dt,
                                    const S* x, const S& u) {
  using std::cos;
  using std::sin;
  using std::sqrt;
  const S pos = x[0];
  const S vel = x[1];
  const S r = sqrt(x[2] * x[2] + x[3] * x[3]);
  const S c = x[2] / r;
  const S s = x[3] / r;
  const S omega = x[4];
  const S total = p.cart_mass + p.pole_mass;
  const S pml = p.pole_mass * p.length;
  const S temp = (u + pml * omega * omega * s) / total;
  const S th_acc = (p.gravity * s - c * temp) /
                   (p.length * (4.0 / 3.0 - p.pole_mass * c * c / total));
  const S x_acc = temp - pml * th_acc * c / total;
  const S dth = dt * omega;
  const S cd = cos(dth);
  const S sd = sin(dth);
  return {pos + dt * vel, vel + dt * x_acc, c * cd - s * sd, s * cd + c * sd,
          omega + dt * th_acc};
}

// Values and Jacobian of `fn` at `input` with respect to every input entry.
template <int kOut, class Fn>
Matrix ad_jacobian(Fn&& fn, const Vector& input) {
  const Eigen::Index k = input.size();
  std::vector<Ad> args(k);
  for (Eigen::Index i = 0; i < k; ++i) {
    args[i] = Ad(input[i], k, i);
  }
  const std::array<Ad, kOut> out = fn(args);
  Matrix J(kOut, k);
  for (int r = 0; r < kOut; ++r) {
    if (out[r].derivatives().size() == 0) {
      J.row(r).setZero();
    } else {
      J.row(r) = out[r].derivatives().transpose();
    }
  }
  return J;
}

void check_state(const Vector& x, int n, const char* who) {
  if (x.size() != n) {
    throw DimensionError(std::string(who) + ": state has wrong length");
  }
}

// Full Jacobian with respect to [x, u, theta] for the pendulum.
Matrix pendulum_full_jacobian(const PendulumParams& params, const Vector& x,
                              double u) {
  check_state(x, kPendulumStateDim, "pendulum");
  Vector in(7);
  in << x, u, params.mass, params.length, params.gravity;
  return ad_jacobian<3>(
      [&](const std::vector<Ad>& a) {
        const PendulumTerms<Ad> terms{a[4], a[5], a[6]};
        return pendulum_equations<Ad>(terms, params.damping, params.wind,
                                      params.dt, a.data(), a[3]);
      },
      in);
}

Matrix cartpole_full_jacobian(const CartpoleParams& params, const Vector& x,
                              double u) {
  check_state(x, kCartpoleStateDim, "cartpole");
  Vector in(10);
  in << x, u, params.cart_mass, params.pole_mass, params.gravity,
      params.length;
  return ad_jacobian<5>(
      [&](const std::vector<Ad>& a) {
        const CartpoleTerms<Ad> terms{a[6], a[7], a[8], a[9]};
        return cartpole_equations<Ad>(terms, params.dt, a.data(), a[5]);
      },
      in);
}

Vector row_major(const Matrix& m) {
  Vector out(m.size());
  Eigen::Index k = 0;
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) out[k++] = m(i, j);
  }
  return out;
}

}  // namespace

Vector pendulum_step(const PendulumParams& params, const Vector& x, double u) {
  check_state(x, kPendulumStateDim, "pendulum_step");
  const PendulumTerms<double> terms{params.mass, params.length, params.gravity};
  const auto out = pendulum_equations<double>(terms, params.damping,
                                              params.wind, params.dt, x.data(), u);
  return Eigen::Map<const Vector>(out.data(), 3);
}

Matrix pendulum_jacobian(const PendulumParams& params, const Vector& x,
                         double u) {
  return pendulum_full_jacobian(params, x, u).leftCols(4);
}

Matrix pendulum_param_jacobian(const PendulumParams& params, const Vector& x,
                               double u) {
  return pendulum_full_jacobian(params, x, u).rightCols(3);
}

Vector cartpole_step(const CartpoleParams& params, const Vector& x, double u) {
  check_state(x, kCartpoleStateDim, "cartpole_step");
  const CartpoleTerms<double> terms{params.cart_mass, params.pole_mass,
                                    params.gravity, params.length};
  const auto out = cartpole_equations<double>(terms, params.dt, x.data(), u);
  return Eigen::Map<const Vector>(out.data(), 5);
}

Matrix cartpole_jacobian(const CartpoleParams& params, const Vector& x,
                         double u) {
  return cartpole_full_jacobian(params, x, u).leftCols(6);
}

Matrix cartpole_param_jacobian(const CartpoleParams& params, const Vector& x,
                               double u) {
  return cartpole_full_jacobian(params, x, u).rightCols(4);
}

double goal_cost_value(const GoalCost& cost, const Vector& tau) {
  if (tau.size() != cost.weights.size() || tau.size() != cost.goal.size()) {
    throw DimensionError("goal cost: tau has wrong length");
  }
  return (cost.weights.array() * (tau - cost.goal).array()).square().sum();
}

QuadraticExpansion goal_cost_expansion(const GoalCost& cost,
                                       const Vector& tau) {
  if (tau.size() != cost.weights.size() || tau.size() != cost.goal.size()) {
    throw DimensionError("goal cost: tau has wrong length");
  }
  const Vector q = 2.0 * cost.weights.array().square();
  QuadraticExpansion e;
  e.hessian = q.asDiagonal();
  e.gradient = q.cwiseProduct(tau - cost.goal);
  return e;
}

CostFn make_goal_cost(GoalCost cost) {
  CostFn fn;
  fn.value = [cost](const Vector& tau, int) { return goal_cost_value(cost, tau); };
  fn.expand = [cost](const Vector& tau, int) {
    return goal_cost_expansion(cost, tau);
  };
  return fn;
}

CostParamAdjoint goal_cost_adjoint(const GoalCost& cost) {
  const Eigen::Index nt = cost.weights.size();
  CostParamAdjoint adj;
  adj.num_params = static_cast<int>(2 * nt);
  adj.contract = [cost, nt](const Vector&, int, const Matrix& dC,
                            const Vector& dc) {
    // H = 2 diag(q), c = p - H tau = -2 q o goal, with q = w^2.
    Vector out(2 * nt);
    for (Eigen::Index i = 0; i < nt; ++i) {
      const double w = cost.weights[i];
      const double d_q = 2.0 * dC(i, i) - 2.0 * cost.goal[i] * dc[i];
      out[i] = 2.0 * w * d_q;
      out[nt + i] = -2.0 * w * w * dc[i];
    }
    return out;
  };
  return adj;
}

std::string env_name(EnvKind kind) {
  switch (kind) {
    case EnvKind::kLinear:
      return "lqr";
    case EnvKind::kPendulum:
      return "pendulum";
    case EnvKind::kCartpole:
      return "cartpole";
  }
  return "unknown";
}

EnvKind env_kind_from_name(const std::string& name) {
  if (name == "lqr" || name == "linear") return EnvKind::kLinear;
  if (name == "pendulum") return EnvKind::kPendulum;
  if (name == "cartpole") return EnvKind::kCartpole;
  throw std::invalid_argument("unknown environment '" + name + "'");
}

Dims Env::dims() const {
  switch (kind) {
    case EnvKind::kLinear:
      return Dims{static_cast<int>(linear.A.rows()),
                  static_cast<int>(linear.B.cols()), horizon};
    case EnvKind::kPendulum:
      return Dims{kPendulumStateDim, 1, horizon};
    case EnvKind::kCartpole:
      return Dims{kCartpoleStateDim, 1, horizon};
  }
  throw std::logic_error("unreachable");
}

Env default_env(EnvKind kind) {
  Env env;
  env.kind = kind;
  switch (kind) {
    case EnvKind::kLinear: {
      const int n = 3, m = 3;
      env.linear.A = Matrix::Zero(n, n);
      env.linear.B = Matrix::Zero(n, m);
      env.horizon = 5;
      // 1/2 ||tau||^2, i.e. identity C.
      env.cost.weights = Vector::Constant(n + m, std::sqrt(0.5));
      env.cost.goal = Vector::Zero(n + m);
      env.u_lower = Vector::Constant(m, -1.0);
      env.u_upper = Vector::Constant(m, 1.0);
      break;
    }
    case EnvKind::kPendulum: {
      env.horizon = 20;
      Vector w2(4);
      w2 << 1.0, 1.0, 0.1, 0.3;
      env.cost.weights = w2.cwiseSqrt();
      env.cost.goal = Vector::Zero(4);
      env.cost.goal[0] = 1.0;
      env.u_lower = Vector::Constant(1, -2.0);
      env.u_upper = Vector::Constant(1, 2.0);
      break;
    }
    case EnvKind::kCartpole: {
      env.horizon = 20;
      Vector w2(6);
      w2 << 0.1, 0.1, 1.0, 1.0, 0.1, 0.1;
      env.cost.weights = w2.cwiseSqrt();
      env.cost.goal = Vector::Zero(6);
      env.cost.goal[2] = 1.0;
      env.u_lower = Vector::Constant(1, -2.0);
      env.u_upper = Vector::Constant(1, 2.0);
      break;
    }
  }
  return env;
}

DynamicsFn make_dynamics(const Env& env) {
  DynamicsFn fn;
  switch (env.kind) {
    case EnvKind::kLinear: {
      const LinearDyn lin = env.linear;
      Matrix F(lin.A.rows(), lin.A.cols() + lin.B.cols());
      F << lin.A, lin.B;
      fn.step = [lin](const Vector& x, const Vector& u) -> Vector {
        return lin.A * x + lin.B * u;
      };
      fn.jacobian = [F](const Vector&, const Vector&) { return F; };
      fn.curvature = [nt = F.cols()](const Vector&, const Vector&,
                                     const Vector&) -> Matrix {
        return Matrix::Zero(nt, nt);
      };
      break;
    }
    case EnvKind::kPendulum: {
      const PendulumParams p = env.pendulum;
      fn.step = [p](const Vector& x, const Vector& u) {
        return pendulum_step(p, x, u[0]);
      };
      fn.jacobian = [p](const Vector& x, const Vector& u) {
        return pendulum_jacobian(p, x, u[0]);
      };
      break;
    }
    case EnvKind::kCartpole: {
      const CartpoleParams p = env.cartpole;
      fn.step = [p](const Vector& x, const Vector& u) {
        return cartpole_step(p, x, u[0]);
      };
      fn.jacobian = [p](const Vector& x, const Vector& u) {
        return cartpole_jacobian(p, x, u[0]);
      };
      break;
    }
  }
  return fn;
}

Vector dyn_params(const Env& env) {
  switch (env.kind) {
    case EnvKind::kLinear: {
      Vector out(env.linear.A.size() + env.linear.B.size());
      out << row_major(env.linear.A), row_major(env.linear.B);
      return out;
    }
    case EnvKind::kPendulum:
      return Eigen::Vector3d(env.pendulum.mass, env.pendulum.length,
                             env.pendulum.gravity);
    case EnvKind::kCartpole:
      return Eigen::Vector4d(env.cartpole.cart_mass, env.cartpole.pole_mass,
                             env.cartpole.gravity, env.cartpole.length);
  }
  throw std::logic_error("unreachable");
}

Env with_dyn_params(const Env& env, const Vector& theta) {
  Env out = env;
  const Eigen::Index expected = dyn_params(env).size();
  if (theta.size() != expected) {
    throw DimensionError("with_dyn_params: expected " +
                         std::to_string(expected) + " parameters");
  }
  switch (env.kind) {
    case EnvKind::kLinear: {
      Eigen::Index k = 0;
      for (Eigen::Index i = 0; i < out.linear.A.rows(); ++i)
        for (Eigen::Index j = 0; j < out.linear.A.cols(); ++j)
          out.linear.A(i, j) = theta[k++];
      for (Eigen::Index i = 0; i < out.linear.B.rows(); ++i)
        for (Eigen::Index j = 0; j < out.linear.B.cols(); ++j)
          out.linear.B(i, j) = theta[k++];
      break;
    }
    case EnvKind::kPendulum:
      out.pendulum.mass = theta[0];
      out.pendulum.length = theta[1];
      out.pendulum.gravity = theta[2];
      break;
    case EnvKind::kCartpole:
      out.cartpole.cart_mass = theta[0];
      out.cartpole.pole_mass = theta[1];
      out.cartpole.gravity = theta[2];
      out.cartpole.length = theta[3];
      break;
  }
  return out;
}

std::vector<std::string> dyn_param_names(const Env& env) {
  switch (env.kind) {
    case EnvKind::kLinear: {
      std::vector<std::string> names;
      for (Eigen::Index i = 0; i < env.linear.A.rows(); ++i)
        for (Eigen::Index j = 0; j < env.linear.A.cols(); ++j)
          names.push_back("A" + std::to_string(i) + std::to_string(j));
      for (Eigen::Index i = 0; i < env.linear.B.rows(); ++i)
        for (Eigen::Index j = 0; j < env.linear.B.cols(); ++j)
          names.push_back("B" + std::to_string(i) + std::to_string(j));
      return names;
    }
    case EnvKind::kPendulum:
      return {"mass", "length", "gravity"};
    case EnvKind::kCartpole:
      return {"cart_mass", "pole_mass", "gravity", "length"};
  }
  throw std::logic_error("unreachable");
}

Matrix dyn_param_jacobian(const Env& env, const Vector& x, const Vector& u) {
  switch (env.kind) {
    case EnvKind::kLinear: {
      const Eigen::Index n = env.linear.A.rows();
      const Eigen::Index nx = env.linear.A.cols();
      const Eigen::Index m = env.linear.B.cols();
      Matrix J = Matrix::Zero(n, n * nx + n * m);
      for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < nx; ++j) J(i, i * nx + j) = x[j];
        for (Eigen::Index j = 0; j < m; ++j) J(i, n * nx + i * m + j) = u[j];
      }
      return J;
    }
    case EnvKind::kPendulum:
      return pendulum_param_jacobian(env.pendulum, x, u[0]);
    case EnvKind::kCartpole:
      return cartpole_param_jacobian(env.cartpole, x, u[0]);
  }
  throw std::logic_error("unreachable");
}

DynParamAdjoint dyn_adjoint(const Env& env) {
  if (env.kind == EnvKind::kLinear) {
    const Eigen::Index n = env.linear.A.rows();
    const Eigen::Index nx = env.linear.A.cols();
    const Eigen::Index m = env.linear.B.cols();
    DynParamAdjoint adj;
    adj.num_params = static_cast<int>(n * nx + n * m);
    // F = [A B] everywhere and the affine offset is identically zero.
    adj.contract = [nx, m](const Vector&, const Vector&, const Matrix& dF,
                           const Vector&) {
      Vector out(dF.rows() * (nx + m));
      out << row_major(dF.leftCols(nx)), row_major(dF.rightCols(m));
      return out;
    };
    return adj;
  }
  return finite_difference_dyn_adjoint(
      [env](const Vector& theta) {
        return make_dynamics(with_dyn_params(env, theta));
      },
      dyn_params(env));
}

MpcProblem make_mpc_problem(const Env& env, const Vector& x_init) {
  MpcProblem problem;
  problem.dims = env.dims();
  problem.cost = make_goal_cost(env.cost);
  problem.dynamics = make_dynamics(env);
  problem.u_lower = env.u_lower;
  problem.u_upper = env.u_upper;
  problem.x_init = x_init;
  return problem;
}

Vector sample_initial_state(const Env& env, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> angle(-std::numbers::pi,
                                               std::numbers::pi);
  switch (env.kind) {
    case EnvKind::kLinear: {
      std::normal_distribution<double> normal(0.0, 1.0);
      Vector x(env.linear.A.rows());
      for (Eigen::Index i = 0; i < x.size(); ++i) x[i] = normal(rng);
      return x;
    }
    case EnvKind::kPendulum: {
      std::uniform_real_distribution<double> omega(-1.0, 1.0);
      const double th = angle(rng);
      const double w = omega(rng);
      return Eigen::Vector3d(std::cos(th), std::sin(th), w);
    }
    case EnvKind::kCartpole: {
      std::uniform_real_distribution<double> pos(-0.5, 0.5);
      std::uniform_real_distribution<double> vel(-0.5, 0.5);
      const double p = pos(rng);
      const double v = vel(rng);
      const double th = angle(rng);
      const double w = vel(rng);
      Vector x(5);
      x << p, v, std::cos(th), std::sin(th), w;
      return x;
    }
  }
  throw std::logic_error("unreachable");
}

}  // namespace diffmpc
