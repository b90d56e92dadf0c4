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

#ifndef DIFFMPC_ENVS_H_
#define DIFFMPC_ENVS_H_

#include <random>
#include <string>

#include "diffmpc/core.h"
#include "diffmpc/mpc.h"
#include "diffmpc/mpc_diff.h"

namespace diffmpc {

// f(x, u) = A x + B u.
struct LinearDyn {
  Matrix A;
  Matrix B;
};

// Pendulum with state [cos th, sin th, omega], th = 0 upright. Damping and
// wind are zero for the learner model class.
struct PendulumParams {
  double mass = 1.0;
  double length = 1.0;
  double gravity = 10.0;
  double damping = 0.0;
  double wind = 0.0;
  double dt = 0.05;
};

// Cartpole with state [pos, vel, cos th, sin th, omega], th = 0 upright.
struct CartpoleParams {
  double cart_mass = 1.0;
  double pole_mass = 0.1;
  double gravity = 9.8;
  double length = 0.5;
  double dt = 0.05;
};

// C(tau) = || weights o (tau - goal) ||^2.
struct GoalCost {
  Vector weights;
  Vector goal;
};

constexpr int kPendulumStateDim = 3;
constexpr int kCartpoleStateDim = 5;

Vector pendulum_step(const PendulumParams& params, const Vector& x, double u);
// n_state x n_tau.
Matrix pendulum_jacobian(const PendulumParams& params, const Vector& x,
                         double u);
// n_state x 3, columns (mass, length, gravity).
Matrix pendulum_param_jacobian(const PendulumParams& params, const Vector& x,
                               double u);

Vector cartpole_step(const CartpoleParams& params, const Vector& x, double u);
Matrix cartpole_jacobian(const CartpoleParams& params, const Vector& x,
                         double u);
// n_state x 4, columns (cart_mass, pole_mass, gravity, length).
Matrix cartpole_param_jacobian(const CartpoleParams& params, const Vector& x,
                               double u);

double goal_cost_value(const GoalCost& cost, const Vector& tau);
// H = 2 diag(w^2), p = 2 diag(w^2) (tau - goal).
QuadraticExpansion goal_cost_expansion(const GoalCost& cost, const Vector& tau);
CostFn make_goal_cost(GoalCost cost);
// Contraction over [weights..., goal...]; the cost depends on w^2 so the
// weight gradient is 2 w dl/d(w^2).
CostParamAdjoint goal_cost_adjoint(const GoalCost& cost);

enum class EnvKind { kLinear, kPendulum, kCartpole };

std::string env_name(EnvKind kind);
EnvKind env_kind_from_name(const std::string& name);

// Everything needed to build the controller of one environment.
struct Env {
  EnvKind kind = EnvKind::kPendulum;
  LinearDyn linear;
  PendulumParams pendulum;
  CartpoleParams cartpole;
  GoalCost cost;
  Vector u_lower;
  Vector u_upper;
  int horizon = 20;

  Dims dims() const;
};

// Default expert for each environment: upright goal, control bounds +/-2,
// T = 20. The linear default is the 3-state/3-control identity-cost system
// with bounds [-1, 1] and T = 5 (A, B zero; set them before use).
Env default_env(EnvKind kind);

DynamicsFn make_dynamics(const Env& env);

// Learnable physical parameters: pendulum (m, l, g), cartpole
// (m_c, m_p, g, l), linear row-major vec(A) then vec(B).
Vector dyn_params(const Env& env);
Env with_dyn_params(const Env& env, const Vector& theta);
std::vector<std::string> dyn_param_names(const Env& env);

// d step / d theta, n_state x num_params.
Matrix dyn_param_jacobian(const Env& env, const Vector& x, const Vector& u);

// Parameter adjoint for chain_to_params: analytic for linear dynamics,
// central differences over theta otherwise.
DynParamAdjoint dyn_adjoint(const Env& env);

MpcProblem make_mpc_problem(const Env& env, const Vector& x_init);

// Uniform initial-state sampler: pendulum th in [-pi, pi], omega in [-1, 1];
// cartpole pos in [-0.5, 0.5], th in [-pi, pi], velocities in [-0.5, 0.5];
// linear x ~ N(0, I).
Vector sample_initial_state(const Env& env, std::mt19937_64& rng);

}  // namespace diffmpc

#endif  // DIFFMPC_ENVS_H_
