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

#include "diffmpc/experiment.h"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <ostream>
#include <random>
#include <set>
#include <sstream>

#include <json.hpp>

namespace diffmpc {

using nlohmann::json;

namespace {

// Reads one JSON object, remembering which keys were consumed so that
// leftovers can be rejected.
class ObjectReader {
 public:
  ObjectReader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_ + ": expected an object");
  }

  bool has(const std::string& key) const { return j_.contains(key); }

  template <class T>
  void read(const std::string& key, T& out) {
    if (!j_.contains(key)) return;
    seen_.insert(key);
    out = convert<T>(j_.at(key), key);
  }

  template <class T>
  void read(const std::string& key, std::optional<T>& out) {
    if (!j_.contains(key)) return;
    seen_.insert(key);
    out = convert<T>(j_.at(key), key);
  }

  template <class T>
  void require(const std::string& key, T& out) {
    if (!j_.contains(key)) throw ConfigError(at(key) + ": required");
    read(key, out);
  }

  ObjectReader child(const std::string& key) {
    seen_.insert(key);
    return ObjectReader(j_.at(key), at(key));
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!seen_.count(it.key())) {
        throw ConfigError(at(it.key()) + ": unknown key");
      }
    }
  }

  void reject_unless(bool allowed, const std::string& key,
                     const std::string& why) const {
    if (!allowed && j_.contains(key)) throw ConfigError(at(key) + ": " + why);
  }

  std::string at(const std::string& key) const {
    return path_.empty() ? key : path_ + "." + key;
  }

 private:
  template <class T>
  T convert(const json& v, const std::string& key) const {
    using Elem = T;
    if constexpr (std::is_same_v<Elem, bool>) {
      if (!v.is_boolean()) throw ConfigError(at(key) + ": expected a boolean");
    } else if constexpr (std::is_integral_v<Elem>) {
      if (!v.is_number_integer()) {
        throw ConfigError(at(key) + ": expected an integer");
      }
      if constexpr (std::is_unsigned_v<Elem>) {
        if (v.is_number_integer() && !v.is_number_unsigned() &&
            v.get<long long>() < 0) {
          throw ConfigError(at(key) + ": expected a non-negative integer");
        }
      }
    } else if constexpr (std::is_floating_point_v<Elem>) {
      if (!v.is_number()) throw ConfigError(at(key) + ": expected a number");
    } else if constexpr (std::is_same_v<Elem, std::string>) {
      if (!v.is_string()) throw ConfigError(at(key) + ": expected a string");
    } else {
      if (!v.is_array()) throw ConfigError(at(key) + ": expected an array");
    }
    try {
      return v.get<T>();
    } catch (const json::exception& e) {
      throw ConfigError(at(key) + ": " + e.what());
    }
  }

  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

const std::set<std::string> kExperiments{"lqr-imitate", "mpc-imitate",
                                         "sysid-compare", "bench-backward",
                                         "gradcheck"};

void parse_env(ObjectReader r, EnvConfig& env) {
  r.read("name", env.name);
  EnvKind kind;
  try {
    kind = env_kind_from_name(env.name);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(r.at("name") + ": " + e.what());
  }
  const bool pend = kind == EnvKind::kPendulum;
  const bool cart = kind == EnvKind::kCartpole;
  const bool lin = kind == EnvKind::kLinear;
  const std::string no = "not a parameter of environment '" + env.name + "'";
  r.reject_unless(pend, "mass", no);
  r.reject_unless(pend, "damping", no);
  r.reject_unless(pend, "wind", no);
  r.reject_unless(cart, "cart_mass", no);
  r.reject_unless(cart, "pole_mass", no);
  r.reject_unless(!lin, "length", no);
  r.reject_unless(!lin, "gravity", no);
  r.reject_unless(!lin, "dt", no);
  r.reject_unless(lin, "n_state", no);
  r.reject_unless(lin, "n_ctrl", no);
  r.reject_unless(lin, "a_scale", no);
  r.reject_unless(lin, "b_scale", no);
  r.read("horizon", env.horizon);
  r.read("u_bound", env.u_bound);
  r.read("cost_weights", env.cost_weights);
  r.read("cost_goal", env.cost_goal);
  r.read("mass", env.mass);
  r.read("damping", env.damping);
  r.read("wind", env.wind);
  r.read("cart_mass", env.cart_mass);
  r.read("pole_mass", env.pole_mass);
  r.read("length", env.length);
  r.read("gravity", env.gravity);
  r.read("dt", env.dt);
  r.read("n_state", env.n_state);
  r.read("n_ctrl", env.n_ctrl);
  r.read("a_scale", env.a_scale);
  r.read("b_scale", env.b_scale);
  r.finish();
  if (env.horizon && *env.horizon < 1) throw ConfigError("env.horizon: must be >= 1");
  if (env.u_bound && !(*env.u_bound > 0.0)) {
    throw ConfigError("env.u_bound: must be positive");
  }
  if ((env.n_state && *env.n_state < 1) || (env.n_ctrl && *env.n_ctrl < 1)) {
    throw ConfigError("env: dimensions must be >= 1");
  }
  for (const auto* p : {&env.mass, &env.length, &env.cart_mass, &env.pole_mass,
                        &env.dt}) {
    if (*p && !(**p > 0.0)) throw ConfigError("env: physical constants must be positive");
  }
}

void check_positive(bool ok, const std::string& what) {
  if (!ok) throw ConfigError(what);
}

template <class T>
void put(json& j, const std::string& key, const std::optional<T>& v) {
  if (v) j[key] = *v;
}

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::vector<double> to_std(const Vector& v) {
  return std::vector<double>(v.data(), v.data() + v.size());
}

double json_number(double v) { return std::isfinite(v) ? v : 0.0; }

json finite_or_null(double v) {
  if (!std::isfinite(v)) return nullptr;
  return v;
}

json epoch_json(const EpochRecord& r) {
  return json{{"epoch", r.epoch},
              {"train_loss", finite_or_null(r.train_loss)},
              {"val_imitation_loss", finite_or_null(r.val_imitation)},
              {"test_imitation_loss", finite_or_null(r.test_imitation)},
              {"val_sysid_loss", finite_or_null(r.val_sysid)},
              {"test_sysid_loss", finite_or_null(r.test_sysid)},
              {"model_loss", finite_or_null(r.model_loss)},
              {"skipped", r.skipped}};
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os << text;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
      .count();
}

// Per-trial seeds derived from the experiment seed.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(base),
                    static_cast<std::uint32_t>(base >> 32),
                    static_cast<std::uint32_t>(stream)};
  std::uint32_t out[2];
  seq.generate(out, out + 2);
  return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

struct TrainedModel {
  std::string label;
  TrainResult result;
};

// Trains one model, streaming its learning curve to `csv_path`.
TrainedModel train_to_csv(const std::string& label, const TrainConfig& tc,
                          const ImitationDataset& data, const Env& expert,
                          const Env& learner,
                          const std::filesystem::path& csv_path) {
  std::ofstream csv(csv_path, std::ios::binary);
  if (!csv) throw std::runtime_error("cannot write " + csv_path.string());
  csv << epoch_csv_header();
  TrainedModel model{label, train(tc, data, expert, learner,
                                  [&](const EpochRecord& r) {
                                    csv << epoch_csv_row(r);
                                    csv.flush();
                                  })};
  return model;
}

json model_summary(const TrainedModel& m, const Env& learner) {
  const TrainResult& r = m.result;
  const int nc = num_cost_params(learner);
  auto dyn = [&](const Vector& theta) {
    return to_std(theta.tail(theta.size() - nc));
  };
  const Env best = unpack_params(learner, r.best_params);
  double best_train = std::numeric_limits<double>::quiet_NaN();
  double min_val = std::numeric_limits<double>::infinity();
  for (const EpochRecord& e : r.history) {
    if (std::isfinite(e.val_imitation)) min_val = std::min(min_val, e.val_imitation);
    if (e.epoch == r.best_epoch) best_train = e.train_loss;
  }
  json j{{"label", m.label},
         {"aborted", r.aborted},
         {"abort_reason", r.abort_reason},
         {"epochs_completed", static_cast<int>(r.history.size())},
         {"best_epoch", r.best_epoch},
         {"best_selection_loss", finite_or_null(r.best_val)},
         {"best_train_loss", finite_or_null(best_train)},
         {"initial", epoch_json(r.initial)},
         {"best", epoch_json(r.best_record)},
         {"final", r.history.empty() ? epoch_json(r.initial)
                                     : epoch_json(r.history.back())},
         {"min_val_imitation_loss", finite_or_null(min_val)},
         {"skipped_solves", r.total_skipped},
         {"parameter_names", dyn_param_names(learner)},
         {"initial_dynamics", dyn(r.initial_params)},
         {"best_dynamics", dyn(r.best_params)},
         {"final_dynamics", dyn(r.final_params)},
         {"best_cost_weights", to_std(best.cost.weights)},
         {"best_cost_goal", to_std(best.cost.goal)}};
  return j;
}

json base_summary(const ExperimentConfig& config) {
  return json{{"schema_version", kSchemaVersion},
              {"experiment", config.experiment},
              {"seed", config.seed}};
}

void write_summary(const std::filesystem::path& out_dir, const json& summary) {
  write_text(out_dir / "summary.json", summary.dump(2) + "\n");
}

Vector random_linear_functional(const Dims& dims, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Vector r(dims.horizon * dims.n_tau());
  for (Eigen::Index i = 0; i < r.size(); ++i) r[i] = normal(rng);
  return r;
}

double functional_value(const Vector& r, const Trajectory& traj) {
  double s = 0.0;
  const int nt = static_cast<int>(traj.x[0].size() + traj.u[0].size());
  for (int t = 0; t < traj.horizon(); ++t) {
    s += r.segment(t * nt, nt).dot(traj.tau(t));
  }
  return s;
}

double group_error(const Vector& analytic, const Vector& numeric) {
  const double denom = std::max(numeric.norm(), 1e-6);
  return (analytic - numeric).norm() / denom;
}

Env gradcheck_env(EnvKind kind, std::mt19937_64& rng) {
  Env env = default_env(kind);
  if (kind == EnvKind::kLinear) {
    std::normal_distribution<double> normal(0.0, 1.0);
    const int n = static_cast<int>(env.linear.A.rows());
    const int m = static_cast<int>(env.linear.B.cols());
    env.linear.A = Matrix::Identity(n, n);
    env.linear.B = Matrix(n, m);
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) env.linear.A(i, j) += 0.3 * normal(rng);
      for (int j = 0; j < m; ++j) env.linear.B(i, j) = normal(rng);
    }
    for (Eigen::Index i = 0; i < env.cost.goal.size(); ++i) {
      env.cost.goal[i] = 0.5 * normal(rng);
    }
  }
  return env;
}

void read_train(ObjectReader& s, TrainSection& t) {
  s.read("method", t.method);
  s.read("loss", t.loss);
  s.read("optimizer", t.optimizer);
  s.read("learning_rate", t.learning_rate);
  s.read("decay", t.decay);
  s.read("batch_size", t.batch_size);
  s.read("epochs", t.epochs);
  s.read("alternation_period", t.alternation_period);
  s.read("evaluate_every_epoch", t.evaluate_every_epoch);
  s.finish();
}

void validate_train(const TrainSection& t, const std::string& key) {
  try {
    method_from_name(t.method);
    optimizer_kind_from_name(t.optimizer);
    if (t.loss) loss_target_from_name(*t.loss);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(key + ": " + e.what());
  }
  check_positive(t.learning_rate > 0.0, key + ".learning_rate: must be positive");
  check_positive(t.decay >= 0.0 && t.decay < 1.0, key + ".decay: must be in [0, 1)");
  check_positive(t.batch_size >= 1, key + ".batch_size: must be >= 1");
  check_positive(t.epochs >= 0, key + ".epochs: must be >= 0");
  check_positive(t.alternation_period >= 1, key + ".alternation_period: must be >= 1");
}

json train_json(const TrainSection& t) {
  json train{{"method", t.method},
             {"optimizer", t.optimizer},
             {"learning_rate", t.learning_rate},
             {"decay", t.decay},
             {"batch_size", t.batch_size},
             {"epochs", t.epochs},
             {"alternation_period", t.alternation_period},
             {"evaluate_every_epoch", t.evaluate_every_epoch}};
  put(train, "loss", t.loss);
  return train;
}

}  // namespace

ExperimentConfig parse_config(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  ExperimentConfig c;
  ObjectReader r(j, "");
  r.require("experiment", c.experiment);
  if (!kExperiments.count(c.experiment)) {
    throw ConfigError("experiment: unknown experiment '" + c.experiment + "'");
  }
  r.read("seed", c.seed);
  r.read("output_dir", c.output_dir);
  r.read("trials", c.trials);
  if (r.has("env")) parse_env(r.child("env"), c.env);
  if (r.has("learner")) {
    ObjectReader s = r.child("learner");
    s.read("init", c.learner.init);
    s.read("spread", c.learner.spread);
    s.read("cost_spread", c.learner.cost_spread);
    s.read("goal_noise", c.learner.goal_noise);
    s.finish();
  }
  if (r.has("dataset")) {
    ObjectReader s = r.child("dataset");
    s.read("train", c.dataset.train);
    s.read("val", c.dataset.val);
    s.read("test", c.dataset.test);
    s.read("seed", c.dataset.seed);
    s.finish();
  }
  if (r.has("train")) {
    ObjectReader s = r.child("train");
    read_train(s, c.train);
  }
  if (r.has("sysid_train")) {
    ObjectReader s = r.child("sysid_train");
    c.sysid_train.emplace();
    read_train(s, *c.sysid_train);
  }
  if (r.has("solver")) {
    ObjectReader s = r.child("solver");
    s.read("max_iters", c.solver.max_iters);
    s.read("convergence_tol", c.solver.convergence_tol);
    s.finish();
  }
  if (r.has("bench")) {
    ObjectReader s = r.child("bench");
    s.read("caps", c.bench.caps);
    s.read("horizons", c.bench.horizons);
    s.read("trials", c.bench.trials);
    s.read("warmup", c.bench.warmup);
    s.finish();
  }
  if (r.has("gradcheck")) {
    ObjectReader s = r.child("gradcheck");
    s.read("eps", c.gradcheck.eps);
    s.read("instances", c.gradcheck.instances);
    s.read("max_candidates", c.gradcheck.max_candidates);
    s.read("weak_tol", c.gradcheck.weak_tol);
    s.read("tolerance", c.gradcheck.tolerance);
    s.finish();
  }
  r.finish();

  check_positive(c.trials >= 1, "trials: must be >= 1");
  validate_train(c.train, "train");
  if (c.sysid_train) {
    validate_train(*c.sysid_train, "sysid_train");
    if (c.experiment != "sysid-compare") {
      throw ConfigError("sysid_train: only used by sysid-compare");
    }
  }
  check_positive(c.dataset.train >= 1 && c.dataset.val >= 1 && c.dataset.test >= 1,
                 "dataset: split sizes must be >= 1");
  check_positive(c.learner.init == "perturb" || c.learner.init == "random",
                 "learner.init: expected 'perturb' or 'random'");
  check_positive(c.learner.spread >= 0.0 && c.learner.spread < 1.0,
                 "learner.spread: must be in [0, 1)");
  check_positive(c.learner.cost_spread >= 0.0 && c.learner.cost_spread < 1.0,
                 "learner.cost_spread: must be in [0, 1)");
  check_positive(c.learner.goal_noise >= 0.0, "learner.goal_noise: must be >= 0");
  check_positive(c.solver.max_iters >= 1, "solver.max_iters: must be >= 1");
  check_positive(c.solver.convergence_tol > 0.0,
                 "solver.convergence_tol: must be positive");
  check_positive(!c.bench.caps.empty() && !c.bench.horizons.empty(),
                 "bench: caps and horizons must be non-empty");
  for (int v : c.bench.caps) check_positive(v >= 1, "bench.caps: entries must be >= 1");
  for (int v : c.bench.horizons) {
    check_positive(v >= 1, "bench.horizons: entries must be >= 1");
  }
  check_positive(c.bench.trials >= 1 && c.bench.warmup >= 0,
                 "bench: trials >= 1 and warmup >= 0 required");
  check_positive(c.gradcheck.eps > 0.0 && c.gradcheck.instances >= 1 &&
                     c.gradcheck.max_candidates >= c.gradcheck.instances,
                 "gradcheck: eps > 0, instances >= 1, max_candidates >= instances");
  if (c.experiment == "lqr-imitate" && c.env.name != "lqr") {
    throw ConfigError("lqr-imitate requires env.name = 'lqr'");
  }
  if (c.experiment == "sysid-compare" && c.env.name != "pendulum") {
    throw ConfigError("sysid-compare requires env.name = 'pendulum'");
  }
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ConfigError("cannot read config file " + path.string());
  std::stringstream ss;
  ss << is.rdbuf();
  return parse_config(ss.str());
}

std::string config_to_json(const ExperimentConfig& c) {
  json env{{"name", c.env.name}};
  put(env, "horizon", c.env.horizon);
  put(env, "u_bound", c.env.u_bound);
  put(env, "cost_weights", c.env.cost_weights);
  put(env, "cost_goal", c.env.cost_goal);
  put(env, "mass", c.env.mass);
  put(env, "damping", c.env.damping);
  put(env, "wind", c.env.wind);
  put(env, "cart_mass", c.env.cart_mass);
  put(env, "pole_mass", c.env.pole_mass);
  put(env, "length", c.env.length);
  put(env, "gravity", c.env.gravity);
  put(env, "dt", c.env.dt);
  put(env, "n_state", c.env.n_state);
  put(env, "n_ctrl", c.env.n_ctrl);
  put(env, "a_scale", c.env.a_scale);
  put(env, "b_scale", c.env.b_scale);
  json dataset{{"train", c.dataset.train}, {"val", c.dataset.val},
               {"test", c.dataset.test}};
  put(dataset, "seed", c.dataset.seed);
  json j{{"experiment", c.experiment},
         {"seed", c.seed},
         {"trials", c.trials},
         {"env", env},
         {"learner",
          {{"init", c.learner.init},
           {"spread", c.learner.spread},
           {"cost_spread", c.learner.cost_spread},
           {"goal_noise", c.learner.goal_noise}}},
         {"dataset", dataset},
         {"train", train_json(c.train)},
         {"solver",
          {{"max_iters", c.solver.max_iters},
           {"convergence_tol", c.solver.convergence_tol}}},
         {"bench",
          {{"caps", c.bench.caps},
           {"horizons", c.bench.horizons},
           {"trials", c.bench.trials},
           {"warmup", c.bench.warmup}}},
         {"gradcheck",
          {{"eps", c.gradcheck.eps},
           {"instances", c.gradcheck.instances},
           {"max_candidates", c.gradcheck.max_candidates},
           {"weak_tol", c.gradcheck.weak_tol},
           {"tolerance", c.gradcheck.tolerance}}}};
  if (c.sysid_train) j["sysid_train"] = train_json(*c.sysid_train);
  put(j, "output_dir", c.output_dir);
  return j.dump(2) + "\n";
}

Env build_expert(const ExperimentConfig& config) {
  const EnvConfig& ec = config.env;
  const EnvKind kind = env_kind_from_name(ec.name);
  Env env = default_env(kind);
  if (kind == EnvKind::kLinear) {
    const int n = ec.n_state.value_or(3);
    const int m = ec.n_ctrl.value_or(3);
    std::mt19937_64 rng(derive_seed(config.seed, 0xE1));
    std::normal_distribution<double> normal(0.0, 1.0);
    const double a = ec.a_scale.value_or(0.2);
    const double b = ec.b_scale.value_or(1.0);
    env.linear.A = Matrix::Identity(n, n);
    env.linear.B = Matrix(n, m);
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) env.linear.A(i, j) += a * normal(rng);
      for (int j = 0; j < m; ++j) env.linear.B(i, j) = b * normal(rng);
    }
    env.cost.weights = Vector::Constant(n + m, std::sqrt(0.5));
    env.cost.goal = Vector::Zero(n + m);
    env.u_lower = Vector::Constant(m, -1.0);
    env.u_upper = Vector::Constant(m, 1.0);
  }
  if (ec.horizon) env.horizon = *ec.horizon;
  if (ec.u_bound) {
    env.u_lower.setConstant(-*ec.u_bound);
    env.u_upper.setConstant(*ec.u_bound);
  }
  const Eigen::Index nt = env.cost.weights.size();
  if (ec.cost_weights) {
    if (static_cast<Eigen::Index>(ec.cost_weights->size()) != nt) {
      throw ConfigError("env.cost_weights: expected " + std::to_string(nt) + " entries");
    }
    env.cost.weights = Eigen::Map<const Vector>(ec.cost_weights->data(), nt);
  }
  if (ec.cost_goal) {
    if (static_cast<Eigen::Index>(ec.cost_goal->size()) != nt) {
      throw ConfigError("env.cost_goal: expected " + std::to_string(nt) + " entries");
    }
    env.cost.goal = Eigen::Map<const Vector>(ec.cost_goal->data(), nt);
  }
  if (kind == EnvKind::kPendulum) {
    PendulumParams& p = env.pendulum;
    if (ec.mass) p.mass = *ec.mass;
    if (ec.length) p.length = *ec.length;
    if (ec.gravity) p.gravity = *ec.gravity;
    if (ec.dt) p.dt = *ec.dt;
    const bool nonrealizable = config.experiment == "sysid-compare";
    p.damping = ec.damping.value_or(nonrealizable ? 0.1 : 0.0);
    p.wind = ec.wind.value_or(nonrealizable ? 0.5 : 0.0);
  } else if (kind == EnvKind::kCartpole) {
    CartpoleParams& p = env.cartpole;
    if (ec.cart_mass) p.cart_mass = *ec.cart_mass;
    if (ec.pole_mass) p.pole_mass = *ec.pole_mass;
    if (ec.length) p.length = *ec.length;
    if (ec.gravity) p.gravity = *ec.gravity;
    if (ec.dt) p.dt = *ec.dt;
  }
  return env;
}

Env learner_class(const Env& expert) {
  Env env = expert;
  env.pendulum.damping = 0.0;
  env.pendulum.wind = 0.0;
  return env;
}

Env initial_learner(const ExperimentConfig& config, const Env& expert,
                    Method method, std::uint64_t trial_seed) {
  Env env = learner_class(expert);
  std::mt19937_64 rng(trial_seed);
  if (learns_dynamics(method)) {
    if (config.learner.init == "random") {
      if (env.kind != EnvKind::kLinear) {
        throw ConfigError("learner.init 'random' is only defined for lqr");
      }
      std::normal_distribution<double> normal(0.0, 1.0);
      const double a = config.env.a_scale.value_or(0.2);
      const double b = config.env.b_scale.value_or(1.0);
      const Eigen::Index n = env.linear.A.rows();
      env.linear.A = Matrix::Identity(n, n);
      for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < n; ++j) env.linear.A(i, j) += a * normal(rng);
        for (Eigen::Index j = 0; j < env.linear.B.cols(); ++j) {
          env.linear.B(i, j) = b * normal(rng);
        }
      }
    } else {
      std::uniform_real_distribution<double> scale(1.0 - config.learner.spread,
                                                   1.0 + config.learner.spread);
      Vector theta = dyn_params(env);
      for (Eigen::Index i = 0; i < theta.size(); ++i) theta[i] *= scale(rng);
      env = with_dyn_params(env, theta);
    }
  }
  if (learns_cost(method)) {
    std::uniform_real_distribution<double> scale(1.0 - config.learner.cost_spread,
                                                 1.0 + config.learner.cost_spread);
    std::normal_distribution<double> noise(0.0, config.learner.goal_noise);
    for (Eigen::Index i = 0; i < env.cost.weights.size(); ++i) {
      env.cost.weights[i] *= scale(rng);
      env.cost.goal[i] += noise(rng);
    }
  }
  return env;
}

TrainConfig train_config(const ExperimentConfig& config, std::uint64_t seed) {
  TrainConfig tc;
  tc.method = method_from_name(config.train.method);
  if (config.train.loss) {
    tc.loss_target = loss_target_from_name(*config.train.loss);
  } else {
    tc.loss_target = tc.method == Method::kLqrDx ? LossTarget::kTrajectory
                                                 : LossTarget::kControls;
  }
  tc.optimizer.kind = optimizer_kind_from_name(config.train.optimizer);
  tc.optimizer.learning_rate = config.train.learning_rate;
  tc.optimizer.decay = config.train.decay;
  tc.batch_size = config.train.batch_size;
  tc.epochs = config.train.epochs;
  tc.alternation_period = config.train.alternation_period;
  tc.evaluate_every_epoch = config.train.evaluate_every_epoch;
  tc.solver = SolverSettings{config.solver.max_iters, config.solver.convergence_tol, {}};
  tc.seed = seed;
  return tc;
}

double GradcheckInstance::max_error() const {
  return std::max({dynamics_error, weights_error, goal_error});
}

bool GradcheckReport::passed() const {
  return !instances.empty() && max_relative_error <= tolerance;
}

GradcheckReport run_gradcheck(const GradcheckOptions& options) {
  GradcheckReport report;
  report.env = env_name(options.env);
  report.eps = options.eps;
  report.tolerance = options.tolerance;
  std::mt19937_64 rng(options.seed);
  for (int cand = 0; cand < options.max_candidates &&
                     static_cast<int>(report.instances.size()) < options.instances;
       ++cand) {
    const Env env = gradcheck_env(options.env, rng);
    const Vector x0 = sample_initial_state(env, rng);
    const Dims dims = env.dims();
    const Vector r = random_linear_functional(dims, rng);

    MpcProblem problem = learner_problem(env, x0, options.solver);
    const FixedPoint fp = mpc_solve(problem);
    if (!fp.converged) {
      ++report.skipped_unconverged;
      continue;
    }
    if (has_weakly_active_bound(problem, fp, options.weak_tol)) {
      ++report.skipped_weakly_active;
      continue;
    }
    std::vector<Vector> grad_tau(dims.horizon);
    for (int t = 0; t < dims.horizon; ++t) {
      grad_tau[t] = r.segment(t * dims.n_tau(), dims.n_tau());
    }
    const MpcGradients g = mpc_backward(problem, fp, grad_tau);
    const Vector analytic =
        chain_to_params(g, fp, goal_cost_adjoint(env.cost), dyn_adjoint(env));

    const Vector theta = pack_params(env);
    Vector numeric(theta.size());
    bool fd_ok = true;
    for (Eigen::Index j = 0; j < theta.size() && fd_ok; ++j) {
      const double h = options.eps * std::max(1.0, std::abs(theta[j]));
      double val[2];
      for (int s = 0; s < 2; ++s) {
        Vector th = theta;
        th[j] += s == 0 ? h : -h;
        MpcProblem p = learner_problem(unpack_params(env, th), x0, options.solver);
        p.u_init = fp.traj.u;
        const FixedPoint q = mpc_solve(p);
        if (!q.converged) fd_ok = false;
        val[s] = functional_value(r, q.traj);
      }
      numeric[j] = (val[0] - val[1]) / (2.0 * h);
    }
    if (!fd_ok) {
      ++report.skipped_unconverged;
      continue;
    }
    const Eigen::Index nt = dims.n_tau();
    GradcheckInstance inst;
    inst.index = cand;
    inst.weights_error = group_error(analytic.head(nt), numeric.head(nt));
    inst.goal_error = group_error(analytic.segment(nt, nt), numeric.segment(nt, nt));
    inst.dynamics_error =
        group_error(analytic.tail(theta.size() - 2 * nt), numeric.tail(theta.size() - 2 * nt));
    report.max_relative_error = std::max(report.max_relative_error, inst.max_error());
    report.instances.push_back(inst);
  }
  return report;
}

std::string gradcheck_to_json(const GradcheckReport& report) {
  json inst = json::array();
  for (const GradcheckInstance& i : report.instances) {
    inst.push_back({{"candidate", i.index},
                    {"dynamics_rel_error", i.dynamics_error},
                    {"weights_rel_error", i.weights_error},
                    {"goal_rel_error", i.goal_error}});
  }
  json j{{"schema_version", kSchemaVersion},
         {"env", report.env},
         {"eps", report.eps},
         {"tolerance", report.tolerance},
         {"instances", inst},
         {"skipped_weakly_active", report.skipped_weakly_active},
         {"skipped_unconverged", report.skipped_unconverged},
         {"max_relative_error", report.max_relative_error},
         {"passed", report.passed()}};
  return j.dump(2) + "\n";
}

std::vector<BenchRow> run_bench(const BenchOptions& options) {
  std::vector<BenchRow> rows;
  std::mt19937_64 rng(options.seed);
  for (int horizon : options.horizons) {
    Env env = gradcheck_env(options.env, rng);
    env.horizon = horizon;
    const Dims dims = env.dims();
    std::vector<Vector> x0s;
    const int runs = options.warmup + options.trials;
    for (int i = 0; i < runs; ++i) x0s.push_back(sample_initial_state(env, rng));
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<Vector> grad_tau(horizon, Vector(dims.n_tau()));
    for (Vector& g : grad_tau) {
      for (Eigen::Index i = 0; i < g.size(); ++i) g[i] = normal(rng);
    }
    for (int cap : options.caps) {
      std::vector<double> fwd, bwd;
      for (int i = 0; i < runs; ++i) {
        MpcProblem p = make_mpc_problem(env, x0s[i]);
        p.max_iters = cap;
        p.run_all_iters = true;
        const auto t0 = std::chrono::steady_clock::now();
        const FixedPoint fp = mpc_solve(p);
        const double tf = seconds_since(t0);
        MpcBackwardOptions bo;
        bo.allow_unconverged = true;
        const auto t1 = std::chrono::steady_clock::now();
        const MpcGradients g = mpc_backward(p, fp, grad_tau, bo);
        const double tb = seconds_since(t1);
        if (!g.lqr.d_tau[0].allFinite()) {
          throw std::runtime_error("bench: non-finite backward pass");
        }
        if (i >= options.warmup) {
          fwd.push_back(tf);
          bwd.push_back(tb);
        }
      }
      auto stats = [](const std::vector<double>& v) {
        const double mean = std::accumulate(v.begin(), v.end(), 0.0) / v.size();
        double var = 0.0;
        for (double x : v) var += (x - mean) * (x - mean);
        var = v.size() > 1 ? var / (v.size() - 1) : 0.0;
        return std::pair<double, double>{mean, std::sqrt(var)};
      };
      BenchRow row;
      row.env = env_name(options.env);
      row.n_state = dims.n_state;
      row.n_ctrl = dims.n_ctrl;
      row.horizon = horizon;
      row.cap = cap;
      row.trials = options.trials;
      std::tie(row.forward_mean_s, row.forward_std_s) = stats(fwd);
      std::tie(row.backward_mean_s, row.backward_std_s) = stats(bwd);
      rows.push_back(row);
    }
  }
  return rows;
}

void write_bench_csv(std::ostream& os, const std::vector<BenchRow>& rows) {
  os << "env,n_state,n_ctrl,horizon,cap,trials,forward_mean_s,forward_std_s,"
        "backward_mean_s,backward_std_s\n";
  for (const BenchRow& r : rows) {
    os << r.env << ',' << r.n_state << ',' << r.n_ctrl << ',' << r.horizon << ','
       << r.cap << ',' << r.trials << ',' << format_double(r.forward_mean_s) << ','
       << format_double(r.forward_std_s) << ',' << format_double(r.backward_mean_s)
       << ',' << format_double(r.backward_std_s) << '\n';
  }
}

std::string epoch_csv_header() {
  return "epoch,train_loss,val_imitation_loss,test_imitation_loss,"
         "val_sysid_loss,test_sysid_loss,model_loss,skipped\n";
}

std::string epoch_csv_row(const EpochRecord& r) {
  std::string s = std::to_string(r.epoch);
  for (double v : {r.train_loss, r.val_imitation, r.test_imitation, r.val_sysid,
                   r.test_sysid, r.model_loss}) {
    s += ',';
    s += format_double(v);
  }
  s += ',' + std::to_string(r.skipped) + '\n';
  return s;
}

RunOutcome run_experiment(const ExperimentConfig& config,
                          const std::filesystem::path& out_dir,
                          const SolveObserver& observer) {
  const auto t0 = std::chrono::steady_clock::now();
  std::filesystem::create_directories(out_dir);
  write_text(out_dir / "config.json", config_to_json(config));
  json summary = base_summary(config);
  RunOutcome outcome;

  const std::string& name = config.experiment;
  if (name == "gradcheck") {
    GradcheckOptions go;
    go.env = env_kind_from_name(config.env.name);
    go.eps = config.gradcheck.eps;
    go.instances = config.gradcheck.instances;
    go.max_candidates = config.gradcheck.max_candidates;
    go.weak_tol = config.gradcheck.weak_tol;
    go.tolerance = config.gradcheck.tolerance;
    go.seed = config.seed;
    const GradcheckReport report = run_gradcheck(go);
    write_text(out_dir / "gradcheck.json", gradcheck_to_json(report));
    summary["passed"] = report.passed();
    summary["max_relative_error"] = report.max_relative_error;
    summary["instances"] = static_cast<int>(report.instances.size());
    if (!report.passed()) {
      outcome.ok = false;
      outcome.message = "gradcheck failed: max relative error " +
                        format_double(report.max_relative_error);
    }
  } else if (name == "bench-backward") {
    BenchOptions bo;
    bo.env = env_kind_from_name(config.env.name);
    bo.caps = config.bench.caps;
    bo.horizons = config.bench.horizons;
    bo.trials = config.bench.trials;
    bo.warmup = config.bench.warmup;
    bo.seed = config.seed;
    const std::vector<BenchRow> rows = run_bench(bo);
    std::ofstream csv(out_dir / "bench.csv", std::ios::binary);
    write_bench_csv(csv, rows);
    json jr = json::array();
    for (const BenchRow& r : rows) {
      jr.push_back({{"horizon", r.horizon},
                    {"cap", r.cap},
                    {"forward_mean_s", r.forward_mean_s},
                    {"backward_mean_s", r.backward_mean_s}});
    }
    summary["rows"] = jr;
  } else {
    const Env expert = build_expert(config);
    const SolverSettings solver{config.solver.max_iters, config.solver.convergence_tol,
                                observer};
    const ImitationDataset data = generate_dataset(
        expert, config.dataset.train, config.dataset.val, config.dataset.test,
        config.dataset.seed.value_or(derive_seed(config.seed, 0xDA7A)), solver);
    summary["expert_dynamics"] = to_std(dyn_params(expert));
    summary["parameter_names"] = dyn_param_names(expert);

    std::vector<std::pair<std::string, Method>> arms;
    if (name == "sysid-compare") {
      arms = {{"sysid", Method::kSysId}, {"imitation", Method::kMpcDx}};
    } else {
      arms = {{"", method_from_name(config.train.method)}};
    }
    json trials = json::array();
    for (int trial = 0; trial < config.trials && outcome.ok; ++trial) {
      const std::uint64_t trial_seed = derive_seed(config.seed, 1000 + trial);
      json jt{{"trial", trial}};
      for (const auto& [label, method] : arms) {
        ExperimentConfig cfg = config;
        if (method == Method::kSysId && config.sysid_train) cfg.train = *config.sysid_train;
        cfg.train.method = method_name(method);
        TrainConfig tc = train_config(cfg, trial_seed);
        tc.solver.observer = observer;
        if (name == "sysid-compare" && method == Method::kMpcDx) {
          tc.loss_target = config.train.loss ? loss_target_from_name(*config.train.loss)
                                             : LossTarget::kControls;
        }
        // Same trial seed, so both arms of a comparison start from the same
        // dynamics.
        const Env learner = initial_learner(cfg, expert, method, trial_seed);
        const std::string file =
            (label.empty() ? std::string("trial_") : label + "_trial_") +
            std::to_string(trial) + ".csv";
        const TrainedModel model =
            train_to_csv(label.empty() ? method_name(method) : label, tc, data,
                         expert, learner, out_dir / file);
        json jm = model_summary(model, learner);
        jm["csv"] = file;
        jm["method"] = method_name(method);
        jt[label.empty() ? "model" : label] = jm;
        if (model.result.aborted) {
          outcome.ok = false;
          outcome.message = "training aborted (" + file + "): " +
                            model.result.abort_reason;
          break;
        }
      }
      if (name == "sysid-compare" && outcome.ok) {
        const json& s = jt["sysid"]["best"];
        const json& m = jt["imitation"]["best"];
        jt["sysid_model_has_lower_sysid_loss"] =
            s["test_sysid_loss"].get<double>() <= m["test_sysid_loss"].get<double>();
        jt["imitation_model_has_lower_imitation_loss"] =
            m["test_imitation_loss"].get<double>() < s["test_imitation_loss"].get<double>();
      }
      trials.push_back(jt);
    }
    summary["trials"] = trials;
  }
  summary["ok"] = outcome.ok;
  if (!outcome.ok) summary["error"] = outcome.message;
  summary["wall_clock_s"] = json_number(seconds_since(t0));
  write_summary(out_dir, summary);
  return outcome;
}

}  // namespace diffmpc
