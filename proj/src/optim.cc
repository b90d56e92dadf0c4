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

#include "diffmpc/optim.h"

#include <cmath>
#include <stdexcept>

namespace diffmpc {

void rmsprop_step(Vector& params, const Vector& grad, RmsPropState& state,
                  const RmsPropOptions& options) {
  if (grad.size() != params.size()) {
    throw DimensionError("rmsprop_step: gradient and parameter sizes differ");
  }
  if (state.square_avg.size() == 0) {
    state.square_avg = Vector::Zero(params.size());
  } else if (state.square_avg.size() != params.size()) {
    throw DimensionError("rmsprop_step: state size mismatch");
  }
  state.square_avg =
      options.decay * state.square_avg +
      (1.0 - options.decay) * grad.cwiseProduct(grad);
  params.array() -= options.learning_rate * grad.array() /
                    (state.square_avg.array() + options.eps).sqrt();
}

void adam_step(Vector& params, const Vector& grad, AdamState& state,
               const AdamOptions& options) {
  if (grad.size() != params.size()) {
    throw DimensionError("adam_step: gradient and parameter sizes differ");
  }
  if (state.m.size() == 0) {
    state.m = Vector::Zero(params.size());
    state.v = Vector::Zero(params.size());
  } else if (state.m.size() != params.size()) {
    throw DimensionError("adam_step: state size mismatch");
  }
  ++state.step;
  state.m = options.beta1 * state.m + (1.0 - options.beta1) * grad;
  state.v = options.beta2 * state.v +
            (1.0 - options.beta2) * grad.cwiseProduct(grad);
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(options.beta1, t);
  const double bc2 = 1.0 - std::pow(options.beta2, t);
  params.array() -= options.learning_rate * (state.m.array() / bc1) /
                    ((state.v.array() / bc2).sqrt() + options.eps);
}

OptimizerKind optimizer_kind_from_name(const std::string& name) {
  if (name == "rmsprop") return OptimizerKind::kRmsProp;
  if (name == "adam") return OptimizerKind::kAdam;
  throw std::invalid_argument("unknown optimizer '" + name + "'");
}

std::string optimizer_name(OptimizerKind kind) {
  return kind == OptimizerKind::kRmsProp ? "rmsprop" : "adam";
}

void Optimizer::step(Vector& params, const Vector& grad) {
  if (config_.kind == OptimizerKind::kRmsProp) {
    rmsprop_step(params, grad,
                 rms_, RmsPropOptions{config_.learning_rate, config_.decay, 1e-8});
  } else {
    AdamOptions opt;
    opt.learning_rate = config_.learning_rate;
    adam_step(params, grad, adam_, opt);
  }
}

void Optimizer::step(Vector& params, const Vector& grad, const Vector& mask) {
  if (mask.size() != params.size()) {
    throw DimensionError("Optimizer::step: mask size mismatch");
  }
  // Run the update on a copy and keep only the selected coordinates, so
  // frozen coordinates see neither a parameter nor a state change.
  Vector updated = params;
  const RmsPropState rms_before = rms_;
  const AdamState adam_before = adam_;
  step(updated, grad.cwiseProduct(mask));
  for (Eigen::Index i = 0; i < params.size(); ++i) {
    if (mask[i] == 0.0) {
      if (rms_before.square_avg.size() != 0) {
        rms_.square_avg[i] = rms_before.square_avg[i];
      } else if (rms_.square_avg.size() != 0) {
        rms_.square_avg[i] = 0.0;
      }
      if (adam_before.m.size() != 0) {
        adam_.m[i] = adam_before.m[i];
        adam_.v[i] = adam_before.v[i];
      } else if (adam_.m.size() != 0) {
        adam_.m[i] = 0.0;
        adam_.v[i] = 0.0;
      }
    } else {
      params[i] = updated[i];
    }
  }
}

}  // namespace diffmpc
