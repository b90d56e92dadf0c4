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

#ifndef DIFFMPC_OPTIM_H_
#define DIFFMPC_OPTIM_H_

#include <string>

#include "diffmpc/core.h"

namespace diffmpc {

// v <- decay v + (1 - decay) g^2;  x <- x - lr g / sqrt(v + eps).
struct RmsPropOptions {
  double learning_rate = 1e-2;
  double decay = 0.5;
  double eps = 1e-8;
};

struct RmsPropState {
  Vector square_avg;
};

void rmsprop_step(Vector& params, const Vector& grad, RmsPropState& state,
                  const RmsPropOptions& options);

// Bias-corrected Adam.
struct AdamOptions {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  Vector m;
  Vector v;
  long step = 0;
};

void adam_step(Vector& params, const Vector& grad, AdamState& state,
               const AdamOptions& options);

enum class OptimizerKind { kRmsProp, kAdam };

OptimizerKind optimizer_kind_from_name(const std::string& name);
std::string optimizer_name(OptimizerKind kind);

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::kRmsProp;
  double learning_rate = 1e-2;
  // RMSprop smoothing constant; ignored by Adam.
  double decay = 0.5;
};

// Type-erased optimizer over one flat parameter vector.
class Optimizer {
 public:
  explicit Optimizer(OptimizerConfig config) : config_(config) {}

  void step(Vector& params, const Vector& grad);
  // Restrict the update to a mask (1 = update). Masked-out entries keep
  // their accumulator state untouched.
  void step(Vector& params, const Vector& grad, const Vector& mask);

  const OptimizerConfig& config() const { return config_; }

 private:
  OptimizerConfig config_;
  RmsPropState rms_;
  AdamState adam_;
};

}  // namespace diffmpc

#endif  // DIFFMPC_OPTIM_H_
