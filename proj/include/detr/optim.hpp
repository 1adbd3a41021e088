/* Copyright 2026 The detr-kit Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "detr/params.hpp"

namespace detr {

struct AdamConfig {
  double lr_backbone = 1e-5;
  double lr_detector = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  // Global gradient-norm clip; <= 0 disables.
  double clip_norm = 0.1;
};

// First/second moment buffers for one parameter.
struct AdamMoments {
  std::vector<double> m;
  std::vector<double> v;
};

// One bias-corrected Adam update of `param` in place. `step` is the 1-based
// step index after increment.
void AdamUpdate(std::span<double> param, std::span<const double> grad, AdamMoments& moments,
                std::int64_t step, double lr, double beta1, double beta2, double epsilon);

class Adam {
 public:
  explicit Adam(AdamConfig config) : config_(config) {}

  // Applies one step to every parameter with a gradient, then clears grads.
  // Throws Error(kNumeric) without touching any parameter when a gradient is
  // non-finite. Returns the global gradient norm before clipping.
  double Step(ParamStore& params);

  double LearningRate(ParamGroup group) const;
  // Multiplies both group learning rates (schedules).
  void set_lr_scale(double scale) { lr_scale_ = scale; }
  double lr_scale() const { return lr_scale_; }
  std::int64_t step_count() const { return step_; }
  const AdamConfig& config() const { return config_; }
  const std::vector<AdamMoments>& moments() const { return moments_; }

 private:
  AdamConfig config_;
  std::int64_t step_ = 0;
  double lr_scale_ = 1.0;
  std::vector<AdamMoments> moments_;
};

}  // namespace detr
