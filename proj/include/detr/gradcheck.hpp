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

// Central finite-difference verification of tape gradients.

#include <cstdint>
#include <functional>
#include <vector>

#include "detr/tensor.hpp"

namespace detr {

struct GradCheckOptions {
  double step = 1e-6;
  // Per input, check at most this many coordinates (evenly strided); <= 0
  // checks all of them.
  std::int64_t max_coords = 0;
};

struct GradCheckResult {
  // ||analytic - numeric|| / max(||analytic||, ||numeric||, 1e-12), worst
  // over inputs, restricted to the checked coordinates.
  double rel_error = 0.0;
  std::int64_t coords = 0;
};

// `loss` must rebuild the scalar from `inputs` on every call. Inputs are
// marked as requiring grad; their data is perturbed in place and restored.
GradCheckResult GradCheck(const std::function<Tensor(const std::vector<Tensor>&)>& loss,
                          const std::vector<Tensor>& inputs, const GradCheckOptions& options = {});

// Scalar projection sum(out * weights) with fixed weights, turning any
// tensor-valued op into a loss with a generic upstream gradient.
Tensor Project(const Tensor& out, const Tensor& weights);

}  // namespace detr
