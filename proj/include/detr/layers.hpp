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
#include <string>
#include <vector>

#include "detr/params.hpp"
#include "detr/tensor.hpp"

namespace detr {

enum class Init { kXavier, kZero };

struct LinearLayer {
  Tensor weight;  // [in, out]
  Tensor bias;    // [out]

  static LinearLayer Create(ParamStore& store, const std::string& name, std::int64_t in, std::int64_t out,
                            ParamGroup group, Rng& rng, Init init = Init::kXavier);
  // Handles to already-registered parameters.
  static LinearLayer Bind(const ParamStore& store, const std::string& name);

  Tensor operator()(const Tensor& x) const { return Linear(x, weight, bias); }
};

// Linear layers with ReLU between them (none after the last).
struct Mlp {
  std::vector<LinearLayer> layers;

  static Mlp Create(ParamStore& store, const std::string& name, const std::vector<std::int64_t>& widths,
                    ParamGroup group, Rng& rng);
  Tensor operator()(const Tensor& x) const;
};

struct Norm {
  Tensor gamma;
  Tensor beta;

  static Norm Create(ParamStore& store, const std::string& name, std::int64_t dim, ParamGroup group);
  Tensor operator()(const Tensor& x) const { return LayerNorm(x, gamma, beta, -1); }
};

// Sinusoidal encoding of normalized (x, y) points [P, 2] -> [P, dim].
// The first dim/2 channels encode y, the rest x; within each half channel j
// is sin (j even) or cos (j odd) of 2*pi*p / temperature^(2*(j/2)/(dim/2)).
// Differentiable with respect to the points.
Tensor SineEmbed(const Tensor& points, std::int64_t dim, double temperature = 10000.0);

}  // namespace detr
