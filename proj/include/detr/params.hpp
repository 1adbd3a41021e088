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
#include <string_view>
#include <vector>

#include "detr/random.hpp"
#include "detr/tensor.hpp"

namespace detr {

// Parameters are split in two optimizer groups so the backbone can train with
// a smaller learning rate than the detector.
enum class ParamGroup : int { kBackbone = 0, kDetector = 1 };

struct Parameter {
  std::string name;
  Tensor value;
  ParamGroup group;
};

// Ordered, named parameter registry. Iteration order is insertion order, which
// fixes both checkpoint layout and initialization order.
class ParamStore {
 public:
  Tensor Add(std::string name, Tensor value, ParamGroup group);
  Tensor Get(std::string_view name) const;
  bool Contains(std::string_view name) const;

  std::vector<Parameter>& all() { return params_; }
  const std::vector<Parameter>& all() const { return params_; }
  std::size_t size() const { return params_.size(); }
  std::int64_t NumScalars() const;

  void ZeroGrad();

 private:
  std::vector<Parameter> params_;
};

// Initializers. Weight layouts are [fan_in, fan_out] for linear layers and
// [out, in, kh, kw] for convolutions.
Tensor XavierUniform(Rng& rng, std::int64_t fan_in, std::int64_t fan_out, Shape shape);
// U(-a, a) with a = sqrt(6 / fan_in), suited to ReLU stacks.
Tensor KaimingUniform(Rng& rng, std::int64_t fan_in, Shape shape);
Tensor NormalInit(Rng& rng, Shape shape, double stddev);

}  // namespace detr
