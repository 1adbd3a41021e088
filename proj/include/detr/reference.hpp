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

// Straightforward loop implementations used as oracles by the self-check and
// the test suite. They share no code with the optimized kernels.

#include <cstdint>
#include <vector>

#include "detr/annotate.hpp"
#include "detr/deform_attn.hpp"
#include "detr/matcher.hpp"

namespace detr::reference {

// map[H, W, d] row-major; zero outside the map. Pixel centers at integers.
std::vector<double> Bilinear(const std::vector<double>& map, std::int64_t height, std::int64_t width,
                             std::int64_t channels, double x, double y);

// Same contract as MsDeformAttnCore, on raw buffers.
std::vector<double> MsDeformAttn(const std::vector<double>& value, std::int64_t head_dim, std::int64_t heads,
                                 const std::vector<LevelShape>& shapes, const std::vector<double>& ref_points,
                                 const std::vector<double>& offsets, const std::vector<double>& weights,
                                 std::int64_t num_queries, std::int64_t points);

// Same contract as RoiAlign: [N, grid, grid, d].
std::vector<double> RoiAlign(const std::vector<double>& features, std::int64_t height, std::int64_t width,
                             std::int64_t channels, const std::vector<double>& boxes, std::int64_t grid);

// Minimum total cost over every injective assignment of the smaller side.
double BruteForceAssignmentCost(const CostMatrix& cost);

// Per-pixel min/max scan; per-component mode labels 8-connected components
// by repeated neighbor relaxation.
std::vector<BoxXyWh> MaskBoxes(const MaskImage& mask, MaskBoxMode mode);

}  // namespace detr::reference
