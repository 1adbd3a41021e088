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

namespace detr::internal {

// One in-bounds neighbor of a bilinear sample: flattened pixel index
// (y * W + x), its weight, and the weight's derivatives in x and y.
struct Corner {
  std::int64_t pixel;
  double w;
  double dwx;
  double dwy;
};

// Fills up to four in-bounds corners for coordinates (x, y); returns count.
int BilinearCorners(std::int64_t height, std::int64_t width, double x, double y, Corner out[4]);

}  // namespace detr::internal
