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

// Procedural detection data: noisy background with a few bright,
// non-overlapping shapes. Category ids 1.. map to rectangle, ellipse, diamond.

#include <cstdint>
#include <string>
#include <vector>

#include "detr/coco.hpp"
#include "detr/imageio.hpp"

namespace detr {

struct SyntheticOptions {
  std::uint64_t seed = 0;
  std::int64_t count = 1;
  std::int64_t width = 64;
  std::int64_t height = 64;
  std::int64_t classes = 2;  // 1..3
  // Shape extent range as a fraction of the image side (before the 4 px floor).
  double min_size = 0.25;
  double max_size = 0.5;
};

struct SyntheticDataset {
  std::vector<RgbImage> images;
  CocoDataset coco;  // file_name = "synth_<index>.ppm"
};

inline constexpr std::int64_t kMaxSyntheticClasses = 3;

SyntheticDataset GenerateSynthetic(const SyntheticOptions& options);

// Writes <dir>/synth_*.ppm and <dir>/annotations.json; creates dir.
void WriteSynthetic(const SyntheticDataset& data, const std::string& dir);

}  // namespace detr
