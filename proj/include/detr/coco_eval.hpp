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

// Bounding-box average precision over IoU thresholds 0.50:0.05:0.95 with
// 101-point interpolated precision, following the standard COCO procedure
// (no area ranges, no detection cap).

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "detr/coco.hpp"

namespace detr {

inline constexpr int kNumIouThresholds = 10;
inline constexpr int kNumRecallPoints = 101;

double IouThreshold(int index);  // (50 + 5 * index) / 100
double RecallPoint(int index);   // index / 100

struct CategoryEval {
  std::int64_t category_id = 0;
  std::int64_t num_gt = 0;
  std::array<double, kNumIouThresholds> ap{};
  // precision[t][r] at recall RecallPoint(r).
  std::vector<std::array<double, kNumRecallPoints>> precision;
};

struct EvalResult {
  // Categories with at least one ground-truth box, ascending id.
  std::vector<CategoryEval> categories;
  std::array<double, kNumIouThresholds> ap_per_threshold{};  // mean over categories
  double map = 0.0;
  double map50 = 0.0;
  double map75 = 0.0;

  std::string ToJson() const;
  static EvalResult FromJson(const std::string& text);
};

// Throws kValidation for detections naming an unknown image or category, or
// carrying a non-finite score / non-positive box.
EvalResult EvaluateDetections(const CocoDataset& gt, const std::vector<CocoDetection>& detections);

// Fixed-width table with columns mAP, mAP@0.5, mAP@0.75.
std::string FormatEvalTable(const EvalResult& result);

}  // namespace detr
