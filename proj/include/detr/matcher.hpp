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
#include <utility>
#include <vector>

#include "detr/box.hpp"
#include "detr/model.hpp"
#include "detr/tensor.hpp"

namespace detr {

// Row-major rows x cols cost matrix.
struct CostMatrix {
  std::int64_t rows = 0;
  std::int64_t cols = 0;
  std::vector<double> values;

  double at(std::int64_t r, std::int64_t c) const { return values[static_cast<std::size_t>(r * cols + c)]; }
};

// (row, col) pairs sorted by row.
using Assignment = std::vector<std::pair<std::int64_t, std::int64_t>>;

// Minimum-cost one-to-one assignment of min(rows, cols) pairs via shortest
// augmenting paths with potentials (O(n^2 m)). Throws on non-finite entries.
Assignment HungarianMatch(const CostMatrix& cost);
double AssignmentCost(const CostMatrix& cost, const Assignment& assignment);

struct LossWeights {
  double cls = 1.0;
  double l1 = 5.0;
  double giou = 2.0;
  double no_object = 0.1;
};

// Ground truth for one image: normalized cxcywh boxes, labels in [0, C).
struct Targets {
  std::vector<BoxCxCyWh> boxes;
  std::vector<std::int64_t> labels;
};

// cost(i, j) = -cls * p_i(label_j) + l1 * |b_i - b_j|_1 - giou * giou(b_i, b_j)
// from probabilities [N, C+1] and boxes [N, 4].
CostMatrix MatchCost(std::span<const double> probs, std::span<const double> boxes, std::int64_t num_queries,
                     std::int64_t num_classes_with_bg, const Targets& targets, const LossWeights& weights);

struct LossBreakdown {
  Tensor total;  // scalar on the tape
  double cls = 0.0;
  double l1 = 0.0;
  double giou = 0.0;
};

// Set-prediction loss for a batch: for each image and each decoder layer,
// match (assignment held constant), then sum weighted cross-entropy over all
// queries (matched: weight 1 on the target class, unmatched: no_object weight
// on the no-object class), l1 * L1 and giou * (1 - GIoU) over matched pairs.
// Summed over layers, averaged over images.
LossBreakdown SetLoss(const std::vector<std::vector<LayerPrediction>>& per_image_layers,
                      const std::vector<Targets>& targets, const LossWeights& weights);

}  // namespace detr
