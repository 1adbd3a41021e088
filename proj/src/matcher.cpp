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

#include "detr/matcher.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "detr/error.hpp"

namespace detr {

Assignment HungarianMatch(const CostMatrix& cost) {
  if (cost.rows == 0 || cost.cols == 0) return {};
  if (static_cast<std::int64_t>(cost.values.size()) != cost.rows * cost.cols) {
    Fail(ErrorKind::kDimension, "cost matrix storage does not match its shape");
  }
  for (double v : cost.values) {
    if (!std::isfinite(v)) Fail(ErrorKind::kNumeric, "cost matrix has a non-finite entry");
  }
  // Work on n <= m; transpose when there are more rows than columns.
  const bool transposed = cost.rows > cost.cols;
  const std::int64_t n = transposed ? cost.cols : cost.rows;
  const std::int64_t m = transposed ? cost.rows : cost.cols;
  auto a = [&](std::int64_t i, std::int64_t j) { return transposed ? cost.at(j, i) : cost.at(i, j); };

  // 1-based potentials u (rows), v (cols); p[j] = row matched to column j.
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(static_cast<std::size_t>(n + 1), 0.0), v(static_cast<std::size_t>(m + 1), 0.0);
  std::vector<std::int64_t> p(static_cast<std::size_t>(m + 1), 0), way(static_cast<std::size_t>(m + 1), 0);
  for (std::int64_t i = 1; i <= n; ++i) {
    p[0] = i;
    std::int64_t j0 = 0;
    std::vector<double> minv(static_cast<std::size_t>(m + 1), inf);
    std::vector<char> used(static_cast<std::size_t>(m + 1), 0);
    do {
      used[static_cast<std::size_t>(j0)] = 1;
      const std::int64_t i0 = p[static_cast<std::size_t>(j0)];
      double delta = inf;
      std::int64_t j1 = 0;
      for (std::int64_t j = 1; j <= m; ++j) {
        const auto ju = static_cast<std::size_t>(j);
        if (used[ju]) continue;
        const double cur = a(i0 - 1, j - 1) - u[static_cast<std::size_t>(i0)] - v[ju];
        if (cur < minv[ju]) {
          minv[ju] = cur;
          way[ju] = j0;
        }
        if (minv[ju] < delta) {
          delta = minv[ju];
          j1 = j;
        }
      }
      for (std::int64_t j = 0; j <= m; ++j) {
        const auto ju = static_cast<std::size_t>(j);
        if (used[ju]) {
          u[static_cast<std::size_t>(p[ju])] += delta;
          v[ju] -= delta;
        } else {
          minv[ju] -= delta;
        }
      }
      j0 = j1;
    } while (p[static_cast<std::size_t>(j0)] != 0);
    do {
      const std::int64_t j1 = way[static_cast<std::size_t>(j0)];
      p[static_cast<std::size_t>(j0)] = p[static_cast<std::size_t>(j1)];
      j0 = j1;
    } while (j0 != 0);
  }

  Assignment out;
  for (std::int64_t j = 1; j <= m; ++j) {
    const std::int64_t i = p[static_cast<std::size_t>(j)];
    if (i == 0) continue;
    if (transposed) {
      out.emplace_back(j - 1, i - 1);
    } else {
      out.emplace_back(i - 1, j - 1);
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

double AssignmentCost(const CostMatrix& cost, const Assignment& assignment) {
  double total = 0.0;
  for (const auto& [r, c] : assignment) total += cost.at(r, c);
  return total;
}

CostMatrix MatchCost(std::span<const double> probs, std::span<const double> boxes, std::int64_t num_queries,
                     std::int64_t num_classes_with_bg, const Targets& targets, const LossWeights& weights) {
  const auto num_gt = static_cast<std::int64_t>(targets.boxes.size());
  if (static_cast<std::int64_t>(targets.labels.size()) != num_gt) {
    Fail(ErrorKind::kContract, "targets have mismatched box and label counts");
  }
  CostMatrix cost{num_queries, num_gt, std::vector<double>(static_cast<std::size_t>(num_queries * num_gt))};
  for (std::int64_t i = 0; i < num_queries; ++i) {
    const double* b = boxes.data() + 4 * i;
    const BoxCxCyWh pb{b[0], b[1], b[2], b[3]};
    const BoxXyxy px = CxCyWhCorners(pb);
    for (std::int64_t j = 0; j < num_gt; ++j) {
      const auto& g = targets.boxes[static_cast<std::size_t>(j)];
      const std::int64_t label = targets.labels[static_cast<std::size_t>(j)];
      if (label < 0 || label >= num_classes_with_bg - 1) {
        Fail(ErrorKind::kContract, "target label " + std::to_string(label) + " out of range");
      }
      const double p = probs[static_cast<std::size_t>(i * num_classes_with_bg + label)];
      const double l1 = std::abs(pb.cx - g.cx) + std::abs(pb.cy - g.cy) + std::abs(pb.w - g.w) + std::abs(pb.h - g.h);
      const double gi = Giou(px, CxCyWhCorners(g));
      cost.values[static_cast<std::size_t>(i * num_gt + j)] = -weights.cls * p + weights.l1 * l1 - weights.giou * gi;
    }
  }
  return cost;
}

LossBreakdown SetLoss(const std::vector<std::vector<LayerPrediction>>& per_image_layers,
                      const std::vector<Targets>& targets, const LossWeights& weights) {
  if (per_image_layers.size() != targets.size() || targets.empty()) {
    Fail(ErrorKind::kContract, "set loss needs one target set per image");
  }
  LossBreakdown out;
  std::vector<Tensor> terms;
  const double inv_images = 1.0 / static_cast<double>(targets.size());
  for (std::size_t img = 0; img < targets.size(); ++img) {
    const Targets& tgt = targets[img];
    for (const auto& pred : per_image_layers[img]) {
      const std::int64_t n = pred.logits.dim(0);
      const std::int64_t classes = pred.logits.dim(1);
      const std::int64_t no_object = classes - 1;
      Assignment match;
      if (!tgt.boxes.empty()) {
        match = HungarianMatch(MatchCost(pred.probs.data(), pred.boxes.data(), n, classes, tgt, weights));
      }
      std::vector<std::int64_t> target_class(static_cast<std::size_t>(n), no_object);
      std::vector<double> class_weight(static_cast<std::size_t>(n), weights.no_object);
      for (const auto& [q, g] : match) {
        target_class[static_cast<std::size_t>(q)] = tgt.labels[static_cast<std::size_t>(g)];
        class_weight[static_cast<std::size_t>(q)] = 1.0;
      }
      const Tensor logp = Pick(LogSoftmax(pred.logits, -1), target_class);
      const Tensor ce = Scale(Sum(Mul(logp, Tensor::FromData({n}, class_weight))), -weights.cls * inv_images);
      terms.push_back(ce);
      out.cls += ce.item();

      if (match.empty()) continue;
      std::vector<std::int64_t> rows;
      std::vector<double> gt;
      for (const auto& [q, g] : match) {
        rows.push_back(q);
        const auto& b = tgt.boxes[static_cast<std::size_t>(g)];
        gt.insert(gt.end(), {b.cx, b.cy, b.w, b.h});
      }
      const auto k = static_cast<std::int64_t>(rows.size());
      const Tensor matched = IndexRows(pred.boxes, rows);
      const Tensor gt_boxes = Tensor::FromData({k, 4}, std::move(gt));
      const Tensor l1 = Scale(Sum(Abs(Sub(matched, gt_boxes))), weights.l1 * inv_images);
      const Tensor giou = Scale(AddScalar(Neg(Sum(GeneralizedIou(matched, gt_boxes))), static_cast<double>(k)),
                                weights.giou * inv_images);
      terms.push_back(l1);
      terms.push_back(giou);
      out.l1 += l1.item();
      out.giou += giou.item();
    }
  }
  Tensor total = terms[0];
  for (std::size_t i = 1; i < terms.size(); ++i) total = Add(total, terms[i]);
  out.total = total;
  return out;
}

}  // namespace detr
