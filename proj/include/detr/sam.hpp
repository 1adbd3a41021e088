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

// Semantic aligner: rebuilds each object query from encoded image features
// inside its reference box, so the cross-attention query and the memory it
// attends to live in one embedding space.
//
//   pos --linear+sigmoid--> ref box --linear+sigmoid--> ref point
//   ref box --ROIAlign on one level--> region grid --MLP--> M salient points
//   salient points --bilinear sample--> new content, --sine--> new pos
//   old/new blended by sigmoid gates computed from the old content
//   [N, M, d] flattened to [N, M*d] for the cross-attention.

#include <cstdint>
#include <string>

#include "detr/layers.hpp"
#include "detr/params.hpp"
#include "detr/tensor.hpp"

namespace detr {

// pos[N, d] -> [N, 4] normalized cxcywh in (0, 1).
Tensor ProjectRefBoxes(const Tensor& pos, const LinearLayer& proj);

// ref_boxes[N, 4] -> [N, 2] normalized. Not tied to the box center.
Tensor ProjectRefPoints(const Tensor& ref_boxes, const LinearLayer& proj);

// One bilinear sample at each of the grid x grid bin centers of every box on
// level_features[H, W, d]. boxes[N, 4] normalized cxcywh -> [N, grid, grid, d].
// Differentiable in both the features and the boxes.
Tensor RoiAlign(const Tensor& level_features, const Tensor& boxes, std::int64_t grid);

struct SalientSamples {
  Tensor points;   // [N, M, 2] normalized, inside the reference boxes
  Tensor content;  // [N, M, d]
  Tensor pos;      // [N, M, d]
};

// predictor maps flattened regions [N, G*G*d] to [N, M*2] logits.
SalientSamples ResampleSalient(const Tensor& regions, const Tensor& ref_boxes, const Tensor& level_features,
                               const Mlp& predictor, std::int64_t num_points);

struct ReweightedQueries {
  Tensor content;       // [N, M, d]
  Tensor pos;           // [N, M, d]
  Tensor content_gate;  // [N, M, d] in (0, 1)
  Tensor pos_gate;
};

// gate = sigmoid(linear(old_content)); out = gate * new + (1 - gate) * old,
// with old broadcast across the M axis.
ReweightedQueries Reweight(const Tensor& old_content, const Tensor& old_pos, const Tensor& new_content,
                           const Tensor& new_pos, const LinearLayer& content_gate, const LinearLayer& pos_gate);

// [N, M, d] -> [N, M*d]; element (n, m, c) lands at column m*d + c.
Tensor ReshapeForCrossAttn(const Tensor& q);
Tensor UnflattenHeads(const Tensor& flat, std::int64_t heads);

struct SemanticAlignerConfig {
  std::int64_t dim = 256;
  std::int64_t heads = 8;  // number of salient points, equal to attention heads
  std::int64_t grid = 7;
  std::int64_t predictor_hidden = 256;
  // When false the aligner takes the box center as every salient point and
  // blends with fixed 0.5 gates, using no predictor or gate parameters.
  bool enabled = true;
};

struct AlignedQueries {
  Tensor ref_boxes;        // [N, 4]
  Tensor ref_points;       // [N, 2]
  Tensor salient_points;   // [N, M, 2]
  Tensor content;          // [N, M*d]
  Tensor pos;              // [N, M*d]
  Tensor content_gate;     // [N, M, d] (undefined when disabled)
  int level = -1;          // pyramid level the block read
};

class SemanticAligner {
 public:
  SemanticAligner() = default;
  SemanticAligner(ParamStore& store, const std::string& prefix, const SemanticAlignerConfig& config,
                  ParamGroup group, Rng& rng);

  AlignedQueries Forward(const Tensor& content, const Tensor& pos, const Tensor& level_features, int level) const;

  const SemanticAlignerConfig& config() const { return config_; }
  const LinearLayer& ref_box_proj() const { return ref_box_proj_; }
  const LinearLayer& ref_point_proj() const { return ref_point_proj_; }
  const Mlp& predictor() const { return predictor_; }
  const LinearLayer& content_gate() const { return content_gate_; }
  const LinearLayer& pos_gate() const { return pos_gate_; }

 private:
  SemanticAlignerConfig config_;
  LinearLayer ref_box_proj_, ref_point_proj_, content_gate_, pos_gate_;
  Mlp predictor_;
};

}  // namespace detr
