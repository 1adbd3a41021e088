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

#include "detr/deform_attn.hpp"
#include "detr/layers.hpp"
#include "detr/params.hpp"
#include "detr/sam.hpp"
#include "detr/tensor.hpp"

namespace detr {

struct DetectorConfig {
  std::int64_t dim = 32;          // channel width d of queries and features
  std::int64_t num_queries = 10;  // N
  std::int64_t heads = 4;         // M: attention heads = salient points per box
  std::int64_t levels = 4;        // L
  std::int64_t encoder_layers = 2;
  std::int64_t decoder_layers = 2;
  std::int64_t num_classes = 2;  // C, excluding no-object
  std::int64_t image_height = 64;
  std::int64_t image_width = 64;
  // Output channels of the stride-2 conv stages: two stem stages (strides 2
  // and 4) and then one per pyramid level (strides 8, 16, ...).
  std::vector<std::int64_t> backbone_channels{16, 32, 32, 48, 64, 64};
  // 3x3 convs per stage; the first is strided, the rest keep resolution.
  std::int64_t backbone_depth = 1;
  std::int64_t points = 4;  // K samples per head per level
  std::int64_t ffn_dim = 64;
  std::int64_t roi_grid = 7;
  std::int64_t salient_hidden = 64;
  bool sam_enabled = true;
  bool aux_loss = true;
  double query_init_std = 0.02;

  // 64x64 images, d=32, E=D=2, N=10, M=4, L=4.
  static DetectorConfig Desk();
  // d=256, M=8, L=4, E=D=6, N=300.
  static DetectorConfig Full();

  void Validate() const;
  std::int64_t deepest_stride() const;
  std::string ToJson() const;
  static DetectorConfig FromJson(const std::string& text);
  bool operator==(const DetectorConfig&) const = default;
};

// Predictions of one decoder layer for one image.
struct LayerPrediction {
  Tensor logits;     // [N, C+1]; last column is no-object
  Tensor probs;      // softmax(logits)
  Tensor boxes;      // [N, 4] normalized cxcywh
  Tensor ref_boxes;  // [N, 4] reference boxes used by this layer
  int level = -1;    // pyramid level read by the aligner
  Shape cross_attn_input_shape;
};

struct DecoderState {
  Tensor content;  // [N, d]
  AlignedQueries aligned;
};

class Detector {
 public:
  Detector(const DetectorConfig& config, std::uint64_t seed);

  const DetectorConfig& config() const { return config_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }

  // image[3, H, W] -> pyramid with levels [H/8, W/8, d], [H/16, W/16, d], ...
  FeaturePyramid Backbone(const Tensor& image) const;
  FeaturePyramid Encode(const FeaturePyramid& pyramid) const;
  // One state per decoder layer.
  std::vector<DecoderState> Decode(const FeaturePyramid& encoded, const Tensor& query_content,
                                   const Tensor& query_pos) const;
  LayerPrediction Heads(const Tensor& content) const;

  std::vector<LayerPrediction> Forward(const Tensor& image) const;

  // Decoder layer i reads pyramid level i mod L.
  int RoutedLevel(int layer) const { return static_cast<int>(layer % config_.levels); }

  Tensor query_content() const { return query_content_; }
  Tensor query_pos() const { return query_pos_; }

  // Positional encoding of every flattened pyramid position: sine of the
  // normalized location plus the learned level embedding.
  Tensor EncoderPositions(const FeaturePyramid& pyramid) const;

  struct EncoderLayer {
    MsDeformAttn attn;
    Norm norm1, norm2;
    LinearLayer ffn1, ffn2;
  };
  struct DecoderLayer {
    SemanticAligner aligner;
    MsDeformAttn cross_attn;
    Norm norm1, norm2, norm3;
    LinearLayer q_proj, k_proj, v_proj, o_proj;
    LinearLayer ffn1, ffn2;
  };
  const std::vector<EncoderLayer>& encoder_layers() const { return encoder_; }
  const std::vector<DecoderLayer>& decoder_layers() const { return decoder_; }

  // Self-attention over queries. Public for reference checks.
  Tensor SelfAttention(const DecoderLayer& layer, const Tensor& content, const Tensor& pos) const;

 private:
  DetectorConfig config_;
  ParamStore params_;
  struct Conv {
    Tensor weight, bias;
  };
  std::vector<std::vector<Conv>> stages_;
  std::vector<LinearLayer> input_proj_;
  Tensor level_embed_;
  std::vector<EncoderLayer> encoder_;
  std::vector<DecoderLayer> decoder_;
  Tensor query_content_, query_pos_;
  LinearLayer class_head_;
  Mlp box_head_;
};

// Versioned binary container: magic, format version, config JSON, then every
// named parameter with its shape and f64 data (little-endian).
void SaveCheckpoint(const std::string& path, const Detector& detector);
// Rebuilds the detector from the stored config and loads every parameter.
Detector LoadCheckpoint(const std::string& path);

inline constexpr std::uint32_t kCheckpointVersion = 1;

}  // namespace detr
