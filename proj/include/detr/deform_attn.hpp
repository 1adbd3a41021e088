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

// Multi-scale deformable attention over a feature pyramid.
//
// Coordinate convention (shared by every sampler in this library): pixel
// centers sit at integer coordinates, so a normalized point p in [0,1]^2 maps
// to level-l sampling coordinates (p.x * W_l - 0.5, p.y * H_l - 0.5).
// Neighbors outside the map contribute zero.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "detr/layers.hpp"
#include "detr/params.hpp"
#include "detr/tensor.hpp"

namespace detr {

struct LevelShape {
  std::int64_t h = 0;
  std::int64_t w = 0;
};

// Bilinear interpolation of map[H, W, d] (row-major, channel fastest) at
// continuous pixel coordinates (x, y). Writes d values into out.
void BilinearSample(std::span<const double> map, std::int64_t height, std::int64_t width, std::int64_t channels,
                    double x, double y, std::span<double> out);
std::vector<double> BilinearSample(const Tensor& map, double x, double y);

// Differentiable point sampler: map[H, W, d], points[P, 2] in pixel
// coordinates -> [P, d].
Tensor SamplePoints(const Tensor& map, const Tensor& points_px);

// Levels flattened row-major into one [S, d] sequence.
struct FeaturePyramid {
  Tensor flat;
  std::vector<LevelShape> shapes;
  std::vector<std::int64_t> starts;

  static FeaturePyramid FromLevels(const std::vector<Tensor>& maps);  // each [H, W, d]
  std::int64_t channels() const { return flat.dim(1); }
  std::int64_t length() const { return flat.dim(0); }
  int num_levels() const { return static_cast<int>(shapes.size()); }
  // Level l as [H_l, W_l, d] (differentiable view copy).
  Tensor Level(int l) const;
  // Normalized pixel-center locations of every flattened position, [S, 2].
  Tensor NormalizedLocations() const;
};

// Sampling core. value[S, heads*head_dim]; ref_points[N, 2] normalized;
// offsets[N, heads, L, K, 2] in level pixels; weights[N, heads, L, K]
// (already normalized). Returns [N, heads*head_dim] where head m fills
// columns [m*head_dim, (m+1)*head_dim).
Tensor MsDeformAttnCore(const Tensor& value, const std::vector<LevelShape>& shapes,
                        const std::vector<std::int64_t>& starts, const Tensor& ref_points, const Tensor& offsets,
                        const Tensor& weights);

struct MsDeformAttnConfig {
  std::int64_t query_dim = 0;
  std::int64_t value_dim = 0;  // channels of the memory being sampled
  std::int64_t heads = 0;
  std::int64_t head_dim = 0;
  std::int64_t out_dim = 0;
  std::int64_t levels = 0;
  std::int64_t points = 0;
};

class MsDeformAttn {
 public:
  MsDeformAttn() = default;
  // Registers value/offset/attention/output projections under `prefix`.
  // Offset weights start at zero with a per-head ring of directions as bias;
  // attention logits start at zero.
  MsDeformAttn(ParamStore& store, const std::string& prefix, const MsDeformAttnConfig& config, ParamGroup group,
               Rng& rng);

  struct Trace {
    Tensor offsets;  // [N, heads, L, K, 2]
    Tensor weights;  // [N, heads, L, K]
  };

  // query[N, query_dim], ref_points[N, 2] normalized -> [N, out_dim].
  Tensor Forward(const Tensor& query, const Tensor& ref_points, const FeaturePyramid& memory,
                 Trace* trace = nullptr) const;

  const MsDeformAttnConfig& config() const { return config_; }
  const LinearLayer& value_proj() const { return value_proj_; }
  const LinearLayer& offset_proj() const { return offset_proj_; }
  const LinearLayer& attn_proj() const { return attn_proj_; }
  const LinearLayer& out_proj() const { return out_proj_; }

 private:
  MsDeformAttnConfig config_;
  LinearLayer value_proj_, offset_proj_, attn_proj_, out_proj_;
};

// Number of (query, head, level, point) samples taken by MsDeformAttnCore
// since the last reset.
std::int64_t DeformSampleCount();
void ResetDeformSampleCount();

namespace testing {
// Corrupts the bilinear weights of every sampler while enabled.
void SetBilinearFault(bool enabled);
bool BilinearFault();
}  // namespace testing

}  // namespace detr
