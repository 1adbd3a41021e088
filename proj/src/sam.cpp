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

#include "detr/sam.hpp"

#include "bilinear_internal.hpp"
#include "detr/deform_attn.hpp"
#include "detr/error.hpp"

namespace detr {

using internal::BilinearCorners;
using internal::Corner;

Tensor ProjectRefBoxes(const Tensor& pos, const LinearLayer& proj) { return Sigmoid(proj(pos)); }

Tensor ProjectRefPoints(const Tensor& ref_boxes, const LinearLayer& proj) {
  if (ref_boxes.rank() != 2 || ref_boxes.dim(1) != 4) {
    Fail(ErrorKind::kDimension, "reference boxes must be [N, 4], got " + ShapeString(ref_boxes.shape()));
  }
  return Sigmoid(proj(ref_boxes));
}

Tensor RoiAlign(const Tensor& level_features, const Tensor& boxes, std::int64_t grid) {
  if (level_features.rank() != 3 || boxes.rank() != 2 || boxes.dim(1) != 4) {
    Fail(ErrorKind::kDimension, "roi_align: features " + ShapeString(level_features.shape()) + ", boxes " +
                                    ShapeString(boxes.shape()));
  }
  if (grid < 1) Fail(ErrorKind::kContract, "roi_align grid must be >= 1");
  const std::int64_t h = level_features.dim(0), w = level_features.dim(1), d = level_features.dim(2);
  const std::int64_t n = boxes.dim(0);
  const auto fw = static_cast<double>(w), fh = static_cast<double>(h);
  const auto g = static_cast<double>(grid);

  // Bin (gy, gx) of box b samples at normalized
  //   x = cx + w_box * ((gx + 0.5) / grid - 0.5), likewise y.
  auto frac = [g](std::int64_t i) { return (static_cast<double>(i) + 0.5) / g - 0.5; };

  Tensor out = Tensor::Zeros({n, grid, grid, d});
  {
    auto fd = level_features.data();
    auto bd = boxes.data();
    auto o = out.mutable_data();
    for (std::int64_t b = 0; b < n; ++b) {
      const double cx = bd[static_cast<std::size_t>(4 * b)], cy = bd[static_cast<std::size_t>(4 * b + 1)];
      const double bw = bd[static_cast<std::size_t>(4 * b + 2)], bh = bd[static_cast<std::size_t>(4 * b + 3)];
      for (std::int64_t gy = 0; gy < grid; ++gy) {
        for (std::int64_t gx = 0; gx < grid; ++gx) {
          const double x = (cx + bw * frac(gx)) * fw - 0.5;
          const double y = (cy + bh * frac(gy)) * fh - 0.5;
          BilinearSample(fd, h, w, d, x, y,
                         o.subspan(static_cast<std::size_t>(((b * grid + gy) * grid + gx) * d),
                                   static_cast<std::size_t>(d)));
        }
      }
    }
  }
  if (GradEnabled() && (level_features.requires_grad() || boxes.requires_grad())) {
    out.set_requires_grad(true);
    Tape::Active().Record({level_features, boxes}, out, [level_features, boxes, out, h, w, d, n, grid, fw, fh, frac]() mutable {
      auto go = out.grad();
      auto fd = level_features.data();
      auto bd = boxes.data();
      std::span<double> gf, gb;
      if (level_features.requires_grad()) gf = level_features.mutable_grad();
      if (boxes.requires_grad()) gb = boxes.mutable_grad();
      Corner corners[4];
      for (std::int64_t b = 0; b < n; ++b) {
        const double cx = bd[static_cast<std::size_t>(4 * b)], cy = bd[static_cast<std::size_t>(4 * b + 1)];
        const double bw = bd[static_cast<std::size_t>(4 * b + 2)], bh = bd[static_cast<std::size_t>(4 * b + 3)];
        for (std::int64_t gy = 0; gy < grid; ++gy) {
          for (std::int64_t gx = 0; gx < grid; ++gx) {
            const double x = (cx + bw * frac(gx)) * fw - 0.5;
            const double y = (cy + bh * frac(gy)) * fh - 0.5;
            const double* gout = go.data() + ((b * grid + gy) * grid + gx) * d;
            const int k = BilinearCorners(h, w, x, y, corners);
            double dx = 0.0, dy = 0.0;
            for (int i = 0; i < k; ++i) {
              const std::int64_t base = corners[i].pixel * d;
              double dot = 0.0;
              for (std::int64_t c = 0; c < d; ++c) {
                dot += gout[c] * fd[static_cast<std::size_t>(base + c)];
                if (!gf.empty()) gf[static_cast<std::size_t>(base + c)] += corners[i].w * gout[c];
              }
              dx += corners[i].dwx * dot;
              dy += corners[i].dwy * dot;
            }
            if (!gb.empty()) {
              gb[static_cast<std::size_t>(4 * b)] += dx * fw;
              gb[static_cast<std::size_t>(4 * b + 1)] += dy * fh;
              gb[static_cast<std::size_t>(4 * b + 2)] += dx * fw * frac(gx);
              gb[static_cast<std::size_t>(4 * b + 3)] += dy * fh * frac(gy);
            }
          }
        }
      }
    });
  }
  return out;
}

SalientSamples ResampleSalient(const Tensor& regions, const Tensor& ref_boxes, const Tensor& level_features,
                               const Mlp& predictor, std::int64_t num_points) {
  if (regions.rank() != 4 || ref_boxes.rank() != 2 || regions.dim(0) != ref_boxes.dim(0)) {
    Fail(ErrorKind::kDimension, "resample_salient: regions " + ShapeString(regions.shape()) + ", boxes " +
                                    ShapeString(ref_boxes.shape()));
  }
  const std::int64_t n = regions.dim(0);
  const std::int64_t d = level_features.dim(2);
  const std::int64_t out_width = predictor.layers.empty() ? 0 : predictor.layers.back().weight.dim(1);
  if (out_width != 2 * num_points) {
    Fail(ErrorKind::kContract, "resample_salient: predictor emits " + std::to_string(out_width) +
                                   " values, need 2 per salient point (M = " + std::to_string(num_points) +
                                   ", which must equal the attention head count)");
  }
  const Tensor flat = Reshape(regions, {n, static_cast<std::int64_t>(regions.numel()) / n});
  // (0,1) placement inside the box, then affinely into it.
  const Tensor unit = Reshape(Sigmoid(predictor(flat)), {n, num_points, 2});
  const Tensor center = Reshape(Slice(ref_boxes, 1, 0, 2), {n, 1, 2});
  const Tensor size = Reshape(Slice(ref_boxes, 1, 2, 2), {n, 1, 2});
  const Tensor points = Add(center, Mul(size, AddScalar(unit, -0.5)));

  const Tensor flat_points = Reshape(points, {n * num_points, 2});
  const Tensor pixel_scale =
      Tensor::FromData({2}, {static_cast<double>(level_features.dim(1)), static_cast<double>(level_features.dim(0))});
  const Tensor pixels = AddScalar(Mul(flat_points, pixel_scale), -0.5);

  SalientSamples out;
  out.points = points;
  out.content = Reshape(SamplePoints(level_features, pixels), {n, num_points, d});
  out.pos = Reshape(SineEmbed(flat_points, d), {n, num_points, d});
  return out;
}

ReweightedQueries Reweight(const Tensor& old_content, const Tensor& old_pos, const Tensor& new_content,
                           const Tensor& new_pos, const LinearLayer& content_gate, const LinearLayer& pos_gate) {
  if (new_content.rank() != 3 || new_content.shape() != new_pos.shape() || old_content.rank() != 2 ||
      old_content.shape() != old_pos.shape() || old_content.dim(0) != new_content.dim(0) ||
      old_content.dim(1) != new_content.dim(2)) {
    Fail(ErrorKind::kDimension, "reweight: old " + ShapeString(old_content.shape()) + " / new " +
                                    ShapeString(new_content.shape()) + " incompatible");
  }
  const std::int64_t n = new_content.dim(0), m = new_content.dim(1), d = new_content.dim(2);
  ReweightedQueries out;
  out.content_gate = Reshape(Sigmoid(content_gate(old_content)), {n, m, d});
  out.pos_gate = Reshape(Sigmoid(pos_gate(old_content)), {n, m, d});
  const Tensor old_c = Reshape(old_content, {n, 1, d});
  const Tensor old_p = Reshape(old_pos, {n, 1, d});
  out.content = Add(old_c, Mul(out.content_gate, Sub(new_content, old_c)));
  out.pos = Add(old_p, Mul(out.pos_gate, Sub(new_pos, old_p)));
  return out;
}

Tensor ReshapeForCrossAttn(const Tensor& q) {
  if (q.rank() != 3) Fail(ErrorKind::kDimension, "expected [N, M, d], got " + ShapeString(q.shape()));
  return Reshape(q, {q.dim(0), q.dim(1) * q.dim(2)});
}

Tensor UnflattenHeads(const Tensor& flat, std::int64_t heads) {
  if (flat.rank() != 2 || flat.dim(1) % heads != 0) {
    Fail(ErrorKind::kDimension, "cannot split " + ShapeString(flat.shape()) + " into " + std::to_string(heads) + " heads");
  }
  return Reshape(flat, {flat.dim(0), heads, flat.dim(1) / heads});
}

SemanticAligner::SemanticAligner(ParamStore& store, const std::string& prefix, const SemanticAlignerConfig& config,
                                 ParamGroup group, Rng& rng)
    : config_(config) {
  const auto& c = config;
  ref_box_proj_ = LinearLayer::Create(store, prefix + ".ref_box_proj", c.dim, 4, group, rng);
  ref_point_proj_ = LinearLayer::Create(store, prefix + ".ref_point_proj", 4, 2, group, rng);
  if (c.enabled) {
    predictor_ = Mlp::Create(store, prefix + ".salient", {c.grid * c.grid * c.dim, c.predictor_hidden, 2 * c.heads},
                             group, rng);
    content_gate_ = LinearLayer::Create(store, prefix + ".content_gate", c.dim, c.heads * c.dim, group, rng);
    pos_gate_ = LinearLayer::Create(store, prefix + ".pos_gate", c.dim, c.heads * c.dim, group, rng);
  }
}

AlignedQueries SemanticAligner::Forward(const Tensor& content, const Tensor& pos, const Tensor& level_features,
                                        int level) const {
  const auto& c = config_;
  if (content.rank() != 2 || content.dim(1) != c.dim || pos.shape() != content.shape()) {
    Fail(ErrorKind::kDimension, "semantic aligner: queries " + ShapeString(content.shape()) + " / pos " +
                                    ShapeString(pos.shape()) + " must be [N, " + std::to_string(c.dim) + "]");
  }
  const std::int64_t n = content.dim(0);
  AlignedQueries out;
  out.level = level;
  out.ref_boxes = ProjectRefBoxes(pos, ref_box_proj_);
  out.ref_points = ProjectRefPoints(out.ref_boxes, ref_point_proj_);

  Tensor new_content, new_pos;
  if (c.enabled) {
    const Tensor regions = RoiAlign(level_features, out.ref_boxes, c.grid);
    SalientSamples salient = ResampleSalient(regions, out.ref_boxes, level_features, predictor_, c.heads);
    ReweightedQueries q = Reweight(content, pos, salient.content, salient.pos, content_gate_, pos_gate_);
    out.salient_points = salient.points;
    out.content_gate = q.content_gate;
    new_content = q.content;
    new_pos = q.pos;
  } else {
    // Every salient point at the box center, fixed half/half blend.
    const Tensor centers = Slice(out.ref_boxes, 1, 0, 2);
    const Tensor pixel_scale = Tensor::FromData(
        {2}, {static_cast<double>(level_features.dim(1)), static_cast<double>(level_features.dim(0))});
    const Tensor sample = SamplePoints(level_features, AddScalar(Mul(centers, pixel_scale), -0.5));
    const Tensor sample_pos = SineEmbed(centers, c.dim);
    const Tensor ones = Tensor::Full({1, c.heads, 1}, 1.0);
    auto blend = [&](const Tensor& fresh, const Tensor& old) {
      return Mul(Reshape(Scale(Add(fresh, old), 0.5), {n, 1, c.dim}), ones);
    };
    out.salient_points = Mul(Reshape(centers, {n, 1, 2}), Tensor::Full({1, c.heads, 1}, 1.0));
    new_content = blend(sample, content);
    new_pos = blend(sample_pos, pos);
  }
  out.content = ReshapeForCrossAttn(new_content);
  out.pos = ReshapeForCrossAttn(new_pos);
  return out;
}

}  // namespace detr
