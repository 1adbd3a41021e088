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

#include "detr/deform_attn.hpp"

#include <atomic>
#include <cmath>
#include <numbers>

#include "detr/error.hpp"
#include "bilinear_internal.hpp"
#include "detr/parallel.hpp"

namespace detr {
namespace {

std::atomic<std::int64_t> g_sample_count{0};
std::atomic<bool> g_bilinear_fault{false};

}  // namespace

namespace internal {

int BilinearCorners(std::int64_t height, std::int64_t width, double x, double y, Corner out[4]) {
  const double x0f = std::floor(x);
  const double y0f = std::floor(y);
  double fx = x - x0f;
  const double fy = y - y0f;
  if (g_bilinear_fault.load(std::memory_order_relaxed)) fx *= 0.5;
  const auto x0 = static_cast<std::int64_t>(x0f);
  const auto y0 = static_cast<std::int64_t>(y0f);
  int n = 0;
  auto push = [&](std::int64_t cx, std::int64_t cy, double w, double dwx, double dwy) {
    if (cx < 0 || cy < 0 || cx >= width || cy >= height) return;
    out[n++] = Corner{cy * width + cx, w, dwx, dwy};
  };
  push(x0, y0, (1 - fx) * (1 - fy), -(1 - fy), -(1 - fx));
  push(x0 + 1, y0, fx * (1 - fy), (1 - fy), -fx);
  push(x0, y0 + 1, (1 - fx) * fy, -fy, (1 - fx));
  push(x0 + 1, y0 + 1, fx * fy, fy, fx);
  return n;
}

}  // namespace internal

using internal::BilinearCorners;
using internal::Corner;

namespace testing {
void SetBilinearFault(bool enabled) { g_bilinear_fault.store(enabled); }
bool BilinearFault() { return g_bilinear_fault.load(); }
}  // namespace testing

std::int64_t DeformSampleCount() { return g_sample_count.load(); }
void ResetDeformSampleCount() { g_sample_count.store(0); }

void BilinearSample(std::span<const double> map, std::int64_t height, std::int64_t width, std::int64_t channels,
                    double x, double y, std::span<double> out) {
  std::fill(out.begin(), out.end(), 0.0);
  Corner corners[4];
  const int n = BilinearCorners(height, width, x, y, corners);
  for (int i = 0; i < n; ++i) {
    const double* src = map.data() + corners[i].pixel * channels;
    for (std::int64_t c = 0; c < channels; ++c) out[static_cast<std::size_t>(c)] += corners[i].w * src[c];
  }
}

std::vector<double> BilinearSample(const Tensor& map, double x, double y) {
  if (map.rank() != 3) Fail(ErrorKind::kDimension, "bilinear sample expects [H, W, d], got " + ShapeString(map.shape()));
  std::vector<double> out(static_cast<std::size_t>(map.dim(2)));
  BilinearSample(map.data(), map.dim(0), map.dim(1), map.dim(2), x, y, out);
  return out;
}

Tensor SamplePoints(const Tensor& map, const Tensor& points_px) {
  if (map.rank() != 3 || points_px.rank() != 2 || points_px.dim(1) != 2) {
    Fail(ErrorKind::kDimension, "sample_points: map " + ShapeString(map.shape()) + ", points " +
                                    ShapeString(points_px.shape()));
  }
  const std::int64_t h = map.dim(0), w = map.dim(1), d = map.dim(2), p_count = points_px.dim(0);
  Tensor out = Tensor::Zeros({p_count, d});
  {
    auto md = map.data();
    auto pd = points_px.data();
    auto o = out.mutable_data();
    for (std::int64_t p = 0; p < p_count; ++p) {
      BilinearSample(md, h, w, d, pd[static_cast<std::size_t>(2 * p)], pd[static_cast<std::size_t>(2 * p + 1)],
                     o.subspan(static_cast<std::size_t>(p * d), static_cast<std::size_t>(d)));
    }
  }
  if (GradEnabled() && (map.requires_grad() || points_px.requires_grad())) {
    out.set_requires_grad(true);
    Tape::Active().Record({map, points_px}, out, [map, points_px, out, h, w, d, p_count]() mutable {
      auto go = out.grad();
      auto md = map.data();
      auto pd = points_px.data();
      std::span<double> gm, gp;
      if (map.requires_grad()) gm = map.mutable_grad();
      if (points_px.requires_grad()) gp = points_px.mutable_grad();
      Corner corners[4];
      for (std::int64_t p = 0; p < p_count; ++p) {
        const int n = BilinearCorners(h, w, pd[static_cast<std::size_t>(2 * p)], pd[static_cast<std::size_t>(2 * p + 1)], corners);
        const double* g = go.data() + p * d;
        double gx = 0.0, gy = 0.0;
        for (int i = 0; i < n; ++i) {
          const std::int64_t base = corners[i].pixel * d;
          double dot = 0.0;
          for (std::int64_t c = 0; c < d; ++c) {
            dot += g[c] * md[static_cast<std::size_t>(base + c)];
            if (!gm.empty()) gm[static_cast<std::size_t>(base + c)] += corners[i].w * g[c];
          }
          gx += corners[i].dwx * dot;
          gy += corners[i].dwy * dot;
        }
        if (!gp.empty()) {
          gp[static_cast<std::size_t>(2 * p)] += gx;
          gp[static_cast<std::size_t>(2 * p + 1)] += gy;
        }
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// FeaturePyramid

FeaturePyramid FeaturePyramid::FromLevels(const std::vector<Tensor>& maps) {
  if (maps.empty()) Fail(ErrorKind::kContract, "feature pyramid needs at least one level");
  FeaturePyramid pyr;
  std::vector<Tensor> rows;
  std::int64_t start = 0;
  const std::int64_t d = maps[0].dim(-1);
  for (const auto& m : maps) {
    if (m.rank() != 3 || m.dim(2) != d) {
      Fail(ErrorKind::kDimension, "pyramid level " + ShapeString(m.shape()) + " must be [H, W, " + std::to_string(d) + "]");
    }
    pyr.shapes.push_back({m.dim(0), m.dim(1)});
    pyr.starts.push_back(start);
    start += m.dim(0) * m.dim(1);
    rows.push_back(Reshape(m, {m.dim(0) * m.dim(1), d}));
  }
  pyr.flat = rows.size() == 1 ? rows[0] : Concat(rows, 0);
  return pyr;
}

Tensor FeaturePyramid::Level(int l) const {
  const auto& s = shapes.at(static_cast<std::size_t>(l));
  return Reshape(Slice(flat, 0, starts[static_cast<std::size_t>(l)], s.h * s.w), {s.h, s.w, channels()});
}

Tensor FeaturePyramid::NormalizedLocations() const {
  std::vector<double> locs;
  locs.reserve(static_cast<std::size_t>(2 * length()));
  for (const auto& s : shapes) {
    for (std::int64_t y = 0; y < s.h; ++y) {
      for (std::int64_t x = 0; x < s.w; ++x) {
        locs.push_back((static_cast<double>(x) + 0.5) / static_cast<double>(s.w));
        locs.push_back((static_cast<double>(y) + 0.5) / static_cast<double>(s.h));
      }
    }
  }
  return Tensor::FromData({length(), 2}, std::move(locs));
}

// ---------------------------------------------------------------------------
// Core

namespace {

// Level-pixel sampling position of a normalized reference plus pixel offset.
inline void SampleLocation(const LevelShape& s, const double* ref, const double* off, double* x, double* y) {
  *x = ref[0] * static_cast<double>(s.w) - 0.5 + off[0];
  *y = ref[1] * static_cast<double>(s.h) - 0.5 + off[1];
}

}  // namespace

Tensor MsDeformAttnCore(const Tensor& value, const std::vector<LevelShape>& shapes,
                        const std::vector<std::int64_t>& starts, const Tensor& ref_points, const Tensor& offsets,
                        const Tensor& weights) {
  if (offsets.rank() != 5 || weights.rank() != 4 || ref_points.rank() != 2 || value.rank() != 2) {
    Fail(ErrorKind::kDimension, "ms_deform_attn: expected value[S,C], ref[N,2], offsets[N,M,L,K,2], "
                                "weights[N,M,L,K]; got " +
                                    ShapeString(value.shape()) + ", " + ShapeString(ref_points.shape()) + ", " +
                                    ShapeString(offsets.shape()) + ", " + ShapeString(weights.shape()));
  }
  const std::int64_t n_q = offsets.dim(0), heads = offsets.dim(1), levels = offsets.dim(2), pts = offsets.dim(3);
  const Shape expect_w{n_q, heads, levels, pts};
  if (weights.shape() != expect_w || offsets.dim(4) != 2 || ref_points.dim(0) != n_q || ref_points.dim(1) != 2 ||
      static_cast<std::int64_t>(shapes.size()) != levels || starts.size() != shapes.size() ||
      value.dim(1) % heads != 0) {
    Fail(ErrorKind::kDimension, "ms_deform_attn: inconsistent shapes value " + ShapeString(value.shape()) +
                                    ", ref " + ShapeString(ref_points.shape()) + ", offsets " +
                                    ShapeString(offsets.shape()) + ", weights " + ShapeString(weights.shape()) +
                                    ", levels " + std::to_string(shapes.size()));
  }
  const std::int64_t channels = value.dim(1);
  const std::int64_t head_dim = channels / heads;
  std::int64_t total = 0;
  for (std::size_t l = 0; l < shapes.size(); ++l) {
    if (starts[l] != total) Fail(ErrorKind::kDimension, "ms_deform_attn: level " + std::to_string(l) + " starts at " +
                                                             std::to_string(starts[l]) + ", expected " +
                                                             std::to_string(total));
    total += shapes[l].h * shapes[l].w;
  }
  if (total != value.dim(0)) {
    Fail(ErrorKind::kDimension, "ms_deform_attn: value has " + std::to_string(value.dim(0)) + " rows, pyramid has " +
                                    std::to_string(total));
  }

  Tensor out = Tensor::Zeros({n_q, channels});
  {
    const double* vd = value.data().data();
    const double* rd = ref_points.data().data();
    const double* od = offsets.data().data();
    const double* wd = weights.data().data();
    double* o = out.mutable_data().data();
    ParallelFor(n_q, 4, [&](std::int64_t q0, std::int64_t q1) {
      Corner corners[4];
      for (std::int64_t q = q0; q < q1; ++q) {
        for (std::int64_t m = 0; m < heads; ++m) {
          double* dst = o + q * channels + m * head_dim;
          for (std::int64_t l = 0; l < levels; ++l) {
            const auto& s = shapes[static_cast<std::size_t>(l)];
            const double* level_base = vd + starts[static_cast<std::size_t>(l)] * channels + m * head_dim;
            for (std::int64_t k = 0; k < pts; ++k) {
              const std::int64_t idx = ((q * heads + m) * levels + l) * pts + k;
              double x, y;
              SampleLocation(s, rd + 2 * q, od + 2 * idx, &x, &y);
              const double aw = wd[idx];
              const int n = BilinearCorners(s.h, s.w, x, y, corners);
              for (int i = 0; i < n; ++i) {
                const double* src = level_base + corners[i].pixel * channels;
                const double cw = aw * corners[i].w;
                for (std::int64_t c = 0; c < head_dim; ++c) dst[c] += cw * src[c];
              }
            }
          }
        }
      }
    });
    g_sample_count.fetch_add(n_q * heads * levels * pts, std::memory_order_relaxed);
  }

  if (GradEnabled() &&
      (value.requires_grad() || ref_points.requires_grad() || offsets.requires_grad() || weights.requires_grad())) {
    out.set_requires_grad(true);
    Tape::Active().Record(
        {value, ref_points, offsets, weights}, out,
        [value, ref_points, offsets, weights, out, shapes, starts, n_q, heads, levels, pts, channels, head_dim]() mutable {
          const double* go = out.grad().data();
          const double* vd = value.data().data();
          const double* rd = ref_points.data().data();
          const double* od = offsets.data().data();
          const double* wd = weights.data().data();
          double* gv = value.requires_grad() ? value.mutable_grad().data() : nullptr;
          double* gr = ref_points.requires_grad() ? ref_points.mutable_grad().data() : nullptr;
          double* goff = offsets.requires_grad() ? offsets.mutable_grad().data() : nullptr;
          double* gw = weights.requires_grad() ? weights.mutable_grad().data() : nullptr;
          Corner corners[4];
          // Serial: value gradients from different queries hit shared rows.
          for (std::int64_t q = 0; q < n_q; ++q) {
            for (std::int64_t m = 0; m < heads; ++m) {
              const double* g = go + q * channels + m * head_dim;
              for (std::int64_t l = 0; l < levels; ++l) {
                const auto& s = shapes[static_cast<std::size_t>(l)];
                const std::int64_t row0 = starts[static_cast<std::size_t>(l)];
                for (std::int64_t k = 0; k < pts; ++k) {
                  const std::int64_t idx = ((q * heads + m) * levels + l) * pts + k;
                  double x, y;
                  SampleLocation(s, rd + 2 * q, od + 2 * idx, &x, &y);
                  const double aw = wd[idx];
                  const int n = BilinearCorners(s.h, s.w, x, y, corners);
                  double sample_dot = 0.0, dx = 0.0, dy = 0.0;
                  for (int i = 0; i < n; ++i) {
                    const std::int64_t off = (row0 + corners[i].pixel) * channels + m * head_dim;
                    double dot = 0.0;
                    for (std::int64_t c = 0; c < head_dim; ++c) dot += g[c] * vd[off + c];
                    sample_dot += corners[i].w * dot;
                    dx += corners[i].dwx * dot;
                    dy += corners[i].dwy * dot;
                    if (gv != nullptr) {
                      const double cw = aw * corners[i].w;
                      for (std::int64_t c = 0; c < head_dim; ++c) gv[off + c] += cw * g[c];
                    }
                  }
                  if (gw != nullptr) gw[idx] += sample_dot;
                  if (goff != nullptr) {
                    goff[2 * idx] += aw * dx;
                    goff[2 * idx + 1] += aw * dy;
                  }
                  if (gr != nullptr) {
                    gr[2 * q] += aw * dx * static_cast<double>(s.w);
                    gr[2 * q + 1] += aw * dy * static_cast<double>(s.h);
                  }
                }
              }
            }
          }
        });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Module

MsDeformAttn::MsDeformAttn(ParamStore& store, const std::string& prefix, const MsDeformAttnConfig& config,
                           ParamGroup group, Rng& rng)
    : config_(config) {
  const auto& c = config;
  if (c.heads <= 0 || c.levels <= 0 || c.points <= 0 || c.head_dim <= 0) {
    Fail(ErrorKind::kContract, "ms_deform_attn: heads, levels, points and head_dim must be positive");
  }
  const std::int64_t hidden = c.heads * c.head_dim;
  value_proj_ = LinearLayer::Create(store, prefix + ".value_proj", c.value_dim, hidden, group, rng);
  offset_proj_ =
      LinearLayer::Create(store, prefix + ".offset_proj", c.query_dim, c.heads * c.levels * c.points * 2, group, rng,
                          Init::kZero);
  attn_proj_ =
      LinearLayer::Create(store, prefix + ".attn_proj", c.query_dim, c.heads * c.levels * c.points, group, rng,
                          Init::kZero);
  out_proj_ = LinearLayer::Create(store, prefix + ".out_proj", hidden, c.out_dim, group, rng);

  // Ring of directions: head m points along angle 2*pi*m/heads, scaled so the
  // larger component is 1, and point k sits k+1 pixels out.
  auto bias = offset_proj_.bias.mutable_data();
  for (std::int64_t m = 0; m < c.heads; ++m) {
    const double theta = 2.0 * std::numbers::pi * static_cast<double>(m) / static_cast<double>(c.heads);
    double dx = std::cos(theta), dy = std::sin(theta);
    const double mx = std::max(std::abs(dx), std::abs(dy));
    dx /= mx;
    dy /= mx;
    for (std::int64_t l = 0; l < c.levels; ++l) {
      for (std::int64_t k = 0; k < c.points; ++k) {
        const std::int64_t idx = ((m * c.levels + l) * c.points + k) * 2;
        bias[static_cast<std::size_t>(idx)] = dx * static_cast<double>(k + 1);
        bias[static_cast<std::size_t>(idx + 1)] = dy * static_cast<double>(k + 1);
      }
    }
  }
}

Tensor MsDeformAttn::Forward(const Tensor& query, const Tensor& ref_points, const FeaturePyramid& memory,
                             Trace* trace) const {
  const auto& c = config_;
  if (query.rank() != 2 || query.dim(1) != c.query_dim) {
    Fail(ErrorKind::kDimension, "ms_deform_attn: query " + ShapeString(query.shape()) + " must be [N, " +
                                    std::to_string(c.query_dim) + "]");
  }
  if (memory.num_levels() != c.levels || memory.channels() != c.value_dim) {
    Fail(ErrorKind::kDimension, "ms_deform_attn: memory has " + std::to_string(memory.num_levels()) +
                                    " levels of width " + std::to_string(memory.channels()) + ", expected " +
                                    std::to_string(c.levels) + " of width " + std::to_string(c.value_dim));
  }
  const std::int64_t n = query.dim(0);
  const Tensor value = value_proj_(memory.flat);
  const Tensor offsets = Reshape(offset_proj_(query), {n, c.heads, c.levels, c.points, 2});
  const Tensor logits = Reshape(attn_proj_(query), {n, c.heads, c.levels * c.points});
  const Tensor weights = Reshape(Softmax(logits, -1), {n, c.heads, c.levels, c.points});
  if (trace != nullptr) {
    trace->offsets = offsets;
    trace->weights = weights;
  }
  const Tensor sampled = MsDeformAttnCore(value, memory.shapes, memory.starts, ref_points, offsets, weights);
  return out_proj_(sampled);
}

}  // namespace detr
