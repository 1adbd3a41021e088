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

#include "detr/reference.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace detr::reference {

std::vector<double> Bilinear(const std::vector<double>& map, std::int64_t height, std::int64_t width,
                             std::int64_t channels, double x, double y) {
  std::vector<double> out(static_cast<std::size_t>(channels), 0.0);
  const double x0 = std::floor(x), y0 = std::floor(y);
  const double ax = x - x0, ay = y - y0;
  const double wx[2] = {1.0 - ax, ax};
  const double wy[2] = {1.0 - ay, ay};
  for (int dy = 0; dy < 2; ++dy) {
    for (int dx = 0; dx < 2; ++dx) {
      const auto px = static_cast<std::int64_t>(x0) + dx;
      const auto py = static_cast<std::int64_t>(y0) + dy;
      if (px < 0 || py < 0 || px >= width || py >= height) continue;
      for (std::int64_t c = 0; c < channels; ++c) {
        out[static_cast<std::size_t>(c)] += wx[dx] * wy[dy] * map[static_cast<std::size_t>((py * width + px) * channels + c)];
      }
    }
  }
  return out;
}

std::vector<double> MsDeformAttn(const std::vector<double>& value, std::int64_t head_dim, std::int64_t heads,
                                 const std::vector<LevelShape>& shapes, const std::vector<double>& ref_points,
                                 const std::vector<double>& offsets, const std::vector<double>& weights,
                                 std::int64_t num_queries, std::int64_t points) {
  const auto levels = static_cast<std::int64_t>(shapes.size());
  const std::int64_t width = heads * head_dim;
  std::vector<double> out(static_cast<std::size_t>(num_queries * width), 0.0);
  for (std::int64_t q = 0; q < num_queries; ++q) {
    for (std::int64_t m = 0; m < heads; ++m) {
      std::int64_t start = 0;
      for (std::int64_t l = 0; l < levels; ++l) {
        const auto& s = shapes[static_cast<std::size_t>(l)];
        // Slice this head's channels of level l into its own map.
        std::vector<double> map(static_cast<std::size_t>(s.h * s.w * head_dim));
        for (std::int64_t p = 0; p < s.h * s.w; ++p) {
          for (std::int64_t c = 0; c < head_dim; ++c) {
            map[static_cast<std::size_t>(p * head_dim + c)] =
                value[static_cast<std::size_t>((start + p) * width + m * head_dim + c)];
          }
        }
        for (std::int64_t k = 0; k < points; ++k) {
          const std::int64_t o = (((q * heads + m) * levels + l) * points + k);
          const double x = ref_points[static_cast<std::size_t>(2 * q)] * static_cast<double>(s.w) - 0.5 +
                           offsets[static_cast<std::size_t>(2 * o)];
          const double y = ref_points[static_cast<std::size_t>(2 * q + 1)] * static_cast<double>(s.h) - 0.5 +
                           offsets[static_cast<std::size_t>(2 * o + 1)];
          const auto v = Bilinear(map, s.h, s.w, head_dim, x, y);
          for (std::int64_t c = 0; c < head_dim; ++c) {
            out[static_cast<std::size_t>(q * width + m * head_dim + c)] +=
                weights[static_cast<std::size_t>(o)] * v[static_cast<std::size_t>(c)];
          }
        }
        start += s.h * s.w;
      }
    }
  }
  return out;
}

std::vector<double> RoiAlign(const std::vector<double>& features, std::int64_t height, std::int64_t width,
                             std::int64_t channels, const std::vector<double>& boxes, std::int64_t grid) {
  const auto n = static_cast<std::int64_t>(boxes.size() / 4);
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(n * grid * grid * channels));
  for (std::int64_t b = 0; b < n; ++b) {
    const double* box = &boxes[static_cast<std::size_t>(4 * b)];
    const double x1 = box[0] - box[2] / 2.0, y1 = box[1] - box[3] / 2.0;
    const double bin_w = box[2] / static_cast<double>(grid), bin_h = box[3] / static_cast<double>(grid);
    for (std::int64_t gy = 0; gy < grid; ++gy) {
      for (std::int64_t gx = 0; gx < grid; ++gx) {
        const double nx = x1 + (static_cast<double>(gx) + 0.5) * bin_w;
        const double ny = y1 + (static_cast<double>(gy) + 0.5) * bin_h;
        const auto v = Bilinear(features, height, width, channels, nx * static_cast<double>(width) - 0.5,
                                ny * static_cast<double>(height) - 0.5);
        out.insert(out.end(), v.begin(), v.end());
      }
    }
  }
  return out;
}

double BruteForceAssignmentCost(const CostMatrix& cost) {
  const bool transpose = cost.rows > cost.cols;
  const std::int64_t small = transpose ? cost.cols : cost.rows;
  const std::int64_t large = transpose ? cost.rows : cost.cols;
  auto at = [&](std::int64_t i, std::int64_t j) { return transpose ? cost.at(j, i) : cost.at(i, j); };
  // Every ordered choice of `small` distinct columns out of `large`.
  std::vector<std::int64_t> perm(static_cast<std::size_t>(large));
  std::iota(perm.begin(), perm.end(), 0);
  double best = small == 0 ? 0.0 : std::numeric_limits<double>::infinity();
  do {
    double total = 0.0;
    for (std::int64_t i = 0; i < small; ++i) total += at(i, perm[static_cast<std::size_t>(i)]);
    best = std::min(best, total);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

std::vector<BoxXyWh> MaskBoxes(const MaskImage& mask, MaskBoxMode mode) {
  const std::int64_t w = mask.width, h = mask.height;
  auto box_of = [&](auto&& member) {
    std::int64_t x0 = w, y0 = h, x1 = -1, y1 = -1;
    for (std::int64_t y = 0; y < h; ++y) {
      for (std::int64_t x = 0; x < w; ++x) {
        if (!member(x, y)) continue;
        x0 = std::min(x0, x);
        y0 = std::min(y0, y);
        x1 = std::max(x1, x);
        y1 = std::max(y1, y);
      }
    }
    return BoxXyWh{static_cast<double>(x0), static_cast<double>(y0), static_cast<double>(x1 - x0 + 1),
                   static_cast<double>(y1 - y0 + 1)};
  };
  const bool any = std::any_of(mask.pixels.begin(), mask.pixels.end(), [](std::uint8_t v) { return v != 0; });
  if (!any) return {};
  if (mode == MaskBoxMode::kGlobal) return {box_of([&](std::int64_t x, std::int64_t y) { return mask.fg(x, y); })};

  // Label = raster index of the smallest pixel in the component, found by
  // relaxing to the minimum neighbor label until nothing changes.
  std::vector<std::int64_t> label(static_cast<std::size_t>(w * h), -1);
  for (std::int64_t i = 0; i < w * h; ++i) {
    if (mask.pixels[static_cast<std::size_t>(i)]) label[static_cast<std::size_t>(i)] = i;
  }
  for (bool changed = true; changed;) {
    changed = false;
    for (std::int64_t y = 0; y < h; ++y) {
      for (std::int64_t x = 0; x < w; ++x) {
        auto& mine = label[static_cast<std::size_t>(y * w + x)];
        if (mine < 0) continue;
        for (std::int64_t dy = -1; dy <= 1; ++dy) {
          for (std::int64_t dx = -1; dx <= 1; ++dx) {
            const std::int64_t nx = x + dx, ny = y + dy;
            if (nx < 0 || ny < 0 || nx >= w || ny >= h) continue;
            const auto other = label[static_cast<std::size_t>(ny * w + nx)];
            if (other >= 0 && other < mine) {
              mine = other;
              changed = true;
            }
          }
        }
      }
    }
  }
  std::vector<std::int64_t> roots;
  for (std::int64_t i = 0; i < w * h; ++i) {
    if (label[static_cast<std::size_t>(i)] == i) roots.push_back(i);
  }
  std::vector<BoxXyWh> out;
  for (std::int64_t r : roots) {
    out.push_back(box_of([&](std::int64_t x, std::int64_t y) { return label[static_cast<std::size_t>(y * w + x)] == r; }));
  }
  return out;
}

}  // namespace detr::reference
