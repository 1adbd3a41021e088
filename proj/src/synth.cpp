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

#include "detr/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>

#include "detr/error.hpp"
#include "detr/random.hpp"

namespace detr {
namespace {

constexpr const char* kShapeNames[kMaxSyntheticClasses] = {"rectangle", "ellipse", "diamond"};
constexpr std::int64_t kGap = 2;  // keeps shapes apart under 8-connectivity
constexpr int kPlacementTries = 64;

struct Rect {
  std::int64_t x0, y0, x1, y1;  // inclusive
};

bool Separated(const Rect& a, const Rect& b) {
  return a.x1 + kGap < b.x0 || b.x1 + kGap < a.x0 || a.y1 + kGap < b.y0 || b.y1 + kGap < a.y0;
}

// Membership of pixel (x, y) in the shape inscribed in r.
bool Inside(std::int64_t shape, const Rect& r, std::int64_t x, std::int64_t y) {
  if (shape == 0) return true;
  const double cx = 0.5 * static_cast<double>(r.x0 + r.x1 + 1);
  const double cy = 0.5 * static_cast<double>(r.y0 + r.y1 + 1);
  const double rx = 0.5 * static_cast<double>(r.x1 - r.x0 + 1);
  const double ry = 0.5 * static_cast<double>(r.y1 - r.y0 + 1);
  const double dx = (static_cast<double>(x) + 0.5 - cx) / rx;
  const double dy = (static_cast<double>(y) + 0.5 - cy) / ry;
  return shape == 1 ? dx * dx + dy * dy <= 1.0 : std::abs(dx) + std::abs(dy) <= 1.0;
}

}  // namespace

SyntheticDataset GenerateSynthetic(const SyntheticOptions& options) {
  Require(options.count >= 1, ErrorKind::kValidation, "synthetic count must be at least 1");
  Require(options.classes >= 1 && options.classes <= kMaxSyntheticClasses, ErrorKind::kValidation,
          "synthetic classes must be in [1, " + std::to_string(kMaxSyntheticClasses) + "]");
  Require(options.width >= 16 && options.height >= 16, ErrorKind::kValidation,
          "synthetic images must be at least 16x16");
  Require(options.min_size > 0.0 && options.min_size <= options.max_size && options.max_size <= 0.9,
          ErrorKind::kValidation, "synthetic size range must satisfy 0 < min_size <= max_size <= 0.9");
  Rng rng(options.seed);
  SyntheticDataset out;
  for (std::int64_t c = 0; c < options.classes; ++c) out.coco.categories.push_back({c + 1, kShapeNames[c]});

  const std::int64_t w = options.width, h = options.height;
  auto extent = [](std::int64_t side, double frac) {
    return std::max<std::int64_t>(4, static_cast<std::int64_t>(static_cast<double>(side) * frac));
  };
  const std::int64_t min_w = extent(w, options.min_size), max_w = std::max(min_w, extent(w, options.max_size));
  const std::int64_t min_h = extent(h, options.min_size), max_h = std::max(min_h, extent(h, options.max_size));
  std::int64_t next_ann = 1;
  for (std::int64_t i = 0; i < options.count; ++i) {
    RgbImage img{w, h, std::vector<std::uint8_t>(static_cast<std::size_t>(3 * w * h))};
    for (auto& px : img.pixels) px = static_cast<std::uint8_t>(rng.UniformInt(0, 79));

    char name[32];
    std::snprintf(name, sizeof(name), "synth_%05lld.ppm", static_cast<long long>(i));
    const std::int64_t image_id = i + 1;
    out.coco.images.push_back({image_id, name, w, h});

    const std::int64_t wanted = rng.UniformInt(1, 3);
    std::vector<Rect> placed;
    for (std::int64_t s = 0; s < wanted; ++s) {
      const std::int64_t shape = rng.UniformInt(0, options.classes - 1);
      std::uint8_t color[3];
      for (auto& ch : color) ch = static_cast<std::uint8_t>(rng.UniformInt(170, 255));
      for (int attempt = 0; attempt < kPlacementTries; ++attempt) {
        const std::int64_t bw = rng.UniformInt(min_w, max_w), bh = rng.UniformInt(min_h, max_h);
        const std::int64_t x0 = rng.UniformInt(0, w - bw), y0 = rng.UniformInt(0, h - bh);
        const Rect r{x0, y0, x0 + bw - 1, y0 + bh - 1};
        if (!std::all_of(placed.begin(), placed.end(), [&](const Rect& o) { return Separated(r, o); })) continue;
        placed.push_back(r);
        // Ground truth is the tight extent of what actually got drawn.
        std::int64_t tx0 = w, ty0 = h, tx1 = -1, ty1 = -1;
        for (std::int64_t y = r.y0; y <= r.y1; ++y) {
          for (std::int64_t x = r.x0; x <= r.x1; ++x) {
            if (!Inside(shape, r, x, y)) continue;
            auto* p = &img.pixels[static_cast<std::size_t>(3 * (y * w + x))];
            p[0] = color[0];
            p[1] = color[1];
            p[2] = color[2];
            tx0 = std::min(tx0, x);
            tx1 = std::max(tx1, x);
            ty0 = std::min(ty0, y);
            ty1 = std::max(ty1, y);
          }
        }
        const BoxXyWh box{static_cast<double>(tx0), static_cast<double>(ty0), static_cast<double>(tx1 - tx0 + 1),
                          static_cast<double>(ty1 - ty0 + 1)};
        out.coco.annotations.push_back({next_ann++, image_id, shape + 1, box, box.w * box.h, 0});
        break;
      }
    }
    out.images.push_back(std::move(img));
  }
  ValidateCoco(out.coco);
  return out;
}

void WriteSynthetic(const SyntheticDataset& data, const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) Fail(ErrorKind::kIo, "cannot create " + dir + ": " + ec.message());
  for (std::size_t i = 0; i < data.images.size(); ++i) {
    WritePpm((std::filesystem::path(dir) / data.coco.images[i].file_name).string(), data.images[i]);
  }
  WriteCoco((std::filesystem::path(dir) / "annotations.json").string(), data.coco);
}

}  // namespace detr
