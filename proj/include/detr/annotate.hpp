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

// Keypoint and mask driven bounding-box extraction into COCO datasets.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "detr/box.hpp"
#include "detr/coco.hpp"
#include "detr/imageio.hpp"

namespace detr {

struct Point2 {
  double x = 0.0;
  double y = 0.0;
};

// PTS text: optional "version:"/"n_points:" header, then "x y" pairs,
// optionally inside "{ ... }". n_points, when present, must match.
std::vector<Point2> ParsePts(const std::string& text);
std::vector<Point2> ReadPts(const std::string& path);

// Box of size box_w x box_h centred on kp, clipped to [0, W] x [0, H].
// nullopt when kp lies outside the image.
std::optional<BoxXyWh> KeypointToBbox(Point2 kp, double box_w, double box_h, std::int64_t image_w,
                                      std::int64_t image_h);

// Nonzero pixels are foreground.
struct MaskImage {
  std::int64_t width = 0;
  std::int64_t height = 0;
  std::vector<std::uint8_t> pixels;

  static MaskImage FromGray(const GrayImage& gray);
  bool fg(std::int64_t x, std::int64_t y) const { return pixels[static_cast<std::size_t>(y * width + x)] != 0; }
};

enum class MaskBoxMode { kGlobal, kPerComponent };

// Inclusive pixel extents (w = x_max - x_min + 1). Per-component mode uses
// 8-connectivity and orders boxes by each component's first pixel in raster
// order.
std::vector<BoxXyWh> MaskToBboxes(const MaskImage& mask, MaskBoxMode mode);

struct AnnotationReport {
  CocoDataset dataset;
  std::vector<std::string> warnings;
};

struct NostrilOptions {
  double box_w = 20.0;
  double box_h = 14.0;
  std::vector<std::size_t> point_indices = {15, 16};
  // Used when no matching image file is found next to a keypoint file.
  std::int64_t fallback_width = 384;
  std::int64_t fallback_height = 286;
};

// Reads every *.pts file in keypoints_dir (sorted by name) and looks for an
// image "<stem>.pgm" or "<stem>.ppm" in images_dir to get its size.
AnnotationReport AnnotateNostrils(const std::string& keypoints_dir, const std::string& images_dir,
                                  const NostrilOptions& options);

// Reads every file in masks_dir (sorted by name); files that are not P5 PGM
// are skipped with a warning.
AnnotationReport AnnotateGlottis(const std::string& masks_dir, MaskBoxMode mode);

}  // namespace detr
