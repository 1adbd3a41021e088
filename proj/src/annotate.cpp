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

#include "detr/annotate.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <sstream>

#include "detr/error.hpp"

namespace detr {
namespace fs = std::filesystem;

namespace {

std::vector<fs::path> SortedFiles(const std::string& dir) {
  std::error_code ec;
  if (!fs::is_directory(dir, ec)) Fail(ErrorKind::kIo, "not a readable directory: " + dir);
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir, ec)) {
    if (entry.is_regular_file()) files.push_back(entry.path());
  }
  if (ec) Fail(ErrorKind::kIo, "cannot list " + dir + ": " + ec.message());
  std::sort(files.begin(), files.end());
  return files;
}

}  // namespace

std::vector<Point2> ParsePts(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::int64_t declared = -1;
  std::vector<Point2> points;
  bool in_braces = false;
  bool saw_braces = false;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto first = line.find_first_not_of(" \t");
    if (first == std::string::npos) continue;
    const std::string body = line.substr(first);
    if (body.rfind("version:", 0) == 0) continue;
    if (body.rfind("n_points:", 0) == 0) {
      try {
        declared = std::stoll(body.substr(9));
      } catch (const std::exception&) {
        Fail(ErrorKind::kValidation, "PTS line " + std::to_string(line_no) + ": bad n_points");
      }
      continue;
    }
    if (body[0] == '{') {
      in_braces = saw_braces = true;
      continue;
    }
    if (body[0] == '}') {
      in_braces = false;
      continue;
    }
    if (saw_braces && !in_braces) continue;
    std::istringstream ls(body);
    Point2 p;
    if (!(ls >> p.x >> p.y) || !std::isfinite(p.x) || !std::isfinite(p.y)) {
      Fail(ErrorKind::kValidation, "PTS line " + std::to_string(line_no) + ": expected 'x y'");
    }
    points.push_back(p);
  }
  if (declared >= 0 && declared != static_cast<std::int64_t>(points.size())) {
    Fail(ErrorKind::kValidation, "PTS declares " + std::to_string(declared) + " points but lists " +
                                     std::to_string(points.size()));
  }
  return points;
}

std::vector<Point2> ReadPts(const std::string& path) {
  try {
    return ParsePts(ReadFileBytes(path));
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::kValidation) Fail(ErrorKind::kValidation, path + ": " + e.what());
    throw;
  }
}

std::optional<BoxXyWh> KeypointToBbox(Point2 kp, double box_w, double box_h, std::int64_t image_w,
                                      std::int64_t image_h) {
  Require(box_w > 0.0 && box_h > 0.0, ErrorKind::kContract, "box size must be positive");
  Require(image_w > 0 && image_h > 0, ErrorKind::kContract, "image size must be positive");
  const auto iw = static_cast<double>(image_w);
  const auto ih = static_cast<double>(image_h);
  if (!(kp.x >= 0.0 && kp.x <= iw && kp.y >= 0.0 && kp.y <= ih)) return std::nullopt;
  const double x1 = std::max(0.0, kp.x - 0.5 * box_w);
  const double y1 = std::max(0.0, kp.y - 0.5 * box_h);
  const double x2 = std::min(iw, kp.x + 0.5 * box_w);
  const double y2 = std::min(ih, kp.y + 0.5 * box_h);
  return BoxXyWh{x1, y1, x2 - x1, y2 - y1};
}

MaskImage MaskImage::FromGray(const GrayImage& gray) {
  return MaskImage{gray.width, gray.height, gray.pixels};
}

std::vector<BoxXyWh> MaskToBboxes(const MaskImage& mask, MaskBoxMode mode) {
  const std::int64_t w = mask.width, h = mask.height;
  Require(static_cast<std::int64_t>(mask.pixels.size()) == w * h, ErrorKind::kDimension,
          "mask pixel count does not match its size");
  auto box_of = [](std::int64_t x0, std::int64_t y0, std::int64_t x1, std::int64_t y1) {
    return BoxXyWh{static_cast<double>(x0), static_cast<double>(y0), static_cast<double>(x1 - x0 + 1),
                   static_cast<double>(y1 - y0 + 1)};
  };
  std::vector<BoxXyWh> out;
  if (mode == MaskBoxMode::kGlobal) {
    std::int64_t x0 = w, y0 = h, x1 = -1, y1 = -1;
    for (std::int64_t y = 0; y < h; ++y) {
      for (std::int64_t x = 0; x < w; ++x) {
        if (!mask.fg(x, y)) continue;
        x0 = std::min(x0, x);
        x1 = std::max(x1, x);
        y0 = std::min(y0, y);
        y1 = std::max(y1, y);
      }
    }
    if (x1 >= 0) out.push_back(box_of(x0, y0, x1, y1));
    return out;
  }
  std::vector<char> seen(mask.pixels.size(), 0);
  std::vector<std::int64_t> stack;
  for (std::int64_t y = 0; y < h; ++y) {
    for (std::int64_t x = 0; x < w; ++x) {
      const auto idx = static_cast<std::size_t>(y * w + x);
      if (!mask.fg(x, y) || seen[idx]) continue;
      std::int64_t x0 = x, y0 = y, x1 = x, y1 = y;
      seen[idx] = 1;
      stack.assign(1, y * w + x);
      while (!stack.empty()) {
        const std::int64_t cur = stack.back();
        stack.pop_back();
        const std::int64_t cx = cur % w, cy = cur / w;
        x0 = std::min(x0, cx);
        x1 = std::max(x1, cx);
        y0 = std::min(y0, cy);
        y1 = std::max(y1, cy);
        for (std::int64_t dy = -1; dy <= 1; ++dy) {
          for (std::int64_t dx = -1; dx <= 1; ++dx) {
            const std::int64_t nx = cx + dx, ny = cy + dy;
            if (nx < 0 || ny < 0 || nx >= w || ny >= h) continue;
            const auto nidx = static_cast<std::size_t>(ny * w + nx);
            if (seen[nidx] || !mask.fg(nx, ny)) continue;
            seen[nidx] = 1;
            stack.push_back(ny * w + nx);
          }
        }
      }
      out.push_back(box_of(x0, y0, x1, y1));
    }
  }
  return out;
}

AnnotationReport AnnotateNostrils(const std::string& keypoints_dir, const std::string& images_dir,
                                  const NostrilOptions& options) {
  Require(options.box_w > 0.0 && options.box_h > 0.0, ErrorKind::kValidation, "box size must be positive");
  AnnotationReport report;
  report.dataset.categories.push_back({1, "nostril"});
  std::int64_t next_ann = 1;
  for (const auto& path : SortedFiles(keypoints_dir)) {
    if (path.extension() != ".pts") continue;
    const std::string stem = path.stem().string();
    std::vector<Point2> points;
    try {
      points = ReadPts(path.string());
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::kValidation) throw;
      report.warnings.push_back(std::string(e.what()) + "; skipped");
      continue;
    }
    CocoImage image;
    image.id = static_cast<std::int64_t>(report.dataset.images.size()) + 1;
    image.width = options.fallback_width;
    image.height = options.fallback_height;
    image.file_name = stem + ".pgm";
    bool found = false;
    for (const char* ext : {".pgm", ".ppm"}) {
      const fs::path candidate = fs::path(images_dir) / (stem + ext);
      if (!fs::exists(candidate)) continue;
      try {
        const ImageSize size = ReadNetpbmSize(candidate.string());
        image.width = size.width;
        image.height = size.height;
        image.file_name = stem + ext;
        found = true;
      } catch (const Error& e) {
        report.warnings.push_back(std::string(e.what()) + "; using fallback size");
      }
      break;
    }
    if (!found) {
      report.warnings.push_back(stem + ": no image found, assuming " + std::to_string(image.width) + "x" +
                                std::to_string(image.height));
    }
    for (std::size_t index : options.point_indices) {
      if (index >= points.size()) {
        report.warnings.push_back(path.filename().string() + ": point " + std::to_string(index) +
                                  " missing (file has " + std::to_string(points.size()) + ")");
        continue;
      }
      const auto box = KeypointToBbox(points[index], options.box_w, options.box_h, image.width, image.height);
      if (!box) {
        report.warnings.push_back(path.filename().string() + ": point " + std::to_string(index) +
                                  " lies outside the image; skipped");
        continue;
      }
      report.dataset.annotations.push_back({next_ann++, image.id, 1, *box, box->w * box->h, 0});
    }
    report.dataset.images.push_back(std::move(image));
  }
  if (report.dataset.images.empty()) report.warnings.push_back("no keypoint files found in " + keypoints_dir);
  ValidateCoco(report.dataset);
  return report;
}

AnnotationReport AnnotateGlottis(const std::string& masks_dir, MaskBoxMode mode) {
  AnnotationReport report;
  report.dataset.categories.push_back({1, "glottis"});
  std::int64_t next_ann = 1;
  for (const auto& path : SortedFiles(masks_dir)) {
    GrayImage gray;
    try {
      gray = ReadPgm(path.string());
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::kValidation) throw;
      report.warnings.push_back(std::string(e.what()) + "; skipped");
      continue;
    }
    CocoImage image{static_cast<std::int64_t>(report.dataset.images.size()) + 1, path.filename().string(),
                    gray.width, gray.height};
    for (const auto& box : MaskToBboxes(MaskImage::FromGray(gray), mode)) {
      report.dataset.annotations.push_back({next_ann++, image.id, 1, box, box.w * box.h, 0});
    }
    report.dataset.images.push_back(std::move(image));
  }
  if (report.dataset.images.empty()) report.warnings.push_back("no PGM masks found in " + masks_dir);
  ValidateCoco(report.dataset);
  return report;
}

}  // namespace detr
