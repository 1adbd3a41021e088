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

// COCO-format ground truth and detection results.

#include <cstdint>
#include <string>
#include <vector>

#include "detr/box.hpp"

namespace detr {

struct CocoImage {
  std::int64_t id = 0;
  std::string file_name;
  std::int64_t width = 0;
  std::int64_t height = 0;
};

struct CocoAnnotation {
  std::int64_t id = 0;
  std::int64_t image_id = 0;
  std::int64_t category_id = 0;
  BoxXyWh bbox;
  double area = 0.0;
  std::int64_t iscrowd = 0;
};

struct CocoCategory {
  std::int64_t id = 0;
  std::string name;
};

struct CocoDataset {
  std::vector<CocoImage> images;
  std::vector<CocoAnnotation> annotations;
  std::vector<CocoCategory> categories;

  const CocoImage* FindImage(std::int64_t id) const;
  // Category ids in ascending order; index i is model label i.
  std::vector<std::int64_t> SortedCategoryIds() const;
};

// Throws kValidation naming the offending record: duplicate ids, dangling
// image/category references, non-positive extents, boxes leaving the image.
void ValidateCoco(const CocoDataset& dataset);

std::string CocoToJson(const CocoDataset& dataset);
CocoDataset CocoFromJson(const std::string& text);  // parses and validates
void WriteCoco(const std::string& path, const CocoDataset& dataset);
CocoDataset ReadCoco(const std::string& path);

struct CocoDetection {
  std::int64_t image_id = 0;
  std::int64_t category_id = 0;
  BoxXyWh bbox;
  double score = 0.0;
};

std::string DetectionsToJson(const std::vector<CocoDetection>& detections);
std::vector<CocoDetection> DetectionsFromJson(const std::string& text);
void WriteDetections(const std::string& path, const std::vector<CocoDetection>& detections);
std::vector<CocoDetection> ReadDetections(const std::string& path);

void WriteTextFile(const std::string& path, const std::string& text);

}  // namespace detr
