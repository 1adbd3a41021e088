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

#include "detr/coco.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <unordered_map>
#include <unordered_set>

#include <json.hpp>

#include "detr/error.hpp"
#include "detr/imageio.hpp"

namespace detr {
namespace {

using nlohmann::json;

// Tolerance for boxes computed in floating point that touch the border.
constexpr double kEdgeSlack = 1e-6;

std::string Where(const char* array, std::size_t index) {
  return std::string(array) + "[" + std::to_string(index) + "]";
}

const json& Field(const json& record, const char* key, const std::string& where) {
  if (!record.is_object()) Fail(ErrorKind::kValidation, where + ": expected an object");
  auto it = record.find(key);
  if (it == record.end()) Fail(ErrorKind::kValidation, where + ": missing field '" + key + "'");
  return *it;
}

std::int64_t IntField(const json& record, const char* key, const std::string& where) {
  const json& v = Field(record, key, where);
  if (v.is_number_integer()) return v.get<std::int64_t>();
  if (v.is_number_float()) {
    const double d = v.get<double>();
    if (std::floor(d) == d && std::abs(d) < 9e15) return static_cast<std::int64_t>(d);
  }
  Fail(ErrorKind::kValidation, where + ": field '" + key + "' must be an integer");
}

double NumberField(const json& record, const char* key, const std::string& where) {
  const json& v = Field(record, key, where);
  if (!v.is_number()) Fail(ErrorKind::kValidation, where + ": field '" + key + "' must be a number");
  const double d = v.get<double>();
  if (!std::isfinite(d)) Fail(ErrorKind::kValidation, where + ": field '" + key + "' is not finite");
  return d;
}

BoxXyWh BoxField(const json& record, const std::string& where) {
  const json& v = Field(record, "bbox", where);
  if (!v.is_array() || v.size() != 4) Fail(ErrorKind::kValidation, where + ": bbox must be [x, y, w, h]");
  double b[4];
  for (std::size_t i = 0; i < 4; ++i) {
    if (!v[i].is_number()) Fail(ErrorKind::kValidation, where + ": bbox entries must be numbers");
    b[i] = v[i].get<double>();
    if (!std::isfinite(b[i])) Fail(ErrorKind::kValidation, where + ": bbox entries must be finite");
  }
  return {b[0], b[1], b[2], b[3]};
}

const json& ArrayField(const json& root, const char* key) {
  auto it = root.find(key);
  if (it == root.end()) Fail(ErrorKind::kValidation, std::string("missing top-level array '") + key + "'");
  if (!it->is_array()) Fail(ErrorKind::kValidation, std::string("'") + key + "' must be an array");
  return *it;
}

json ParseJson(const std::string& text, const char* what) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    Fail(ErrorKind::kValidation, std::string(what) + ": invalid JSON: " + e.what());
  }
}

}  // namespace

const CocoImage* CocoDataset::FindImage(std::int64_t id) const {
  for (const auto& im : images) {
    if (im.id == id) return &im;
  }
  return nullptr;
}

std::vector<std::int64_t> CocoDataset::SortedCategoryIds() const {
  std::vector<std::int64_t> ids;
  for (const auto& c : categories) ids.push_back(c.id);
  std::sort(ids.begin(), ids.end());
  return ids;
}

void ValidateCoco(const CocoDataset& dataset) {
  std::unordered_map<std::int64_t, const CocoImage*> images;
  for (std::size_t i = 0; i < dataset.images.size(); ++i) {
    const auto& im = dataset.images[i];
    if (!images.emplace(im.id, &im).second) {
      Fail(ErrorKind::kValidation, Where("images", i) + ": duplicate image id " + std::to_string(im.id));
    }
    if (im.width <= 0 || im.height <= 0) {
      Fail(ErrorKind::kValidation, Where("images", i) + ": width and height must be positive");
    }
  }
  std::unordered_set<std::int64_t> categories;
  for (std::size_t i = 0; i < dataset.categories.size(); ++i) {
    if (!categories.insert(dataset.categories[i].id).second) {
      Fail(ErrorKind::kValidation,
           Where("categories", i) + ": duplicate category id " + std::to_string(dataset.categories[i].id));
    }
  }
  std::unordered_set<std::int64_t> annotation_ids;
  for (std::size_t i = 0; i < dataset.annotations.size(); ++i) {
    const auto& a = dataset.annotations[i];
    const std::string where = Where("annotations", i);
    if (!annotation_ids.insert(a.id).second) {
      Fail(ErrorKind::kValidation, where + ": duplicate annotation id " + std::to_string(a.id));
    }
    auto im = images.find(a.image_id);
    if (im == images.end()) {
      Fail(ErrorKind::kValidation, where + ": image_id " + std::to_string(a.image_id) + " does not exist");
    }
    if (!categories.count(a.category_id)) {
      Fail(ErrorKind::kValidation, where + ": category_id " + std::to_string(a.category_id) + " does not exist");
    }
    if (!(a.bbox.w > 0.0) || !(a.bbox.h > 0.0)) {
      Fail(ErrorKind::kValidation, where + ": bbox width and height must be positive");
    }
    const auto& img = *im->second;
    if (a.bbox.x < -kEdgeSlack || a.bbox.y < -kEdgeSlack ||
        a.bbox.x + a.bbox.w > static_cast<double>(img.width) + kEdgeSlack ||
        a.bbox.y + a.bbox.h > static_cast<double>(img.height) + kEdgeSlack) {
      Fail(ErrorKind::kValidation, where + ": bbox lies outside image " + std::to_string(img.id) + " (" +
                                       std::to_string(img.width) + "x" + std::to_string(img.height) + ")");
    }
  }
}

std::string CocoToJson(const CocoDataset& dataset) {
  json root;
  root["images"] = json::array();
  for (const auto& im : dataset.images) {
    root["images"].push_back({{"id", im.id}, {"file_name", im.file_name}, {"width", im.width}, {"height", im.height}});
  }
  root["annotations"] = json::array();
  for (const auto& a : dataset.annotations) {
    root["annotations"].push_back({{"id", a.id},
                                   {"image_id", a.image_id},
                                   {"category_id", a.category_id},
                                   {"bbox", {a.bbox.x, a.bbox.y, a.bbox.w, a.bbox.h}},
                                   {"area", a.area},
                                   {"iscrowd", a.iscrowd}});
  }
  root["categories"] = json::array();
  for (const auto& c : dataset.categories) root["categories"].push_back({{"id", c.id}, {"name", c.name}});
  return root.dump(2) + "\n";
}

CocoDataset CocoFromJson(const std::string& text) {
  const json root = ParseJson(text, "annotations");
  if (!root.is_object()) Fail(ErrorKind::kValidation, "annotations: top level must be an object");
  CocoDataset ds;
  const json& images = ArrayField(root, "images");
  for (std::size_t i = 0; i < images.size(); ++i) {
    const std::string where = Where("images", i);
    CocoImage im;
    im.id = IntField(images[i], "id", where);
    const json& name = Field(images[i], "file_name", where);
    if (!name.is_string()) Fail(ErrorKind::kValidation, where + ": file_name must be a string");
    im.file_name = name.get<std::string>();
    im.width = IntField(images[i], "width", where);
    im.height = IntField(images[i], "height", where);
    ds.images.push_back(std::move(im));
  }
  const json& anns = ArrayField(root, "annotations");
  for (std::size_t i = 0; i < anns.size(); ++i) {
    const std::string where = Where("annotations", i);
    CocoAnnotation a;
    a.id = IntField(anns[i], "id", where);
    a.image_id = IntField(anns[i], "image_id", where);
    a.category_id = IntField(anns[i], "category_id", where);
    a.bbox = BoxField(anns[i], where);
    a.area = anns[i].contains("area") ? NumberField(anns[i], "area", where) : a.bbox.w * a.bbox.h;
    a.iscrowd = anns[i].contains("iscrowd") ? IntField(anns[i], "iscrowd", where) : 0;
    ds.annotations.push_back(a);
  }
  const json& cats = ArrayField(root, "categories");
  for (std::size_t i = 0; i < cats.size(); ++i) {
    const std::string where = Where("categories", i);
    CocoCategory c;
    c.id = IntField(cats[i], "id", where);
    if (cats[i].contains("name") && cats[i]["name"].is_string()) c.name = cats[i]["name"].get<std::string>();
    ds.categories.push_back(std::move(c));
  }
  ValidateCoco(ds);
  return ds;
}

void WriteTextFile(const std::string& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) Fail(ErrorKind::kIo, "cannot open " + path + " for writing");
  os << text;
  if (!os) Fail(ErrorKind::kIo, "failed writing " + path);
}

void WriteCoco(const std::string& path, const CocoDataset& dataset) {
  ValidateCoco(dataset);
  WriteTextFile(path, CocoToJson(dataset));
}

CocoDataset ReadCoco(const std::string& path) {
  try {
    return CocoFromJson(ReadFileBytes(path));
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::kValidation) Fail(ErrorKind::kValidation, path + ": " + e.what());
    throw;
  }
}

std::string DetectionsToJson(const std::vector<CocoDetection>& detections) {
  json root = json::array();
  for (const auto& d : detections) {
    root.push_back({{"image_id", d.image_id},
                    {"category_id", d.category_id},
                    {"bbox", {d.bbox.x, d.bbox.y, d.bbox.w, d.bbox.h}},
                    {"score", d.score}});
  }
  return root.dump(1) + "\n";
}

std::vector<CocoDetection> DetectionsFromJson(const std::string& text) {
  const json root = ParseJson(text, "detections");
  if (!root.is_array()) Fail(ErrorKind::kValidation, "detections: top level must be an array");
  std::vector<CocoDetection> out;
  out.reserve(root.size());
  for (std::size_t i = 0; i < root.size(); ++i) {
    const std::string where = Where("detections", i);
    CocoDetection d;
    d.image_id = IntField(root[i], "image_id", where);
    d.category_id = IntField(root[i], "category_id", where);
    d.bbox = BoxField(root[i], where);
    d.score = NumberField(root[i], "score", where);
    out.push_back(d);
  }
  return out;
}

void WriteDetections(const std::string& path, const std::vector<CocoDetection>& detections) {
  WriteTextFile(path, DetectionsToJson(detections));
}

std::vector<CocoDetection> ReadDetections(const std::string& path) {
  try {
    return DetectionsFromJson(ReadFileBytes(path));
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::kValidation) Fail(ErrorKind::kValidation, path + ": " + e.what());
    throw;
  }
}

}  // namespace detr
