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

// Exercises the shared library through its C header only.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "detr_kit.h"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path Scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("detr_kit_capi_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string Slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Detections file that repeats the ground truth with score 1.
void WriteGtAsDetections(const fs::path& ann, const fs::path& out) {
  const json gt = json::parse(Slurp(ann));
  json dets = json::array();
  for (const auto& a : gt.at("annotations")) {
    dets.push_back({{"image_id", a.at("image_id")}, {"category_id", a.at("category_id")}, {"bbox", a.at("bbox")},
                    {"score", 1.0}});
  }
  std::ofstream(out) << dets.dump();
}

struct Report {
  detr_report* ptr = nullptr;
  ~Report() { detr_report_free(ptr); }
};

}  // namespace

TEST_CASE("version, status names and errors") {
  CHECK(std::string(detr_version()).size() > 0);
  CHECK(std::string(detr_status_name(DETR_OK)) == "ok");
  CHECK(std::string(detr_status_name(DETR_ERR_VALIDATION)) == "validation");
  CHECK(detr_synth(0, 1, 64, 64, 2, nullptr) == DETR_ERR_ARGUMENT);
  CHECK(std::string(detr_last_error()).find("out_dir") != std::string::npos);
  CHECK(detr_set_threads(2) == DETR_OK);
  CHECK(detr_set_threads(0) == DETR_OK);
  // Null handles are tolerated by accessors.
  CHECK(std::string(detr_report_text(nullptr)).empty());
  CHECK(detr_report_passed(nullptr) == 0);
  detr_report_free(nullptr);
  detr_model_free(nullptr);
}

TEST_CASE("library errors map to status codes") {
  const auto dir = Scratch("errors");
  CHECK(detr_synth(0, 0, 64, 64, 2, (dir / "s").string().c_str()) == DETR_ERR_VALIDATION);
  CHECK(std::string(detr_last_error()).find("count") != std::string::npos);
  detr_model* model = nullptr;
  CHECK(detr_model_load((dir / "missing.ckpt").string().c_str(), &model) == DETR_ERR_IO);
  CHECK(model == nullptr);
  CHECK(detr_train("{\"bogus\": 1}", nullptr, nullptr) == DETR_ERR_VALIDATION);
  CHECK(detr_train("{", nullptr, nullptr) == DETR_ERR_VALIDATION);
  CHECK(detr_annotate_nostril(dir.string().c_str(), nullptr, 0.0, 14, "x.json", nullptr) == DETR_ERR_ARGUMENT);
  CHECK(detr_annotate_glottis((dir / "nope").string().c_str(), DETR_MASK_GLOBAL, (dir / "o.json").string().c_str(),
                              nullptr) == DETR_ERR_IO);
}

TEST_CASE("synth, evaluate ground truth, train, load and predict") {
  const auto dir = Scratch("flow");
  const auto data = dir / "data";
  REQUIRE(detr_synth(3, 4, 64, 64, 2, data.string().c_str()) == DETR_OK);
  const auto ann = data / "annotations.json";
  REQUIRE(fs::exists(ann));

  WriteGtAsDetections(ann, dir / "dets.json");
  {
    Report r;
    REQUIRE(detr_evaluate_detections(ann.string().c_str(), (dir / "dets.json").string().c_str(), &r.ptr) == DETR_OK);
    const json j = json::parse(detr_report_json(r.ptr));
    CHECK(j.at("mAP").get<double>() == 1.0);
    CHECK(j.at("mAP@0.5").get<double>() == 1.0);
    CHECK(std::string(detr_report_text(r.ptr)).find("mAP@0.75") != std::string::npos);
  }

  const json config = {{"train_annotations", ann.string()}, {"epochs", 1}, {"batch_size", 4}};
  detr_train_overrides ov;
  detr_train_overrides_init(&ov);
  CHECK(ov.epochs < 0);
  const std::string out_dir = (dir / "run").string();
  ov.output_dir = out_dir.c_str();
  ov.has_seed = 1;
  ov.seed = 4;
  {
    Report r;
    REQUIRE(detr_train(config.dump().c_str(), &ov, &r.ptr) == DETR_OK);
    const json j = json::parse(detr_report_json(r.ptr));
    CHECK(j.at("epochs").size() == 1);
    CHECK(j.at("steps").get<int>() == 1);
  }
  CHECK(json::parse(Slurp(dir / "run" / "config.json")).at("seed") == 4);

  detr_model* model = nullptr;
  REQUIRE(detr_model_load((dir / "run" / "final.ckpt").string().c_str(), &model) == DETR_OK);
  CHECK(detr_model_num_parameters(model) > 10000);
  CHECK(json::parse(detr_model_config(model)).at("dim") == 32);

  std::vector<uint8_t> rgb(64 * 64 * 3, 40);
  std::vector<double> rows(6 * 4);
  size_t count = 0;
  CHECK(detr_model_predict(model, rgb.data(), 64, 64, rows.data(), 4, &count) == DETR_OK);
  CHECK(count == 4);
  for (size_t i = 0; i < count; ++i) {
    CHECK(rows[6 * i + 4] > 0.0);
    CHECK((rows[6 * i + 5] == 0.0 || rows[6 * i + 5] == 1.0));
  }
  CHECK(detr_model_predict(model, rgb.data(), 32, 32, rows.data(), 4, &count) == DETR_ERR_DIMENSION);
  CHECK(std::string(detr_last_error()).find("64x64") != std::string::npos);

  {
    Report r;
    const auto dets_out = dir / "model_dets.json";
    REQUIRE(detr_model_evaluate(model, ann.string().c_str(), nullptr, dets_out.string().c_str(), &r.ptr) == DETR_OK);
    CHECK(json::parse(Slurp(dets_out)).size() == 4 * 10);
    const double map = json::parse(detr_report_json(r.ptr)).at("mAP").get<double>();
    CHECK(map >= 0.0);
    CHECK(map <= 1.0);
  }
  detr_model_free(model);
}

TEST_CASE("annotation through the C API") {
  const auto dir = Scratch("annotate");
  {
    std::ofstream m(dir / "mask.pgm", std::ios::binary);
    m << "P5\n4 3\n255\n";
    const unsigned char px[12] = {0, 0, 0, 0, 0, 255, 255, 0, 0, 0, 255, 0};
    m.write(reinterpret_cast<const char*>(px), 12);
  }
  std::ofstream(dir / "skip.txt") << "x";
  Report r;
  const auto out = dir / "out.json";
  REQUIRE(detr_annotate_glottis(dir.string().c_str(), DETR_MASK_GLOBAL, out.string().c_str(), &r.ptr) == DETR_OK);
  CHECK(detr_report_warning_count(r.ptr) == 1);
  CHECK(std::string(detr_report_warning(r.ptr, 0)).find("skip.txt") != std::string::npos);
  CHECK(std::string(detr_report_warning(r.ptr, 5)).empty());
  const json j = json::parse(Slurp(out));
  REQUIRE(j.at("annotations").size() == 1);
  CHECK(j.at("annotations")[0].at("bbox") == json::array({1.0, 1.0, 2.0, 2.0}));
}

TEST_CASE("selfcheck passes and the fault hook fails it") {
  {
    Report r;
    REQUIRE(detr_selfcheck(0, &r.ptr) == DETR_OK);
    CHECK(detr_report_passed(r.ptr) == 1);
    const json j = json::parse(detr_report_json(r.ptr));
    CHECK(j.size() >= 10);
  }
  detr_testing_set_bilinear_fault(1);
  Report r;
  const detr_status st = detr_selfcheck(0, &r.ptr);
  detr_testing_set_bilinear_fault(0);
  REQUIRE(st == DETR_OK);
  CHECK(detr_report_passed(r.ptr) == 0);
  bool bilinear_failed = false;
  for (const auto& c : json::parse(detr_report_json(r.ptr))) {
    if (c.at("name") == "bilinear_oracle") bilinear_failed = !c.at("passed").get<bool>();
  }
  CHECK(bilinear_failed);
}
