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

#include "detr_kit.h"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <memory>
#include <new>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "detr/annotate.hpp"
#include "detr/coco_eval.hpp"
#include "detr/deform_attn.hpp"
#include "detr/error.hpp"
#include "detr/parallel.hpp"
#include "detr/selfcheck.hpp"
#include "detr/synth.hpp"
#include "detr/train.hpp"

struct detr_report {
  std::string json;
  std::string text;
  std::vector<std::string> warnings;
  bool passed = true;
};

struct detr_model {
  explicit detr_model(detr::Detector d) : detector(std::move(d)), config(detector.config().ToJson()) {}
  detr::Detector detector;
  std::string config;
};

namespace {

thread_local std::string g_last_error;

detr_status StatusOf(detr::ErrorKind kind) {
  switch (kind) {
    case detr::ErrorKind::kDimension: return DETR_ERR_DIMENSION;
    case detr::ErrorKind::kContract: return DETR_ERR_CONTRACT;
    case detr::ErrorKind::kValidation: return DETR_ERR_VALIDATION;
    case detr::ErrorKind::kIo: return DETR_ERR_IO;
    case detr::ErrorKind::kNumeric: return DETR_ERR_NUMERIC;
  }
  return DETR_ERR_INTERNAL;
}

// Runs fn, mapping exceptions onto status codes and the last-error slot.
template <typename Fn>
detr_status Guard(Fn&& fn) {
  g_last_error.clear();
  try {
    fn();
    return DETR_OK;
  } catch (const detr::Error& e) {
    g_last_error = e.what();
    return StatusOf(e.kind());
  } catch (const nlohmann::json::exception& e) {
    g_last_error = std::string("JSON: ") + e.what();
    return DETR_ERR_VALIDATION;
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
    return DETR_ERR_INTERNAL;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return DETR_ERR_INTERNAL;
  }
}

detr_status Argument(const char* message) {
  g_last_error = message;
  return DETR_ERR_ARGUMENT;
}

void Deliver(detr_report** out, std::unique_ptr<detr_report> report) {
  if (out != nullptr) *out = report.release();
}

std::unique_ptr<detr_report> AnnotationReport(const detr::AnnotationReport& r, const char* out_json) {
  auto report = std::make_unique<detr_report>();
  report->json = detr::CocoToJson(r.dataset);
  report->warnings = r.warnings;
  std::ostringstream text;
  text << "wrote " << out_json << ": " << r.dataset.images.size() << " images, " << r.dataset.annotations.size()
       << " annotations, " << r.warnings.size() << " warnings\n";
  report->text = text.str();
  return report;
}

std::unique_ptr<detr_report> EvalReport(const detr::EvalResult& result) {
  auto report = std::make_unique<detr_report>();
  report->json = result.ToJson();
  report->text = detr::FormatEvalTable(result);
  return report;
}

}  // namespace

extern "C" {

const char* detr_version(void) { return "0.1.0"; }

const char* detr_last_error(void) { return g_last_error.c_str(); }

const char* detr_status_name(detr_status status) {
  switch (status) {
    case DETR_OK: return "ok";
    case DETR_ERR_ARGUMENT: return "argument";
    case DETR_ERR_DIMENSION: return "dimension";
    case DETR_ERR_CONTRACT: return "contract";
    case DETR_ERR_VALIDATION: return "validation";
    case DETR_ERR_IO: return "io";
    case DETR_ERR_NUMERIC: return "numeric";
    case DETR_ERR_INTERNAL: return "internal";
  }
  return "unknown";
}

detr_status detr_set_threads(int n) {
  return Guard([&] { detr::SetThreads(n); });
}

const char* detr_report_json(const detr_report* report) { return report ? report->json.c_str() : ""; }
const char* detr_report_text(const detr_report* report) { return report ? report->text.c_str() : ""; }
size_t detr_report_warning_count(const detr_report* report) { return report ? report->warnings.size() : 0; }
const char* detr_report_warning(const detr_report* report, size_t index) {
  if (report == nullptr || index >= report->warnings.size()) return "";
  return report->warnings[index].c_str();
}
int detr_report_passed(const detr_report* report) { return report && report->passed ? 1 : 0; }
void detr_report_free(detr_report* report) { delete report; }

detr_status detr_synth(uint64_t seed, int64_t count, int64_t width, int64_t height, int64_t classes,
                       const char* out_dir) {
  if (out_dir == nullptr) return Argument("out_dir must not be NULL");
  return Guard([&] {
    detr::SyntheticOptions opts;
    opts.seed = seed;
    opts.count = count;
    opts.width = width;
    opts.height = height;
    opts.classes = classes;
    detr::WriteSynthetic(detr::GenerateSynthetic(opts), out_dir);
  });
}

detr_status detr_annotate_nostril(const char* keypoints_dir, const char* images_dir, double box_w, double box_h,
                                  const char* out_json, detr_report** report) {
  if (keypoints_dir == nullptr || out_json == nullptr) return Argument("keypoints_dir and out_json are required");
  if (!(box_w > 0.0) || !(box_h > 0.0)) return Argument("box_w and box_h must be positive");
  return Guard([&] {
    detr::NostrilOptions opts;
    opts.box_w = box_w;
    opts.box_h = box_h;
    const auto r = detr::AnnotateNostrils(keypoints_dir, images_dir ? images_dir : keypoints_dir, opts);
    detr::WriteCoco(out_json, r.dataset);
    Deliver(report, AnnotationReport(r, out_json));
  });
}

detr_status detr_annotate_glottis(const char* masks_dir, detr_mask_mode mode, const char* out_json,
                                  detr_report** report) {
  if (masks_dir == nullptr || out_json == nullptr) return Argument("masks_dir and out_json are required");
  if (mode != DETR_MASK_GLOBAL && mode != DETR_MASK_COMPONENT) return Argument("unknown mask mode");
  return Guard([&] {
    const auto r = detr::AnnotateGlottis(
        masks_dir, mode == DETR_MASK_GLOBAL ? detr::MaskBoxMode::kGlobal : detr::MaskBoxMode::kPerComponent);
    detr::WriteCoco(out_json, r.dataset);
    Deliver(report, AnnotationReport(r, out_json));
  });
}

void detr_train_overrides_init(detr_train_overrides* overrides) {
  if (overrides == nullptr) return;
  *overrides = detr_train_overrides{0, 0, -1, 0.0, 0.0, nullptr};
}

detr_status detr_train(const char* config_json, const detr_train_overrides* overrides, detr_report** report) {
  if (config_json == nullptr) return Argument("config_json must not be NULL");
  return Guard([&] {
    detr::RunConfig config = detr::RunConfig::FromJson(config_json);
    if (overrides != nullptr) {
      if (overrides->has_seed) config.seed = overrides->seed;
      if (overrides->epochs >= 0) config.epochs = overrides->epochs;
      if (overrides->lr_backbone > 0.0) config.optimizer.lr_backbone = overrides->lr_backbone;
      if (overrides->lr_detector > 0.0) config.optimizer.lr_detector = overrides->lr_detector;
      if (overrides->output_dir != nullptr) config.output_dir = overrides->output_dir;
    }
    const detr::TrainReport r = detr::RunTraining(config);
    auto out = std::make_unique<detr_report>();
    nlohmann::json j;
    j["best_epoch"] = r.best_epoch;
    j["steps"] = r.steps.size();
    j["epochs"] = nlohmann::json::array();
    std::ostringstream text;
    for (const auto& e : r.epochs) {
      j["epochs"].push_back(nlohmann::json::parse(e.ToJsonLine()));
      text << "epoch " << e.epoch << "  loss " << e.loss;
      if (e.validation) text << "  val mAP " << e.validation->map << "  mAP@0.5 " << e.validation->map50;
      text << "\n";
    }
    text << "best epoch " << r.best_epoch << "; checkpoints in " << config.output_dir << "\n";
    out->json = j.dump(2) + "\n";
    out->text = text.str();
    Deliver(report, std::move(out));
  });
}

detr_status detr_evaluate_detections(const char* annotations_json, const char* detections_json,
                                     detr_report** report) {
  if (annotations_json == nullptr || detections_json == nullptr) {
    return Argument("annotations_json and detections_json are required");
  }
  return Guard([&] {
    const auto gt = detr::ReadCoco(annotations_json);
    const auto dets = detr::ReadDetections(detections_json);
    Deliver(report, EvalReport(detr::EvaluateDetections(gt, dets)));
  });
}

detr_status detr_model_load(const char* checkpoint_path, detr_model** model) {
  if (checkpoint_path == nullptr || model == nullptr) return Argument("checkpoint_path and model are required");
  *model = nullptr;
  return Guard([&] { *model = new detr_model(detr::LoadCheckpoint(checkpoint_path)); });
}

void detr_model_free(detr_model* model) { delete model; }

const char* detr_model_config(const detr_model* model) { return model ? model->config.c_str() : ""; }

int64_t detr_model_num_parameters(const detr_model* model) {
  return model ? model->detector.params().NumScalars() : 0;
}

detr_status detr_model_evaluate(const detr_model* model, const char* annotations_json, const char* images_dir,
                                const char* detections_out, detr_report** report) {
  if (model == nullptr || annotations_json == nullptr) return Argument("model and annotations_json are required");
  return Guard([&] {
    std::string dir;
    if (images_dir != nullptr) {
      dir = images_dir;
    } else {
      const auto parent = std::filesystem::path(annotations_json).parent_path();
      dir = parent.empty() ? "." : parent.string();
    }
    const auto data = detr::LoadDataset(annotations_json, dir, model->detector.config());
    std::vector<detr::CocoDetection> dets;
    const auto result = detr::EvaluateDetector(model->detector, data, &dets);
    if (detections_out != nullptr) detr::WriteDetections(detections_out, dets);
    Deliver(report, EvalReport(result));
  });
}

detr_status detr_model_predict(const detr_model* model, const uint8_t* rgb, int64_t width, int64_t height,
                               double* out, size_t capacity, size_t* count) {
  if (model == nullptr || rgb == nullptr || count == nullptr) return Argument("model, rgb and count are required");
  if (out == nullptr && capacity > 0) return Argument("out must not be NULL when capacity > 0");
  return Guard([&] {
    const auto& cfg = model->detector.config();
    detr::Require(width == cfg.image_width && height == cfg.image_height, detr::ErrorKind::kDimension,
                  "image is " + std::to_string(width) + "x" + std::to_string(height) + ", model expects " +
                      std::to_string(cfg.image_width) + "x" + std::to_string(cfg.image_height));
    detr::RgbImage image{width, height,
                         std::vector<std::uint8_t>(rgb, rgb + static_cast<std::size_t>(3 * width * height))};
    detr::Sample sample;
    sample.image = detr::ImageToTensor(image);
    std::vector<std::int64_t> labels(static_cast<std::size_t>(cfg.num_classes));
    for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = static_cast<std::int64_t>(i);
    const auto dets = detr::Predict(model->detector, {sample}, labels);
    *count = std::min(capacity, dets.size());
    for (std::size_t i = 0; i < *count; ++i) {
      const auto& d = dets[i];
      double* row = out + 6 * i;
      row[0] = d.bbox.x;
      row[1] = d.bbox.y;
      row[2] = d.bbox.w;
      row[3] = d.bbox.h;
      row[4] = d.score;
      row[5] = static_cast<double>(d.category_id);
    }
  });
}

detr_status detr_selfcheck(uint64_t seed, detr_report** report) {
  return Guard([&] {
    detr::SelfCheckOptions opts;
    opts.seed = seed;
    const auto results = detr::RunSelfCheck(opts);
    auto out = std::make_unique<detr_report>();
    nlohmann::json j = nlohmann::json::array();
    std::ostringstream text;
    for (const auto& r : results) {
      j.push_back({{"name", r.name}, {"passed", r.passed}, {"detail", r.detail}});
      out->passed = out->passed && r.passed;
      char line[256];
      std::snprintf(line, sizeof(line), "%-24s %-4s  %s\n", r.name.c_str(), r.passed ? "PASS" : "FAIL",
                    r.detail.c_str());
      text << line;
    }
    out->json = j.dump(2) + "\n";
    out->text = text.str();
    Deliver(report, std::move(out));
  });
}

void detr_testing_set_bilinear_fault(int enabled) { detr::testing::SetBilinearFault(enabled != 0); }

}  // extern "C"
