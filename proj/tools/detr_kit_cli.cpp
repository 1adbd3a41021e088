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

// Command-line front end. Talks to the library only through detr_kit.h.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "detr_kit.h"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitUsage = 2;

int Report(detr_status status, const char* what) {
  if (status == DETR_OK) return kExitOk;
  std::cerr << "error: " << what << " failed (" << detr_status_name(status) << "): " << detr_last_error() << "\n";
  return status == DETR_ERR_ARGUMENT ? kExitUsage : kExitFailure;
}

void PrintWarnings(const detr_report* report) {
  for (size_t i = 0; i < detr_report_warning_count(report); ++i) {
    std::cerr << "warning: " << detr_report_warning(report, i) << "\n";
  }
}

bool ReadText(const std::string& path, std::string* out) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return false;
  std::ostringstream ss;
  ss << in.rdbuf();
  *out = ss.str();
  return true;
}

bool WriteText(const std::string& path, const char* text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << text;
  return static_cast<bool>(out);
}

// Owns a report handle for the duration of one command.
struct ReportHolder {
  detr_report* ptr = nullptr;
  ~ReportHolder() { detr_report_free(ptr); }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"detr-kit: landmark detection with deformable attention and a semantic aligner"};
  app.require_subcommand(1);
  int threads = 0;
  app.add_option("--threads", threads, "Worker threads (default: DETR_KIT_THREADS or 1)");

  // annotate-nostril
  auto* nostril = app.add_subcommand("annotate-nostril", "Expand nostril keypoints into boxes (COCO JSON)");
  std::string kp_dir, img_dir, out;
  double box_w = 0.0, box_h = 0.0;
  nostril->add_option("keypoints", kp_dir, "Directory of .pts keypoint files")->required()->check(CLI::ExistingDirectory);
  nostril->add_option("--images", img_dir, "Directory with <stem>.pgm/.ppm images (default: keypoint dir)")
      ->check(CLI::ExistingDirectory);
  nostril->add_option("--box-w", box_w, "Box width in pixels (documented default 20)")->required();
  nostril->add_option("--box-h", box_h, "Box height in pixels (documented default 14)")->required();
  nostril->add_option("--out", out, "Output COCO JSON path")->required();

  // annotate-glottis
  auto* glottis = app.add_subcommand("annotate-glottis", "Extract boxes from segmentation masks (COCO JSON)");
  std::string masks_dir, mode = "global";
  glottis->add_option("masks", masks_dir, "Directory of P5 PGM masks")->required()->check(CLI::ExistingDirectory);
  glottis->add_option("--mode", mode, "global: one box per image; component: one per 8-connected region")
      ->check(CLI::IsMember({"global", "component"}));
  glottis->add_option("--out", out, "Output COCO JSON path")->required();

  // synth
  auto* synth = app.add_subcommand("synth", "Generate a synthetic detection dataset");
  std::uint64_t seed = 0;
  std::int64_t count = 100, size = 64, classes = 2;
  synth->add_option("--seed", seed, "Random seed");
  synth->add_option("--count", count, "Number of images")->check(CLI::PositiveNumber);
  synth->add_option("--size", size, "Image side in pixels")->check(CLI::Range(16, 4096));
  synth->add_option("--classes", classes, "Shape classes (1-3)")->check(CLI::Range(1, 3));
  synth->add_option("--out", out, "Output directory")->required();

  // train
  auto* train = app.add_subcommand("train", "Train a detector from a JSON run config");
  std::string config_path;
  std::int64_t epochs = -1;
  double lr_backbone = 0.0, lr_detector = 0.0;
  train->add_option("--config", config_path, "Run config JSON")->required()->check(CLI::ExistingFile);
  auto* train_seed = train->add_option("--seed", seed, "Override the config seed");
  train->add_option("--epochs", epochs, "Override the epoch count")->check(CLI::NonNegativeNumber);
  train->add_option("--lr-backbone", lr_backbone, "Override the backbone learning rate")->check(CLI::PositiveNumber);
  train->add_option("--lr-detector", lr_detector, "Override the detector learning rate")->check(CLI::PositiveNumber);
  train->add_option("--out", out, "Override the output directory");

  // eval
  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint or a detections file against COCO ground truth");
  std::string annotations, checkpoint, detections, dets_out;
  eval->add_option("annotations", annotations, "Ground-truth COCO JSON")->required()->check(CLI::ExistingFile);
  auto* ckpt_opt = eval->add_option("checkpoint", checkpoint, "Model checkpoint")->check(CLI::ExistingFile);
  auto* dets_opt = eval->add_option("--detections", detections, "COCO results JSON to score instead of a model")
                       ->check(CLI::ExistingFile);
  ckpt_opt->excludes(dets_opt);
  eval->add_option("--images", img_dir, "Image directory (default: next to the annotations)")
      ->check(CLI::ExistingDirectory);
  eval->add_option("--predictions", dets_out, "Also write the model's detections here");
  eval->add_option("--out", out, "Write the evaluation JSON here");

  // selfcheck
  auto* selfcheck = app.add_subcommand("selfcheck", "Run gradient checks, oracles and evaluator fixtures");
  bool fault = false;
  selfcheck->add_option("--seed", seed, "Random seed for the checks");
  selfcheck->add_flag("--inject-bilinear-fault", fault, "Corrupt the bilinear sampler (tests the checks)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  if (threads != 0 && detr_set_threads(threads) != DETR_OK) return Report(DETR_ERR_ARGUMENT, "--threads");

  if (*nostril) {
    ReportHolder r;
    const int code = Report(
        detr_annotate_nostril(kp_dir.c_str(), img_dir.empty() ? nullptr : img_dir.c_str(), box_w, box_h, out.c_str(),
                              &r.ptr),
        "annotate-nostril");
    if (code != kExitOk) return code;
    PrintWarnings(r.ptr);
    std::cout << detr_report_text(r.ptr);
    return kExitOk;
  }

  if (*glottis) {
    ReportHolder r;
    const int code =
        Report(detr_annotate_glottis(masks_dir.c_str(), mode == "global" ? DETR_MASK_GLOBAL : DETR_MASK_COMPONENT,
                                     out.c_str(), &r.ptr),
               "annotate-glottis");
    if (code != kExitOk) return code;
    PrintWarnings(r.ptr);
    std::cout << detr_report_text(r.ptr);
    return kExitOk;
  }

  if (*synth) {
    const int code = Report(detr_synth(seed, count, size, size, classes, out.c_str()), "synth");
    if (code == kExitOk) std::cout << "wrote " << count << " images to " << out << "\n";
    return code;
  }

  if (*train) {
    std::string text;
    if (!ReadText(config_path, &text)) {
      std::cerr << "error: cannot read " << config_path << "\n";
      return kExitFailure;
    }
    detr_train_overrides ov;
    detr_train_overrides_init(&ov);
    if (train_seed->count() > 0) {
      ov.has_seed = 1;
      ov.seed = seed;
    }
    ov.epochs = epochs;
    ov.lr_backbone = lr_backbone;
    ov.lr_detector = lr_detector;
    if (!out.empty()) ov.output_dir = out.c_str();
    ReportHolder r;
    const int code = Report(detr_train(text.c_str(), &ov, &r.ptr), "train");
    if (code == kExitOk) std::cout << detr_report_text(r.ptr);
    return code;
  }

  if (*eval) {
    if (checkpoint.empty() == detections.empty()) {
      std::cerr << "error: eval needs either a checkpoint or --detections\n";
      return kExitUsage;
    }
    ReportHolder r;
    int code;
    if (!detections.empty()) {
      code = Report(detr_evaluate_detections(annotations.c_str(), detections.c_str(), &r.ptr), "eval");
    } else {
      detr_model* model = nullptr;
      code = Report(detr_model_load(checkpoint.c_str(), &model), "loading the checkpoint");
      if (code != kExitOk) return code;
      code = Report(detr_model_evaluate(model, annotations.c_str(), img_dir.empty() ? nullptr : img_dir.c_str(),
                                        dets_out.empty() ? nullptr : dets_out.c_str(), &r.ptr),
                    "eval");
      detr_model_free(model);
    }
    if (code != kExitOk) return code;
    std::cout << detr_report_text(r.ptr);
    if (!out.empty() && !WriteText(out, detr_report_json(r.ptr))) {
      std::cerr << "error: cannot write " << out << "\n";
      return kExitFailure;
    }
    return kExitOk;
  }

  if (*selfcheck) {
    detr_testing_set_bilinear_fault(fault ? 1 : 0);
    ReportHolder r;
    const int code = Report(detr_selfcheck(seed, &r.ptr), "selfcheck");
    detr_testing_set_bilinear_fault(0);
    if (code != kExitOk) return code;
    std::cout << detr_report_text(r.ptr);
    const bool passed = detr_report_passed(r.ptr) != 0;
    std::cout << (passed ? "all checks passed\n" : "some checks FAILED\n");
    return passed ? kExitOk : kExitFailure;
  }
  return kExitUsage;
}
