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

// Dataset loading, the training loop, inference and checkpoint evaluation.

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "detr/coco.hpp"
#include "detr/coco_eval.hpp"
#include "detr/imageio.hpp"
#include "detr/matcher.hpp"
#include "detr/model.hpp"
#include "detr/optim.hpp"
#include "detr/synth.hpp"

namespace detr {

struct RunConfig {
  DetectorConfig model = DetectorConfig::Desk();
  AdamConfig optimizer;  // lr_backbone 1e-5, lr_detector 1e-4
  LossWeights loss;
  std::int64_t epochs = 24;
  // Step schedule: the learning rates are multiplied by lr_drop_factor once
  // for every listed (1-based) epoch that has finished.
  std::vector<std::int64_t> lr_drop_epochs;
  double lr_drop_factor = 0.1;
  // Linear ramp over the first optimizer steps; 0 disables it.
  std::int64_t lr_warmup_steps = 0;
  std::int64_t batch_size = 4;
  std::uint64_t seed = 0;
  std::string train_annotations;
  std::string train_images;  // empty: directory of train_annotations
  std::string val_annotations;
  std::string val_images;
  std::string output_dir;

  // Every key is optional; unknown keys are rejected.
  static RunConfig FromJson(const std::string& text);
  std::string ToJson() const;
  // Checks numeric ranges; with check_paths also that inputs exist.
  void Validate(bool check_paths) const;
};

struct Sample {
  std::int64_t image_id = 0;
  std::string file_name;
  Tensor image;  // [3, H, W], normalized
  Targets targets;
};

struct LoadedDataset {
  CocoDataset coco;
  std::vector<std::int64_t> category_ids;  // label i <-> category_ids[i]
  std::vector<Sample> samples;             // in coco.images order
};

// [3, H, W] with (v / 255 - 0.5) / 0.25 per channel.
Tensor ImageToTensor(const RgbImage& image);
// Grayscale is replicated across the three channels.
RgbImage GrayToRgb(const GrayImage& image);

// Reads annotations and every referenced image (P6 or P5). Image sizes must
// match the model input and the category count must match num_classes.
LoadedDataset LoadDataset(const std::string& annotations_path, const std::string& images_dir,
                          const DetectorConfig& model);
LoadedDataset FromSynthetic(const SyntheticDataset& data, const DetectorConfig& model);

struct StepRecord {
  std::int64_t epoch = 0;  // 1-based
  std::int64_t step = 0;   // 1-based global optimizer step
  double loss = 0.0;
  double loss_cls = 0.0;
  double loss_l1 = 0.0;
  double loss_giou = 0.0;
  double grad_norm = 0.0;
};

struct EpochRecord {
  std::int64_t epoch = 0;
  std::int64_t step = 0;
  double loss = 0.0;  // mean over the epoch's steps
  double loss_cls = 0.0;
  double loss_l1 = 0.0;
  double loss_giou = 0.0;
  std::optional<EvalResult> validation;

  double lr_backbone = 0.0;  // rates at the end of the epoch
  double lr_detector = 0.0;

  std::string ToJsonLine() const;
};

struct TrainHooks {
  std::function<void(const StepRecord&)> on_step;
  std::function<void(const EpochRecord&)> on_epoch;
  // Stop after this many optimizer steps; <= 0 runs all epochs.
  std::int64_t max_steps = 0;
};

struct TrainReport {
  std::vector<StepRecord> steps;
  std::vector<EpochRecord> epochs;
  std::int64_t best_epoch = 0;  // 0: initial weights
};

// Trains in place. Batches come from a per-epoch shuffle seeded by
// config.seed. When `validation` is given, each epoch is evaluated on it and
// the best epoch is the one with the highest mAP; otherwise the lowest mean
// training loss. `on_best` fires whenever the best epoch improves. A
// non-finite loss or gradient throws Error(kNumeric) with the batch named.
TrainReport TrainDetector(Detector& detector, const std::vector<Sample>& train, const LoadedDataset* validation,
                          const RunConfig& config, const TrainHooks& hooks = {},
                          const std::function<void(const Detector&)>& on_best = {});

// One detection per query: the most probable non-background class, its
// probability as score, and the box in pixels clamped to the image.
std::vector<CocoDetection> Predict(const Detector& detector, const std::vector<Sample>& samples,
                                   const std::vector<std::int64_t>& category_ids);

EvalResult EvaluateDetector(const Detector& detector, const LoadedDataset& data,
                            std::vector<CocoDetection>* detections = nullptr);

// File-level driver: validates paths, writes <out>/config.json,
// <out>/metrics.jsonl (one JSON object per epoch), <out>/best.ckpt and
// <out>/final.ckpt. With epochs == 0 both checkpoints hold the initial
// weights and the metric log is empty.
TrainReport RunTraining(const RunConfig& config);

}  // namespace detr
