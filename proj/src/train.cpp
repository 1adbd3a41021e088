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

#include "detr/train.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "detr/error.hpp"

namespace detr {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr double kPixelMean = 0.5;
constexpr double kPixelStd = 0.25;
// Decorrelates the shuffle stream from parameter initialization.
constexpr std::uint64_t kShuffleSalt = 0x9E3779B97F4A7C15ULL;

void RejectUnknownKeys(const json& j, std::initializer_list<const char*> known, const std::string& where) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (std::none_of(known.begin(), known.end(), [&](const char* k) { return it.key() == k; })) {
      Fail(ErrorKind::kValidation, where + ": unknown key '" + it.key() + "'");
    }
  }
}

template <typename T>
void Read(const json& j, const char* key, T& field) {
  if (j.contains(key)) field = j.at(key).get<T>();
}

std::string ImagesDirFor(const std::string& annotations, const std::string& images) {
  if (!images.empty()) return images;
  const fs::path parent = fs::path(annotations).parent_path();
  return parent.empty() ? std::string(".") : parent.string();
}

}  // namespace

// ---------------------------------------------------------------------------
// RunConfig

RunConfig RunConfig::FromJson(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    Fail(ErrorKind::kValidation, std::string("run config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) Fail(ErrorKind::kValidation, "run config must be a JSON object");
  RejectUnknownKeys(j,
                    {"model", "optimizer", "loss", "epochs", "lr_drop_epochs", "lr_drop_factor", "lr_warmup_steps",
                     "batch_size", "seed", "train_annotations",
                     "train_images", "val_annotations", "val_images", "output_dir"},
                    "run config");
  RunConfig c;
  try {
    if (j.contains("model")) c.model = DetectorConfig::FromJson(j.at("model").dump());
    if (j.contains("optimizer")) {
      const json& o = j.at("optimizer");
      if (!o.is_object()) Fail(ErrorKind::kValidation, "run config: optimizer must be an object");
      RejectUnknownKeys(o, {"lr_backbone", "lr_detector", "beta1", "beta2", "epsilon", "clip_norm"}, "optimizer");
      Read(o, "lr_backbone", c.optimizer.lr_backbone);
      Read(o, "lr_detector", c.optimizer.lr_detector);
      Read(o, "beta1", c.optimizer.beta1);
      Read(o, "beta2", c.optimizer.beta2);
      Read(o, "epsilon", c.optimizer.epsilon);
      Read(o, "clip_norm", c.optimizer.clip_norm);
    }
    if (j.contains("loss")) {
      const json& l = j.at("loss");
      if (!l.is_object()) Fail(ErrorKind::kValidation, "run config: loss must be an object");
      RejectUnknownKeys(l, {"cls", "l1", "giou", "no_object"}, "loss");
      Read(l, "cls", c.loss.cls);
      Read(l, "l1", c.loss.l1);
      Read(l, "giou", c.loss.giou);
      Read(l, "no_object", c.loss.no_object);
    }
    Read(j, "epochs", c.epochs);
    Read(j, "lr_drop_epochs", c.lr_drop_epochs);
    Read(j, "lr_drop_factor", c.lr_drop_factor);
    Read(j, "lr_warmup_steps", c.lr_warmup_steps);
    Read(j, "batch_size", c.batch_size);
    Read(j, "seed", c.seed);
    Read(j, "train_annotations", c.train_annotations);
    Read(j, "train_images", c.train_images);
    Read(j, "val_annotations", c.val_annotations);
    Read(j, "val_images", c.val_images);
    Read(j, "output_dir", c.output_dir);
  } catch (const json::exception& e) {
    Fail(ErrorKind::kValidation, std::string("run config has a field of the wrong type: ") + e.what());
  }
  c.Validate(false);
  return c;
}

std::string RunConfig::ToJson() const {
  json j;
  j["model"] = json::parse(model.ToJson());
  j["optimizer"] = {{"lr_backbone", optimizer.lr_backbone}, {"lr_detector", optimizer.lr_detector},
                    {"beta1", optimizer.beta1},             {"beta2", optimizer.beta2},
                    {"epsilon", optimizer.epsilon},         {"clip_norm", optimizer.clip_norm}};
  j["loss"] = {{"cls", loss.cls}, {"l1", loss.l1}, {"giou", loss.giou}, {"no_object", loss.no_object}};
  j["epochs"] = epochs;
  j["lr_drop_epochs"] = lr_drop_epochs;
  j["lr_drop_factor"] = lr_drop_factor;
  j["lr_warmup_steps"] = lr_warmup_steps;
  j["batch_size"] = batch_size;
  j["seed"] = seed;
  j["train_annotations"] = train_annotations;
  j["train_images"] = train_images;
  j["val_annotations"] = val_annotations;
  j["val_images"] = val_images;
  j["output_dir"] = output_dir;
  return j.dump(2) + "\n";
}

void RunConfig::Validate(bool check_paths) const {
  model.Validate();
  auto positive = [](double v) { return std::isfinite(v) && v > 0.0; };
  Require(epochs >= 0, ErrorKind::kValidation, "epochs must be >= 0");
  Require(std::isfinite(lr_drop_factor) && lr_drop_factor > 0.0, ErrorKind::kValidation,
          "lr_drop_factor must be positive");
  for (std::int64_t e : lr_drop_epochs) Require(e >= 1, ErrorKind::kValidation, "lr_drop_epochs must be >= 1");
  Require(lr_warmup_steps >= 0, ErrorKind::kValidation, "lr_warmup_steps must be >= 0");
  Require(batch_size >= 1, ErrorKind::kValidation, "batch_size must be >= 1");
  Require(positive(optimizer.lr_backbone) && positive(optimizer.lr_detector), ErrorKind::kValidation,
          "learning rates must be positive");
  Require(optimizer.beta1 >= 0.0 && optimizer.beta1 < 1.0 && optimizer.beta2 >= 0.0 && optimizer.beta2 < 1.0,
          ErrorKind::kValidation, "Adam betas must lie in [0, 1)");
  Require(positive(optimizer.epsilon), ErrorKind::kValidation, "Adam epsilon must be positive");
  Require(std::isfinite(optimizer.clip_norm), ErrorKind::kValidation, "clip_norm must be finite");
  Require(loss.cls >= 0.0 && loss.l1 >= 0.0 && loss.giou >= 0.0 && loss.no_object >= 0.0, ErrorKind::kValidation,
          "loss weights must be non-negative");
  if (!check_paths) return;
  Require(!train_annotations.empty(), ErrorKind::kValidation, "train_annotations is required");
  Require(fs::is_regular_file(train_annotations), ErrorKind::kIo, "cannot read " + train_annotations);
  Require(fs::is_directory(ImagesDirFor(train_annotations, train_images)), ErrorKind::kIo,
          "train image directory not found: " + ImagesDirFor(train_annotations, train_images));
  if (!val_annotations.empty()) {
    Require(fs::is_regular_file(val_annotations), ErrorKind::kIo, "cannot read " + val_annotations);
    Require(fs::is_directory(ImagesDirFor(val_annotations, val_images)), ErrorKind::kIo,
            "validation image directory not found: " + ImagesDirFor(val_annotations, val_images));
  }
  Require(!output_dir.empty(), ErrorKind::kValidation, "output_dir is required");
}

// ---------------------------------------------------------------------------
// Data

Tensor ImageToTensor(const RgbImage& image) {
  const std::int64_t h = image.height, w = image.width;
  Require(static_cast<std::int64_t>(image.pixels.size()) == 3 * h * w, ErrorKind::kDimension,
          "RGB buffer does not match image size");
  std::vector<double> data(static_cast<std::size_t>(3 * h * w));
  for (std::int64_t c = 0; c < 3; ++c) {
    for (std::int64_t i = 0; i < h * w; ++i) {
      const double v = static_cast<double>(image.pixels[static_cast<std::size_t>(3 * i + c)]) / 255.0;
      data[static_cast<std::size_t>(c * h * w + i)] = (v - kPixelMean) / kPixelStd;
    }
  }
  return Tensor::FromData({3, h, w}, std::move(data));
}

RgbImage GrayToRgb(const GrayImage& image) {
  RgbImage out{image.width, image.height, std::vector<std::uint8_t>(3 * image.pixels.size())};
  for (std::size_t i = 0; i < image.pixels.size(); ++i) {
    out.pixels[3 * i] = out.pixels[3 * i + 1] = out.pixels[3 * i + 2] = image.pixels[i];
  }
  return out;
}

namespace {

LoadedDataset BuildSamples(CocoDataset coco, const DetectorConfig& model,
                           const std::function<RgbImage(const CocoImage&)>& load) {
  LoadedDataset out;
  out.category_ids = coco.SortedCategoryIds();
  Require(static_cast<std::int64_t>(out.category_ids.size()) == model.num_classes, ErrorKind::kValidation,
          "dataset has " + std::to_string(out.category_ids.size()) + " categories but the model expects " +
              std::to_string(model.num_classes));
  for (const auto& im : coco.images) {
    Require(im.width == model.image_width && im.height == model.image_height, ErrorKind::kValidation,
            "image " + std::to_string(im.id) + " is " + std::to_string(im.width) + "x" + std::to_string(im.height) +
                " but the model expects " + std::to_string(model.image_width) + "x" +
                std::to_string(model.image_height));
    const RgbImage rgb = load(im);
    Require(rgb.width == im.width && rgb.height == im.height, ErrorKind::kValidation,
            im.file_name + ": pixel size differs from its annotation record");
    Sample s;
    s.image_id = im.id;
    s.file_name = im.file_name;
    s.image = ImageToTensor(rgb);
    for (const auto& a : coco.annotations) {
      if (a.image_id != im.id) continue;
      const BoxXyxy xyxy = XyWhToXyxy(a.bbox);
      s.targets.boxes.push_back(
          XyxyToCxCyWh(xyxy, static_cast<double>(im.width), static_cast<double>(im.height)));
      const auto label = std::lower_bound(out.category_ids.begin(), out.category_ids.end(), a.category_id) -
                         out.category_ids.begin();
      s.targets.labels.push_back(label);
    }
    out.samples.push_back(std::move(s));
  }
  out.coco = std::move(coco);
  return out;
}

}  // namespace

LoadedDataset LoadDataset(const std::string& annotations_path, const std::string& images_dir,
                          const DetectorConfig& model) {
  const std::string dir = ImagesDirFor(annotations_path, images_dir);
  return BuildSamples(ReadCoco(annotations_path), model, [&](const CocoImage& im) {
    const fs::path path = fs::path(dir) / im.file_name;
    const std::string ext = path.extension().string();
    if (ext == ".ppm") return ReadPpm(path.string());
    if (ext == ".pgm") return GrayToRgb(ReadPgm(path.string()));
    Fail(ErrorKind::kValidation, path.string() + ": unsupported image format (expected .ppm or .pgm)");
  });
}

LoadedDataset FromSynthetic(const SyntheticDataset& data, const DetectorConfig& model) {
  return BuildSamples(data.coco, model, [&](const CocoImage& im) {
    return data.images[static_cast<std::size_t>(im.id - data.coco.images.front().id)];
  });
}

// ---------------------------------------------------------------------------
// Training

std::string EpochRecord::ToJsonLine() const {
  json j;
  j["epoch"] = epoch;
  j["step"] = step;
  j["loss"] = loss;
  j["loss_cls"] = loss_cls;
  j["loss_l1"] = loss_l1;
  j["loss_giou"] = loss_giou;
  j["lr_backbone"] = lr_backbone;
  j["lr_detector"] = lr_detector;
  if (validation) {
    j["val_mAP"] = validation->map;
    j["val_mAP@0.5"] = validation->map50;
    j["val_mAP@0.75"] = validation->map75;
  }
  return j.dump();
}

TrainReport TrainDetector(Detector& detector, const std::vector<Sample>& train, const LoadedDataset* validation,
                          const RunConfig& config, const TrainHooks& hooks,
                          const std::function<void(const Detector&)>& on_best) {
  config.Validate(false);
  Require(config.model == detector.config(), ErrorKind::kValidation, "run config and detector config differ");
  Require(config.epochs == 0 || !train.empty(), ErrorKind::kValidation, "training set is empty");
  Adam adam(config.optimizer);
  Rng shuffle(config.seed ^ kShuffleSalt);
  TrainReport report;
  double best_score = -std::numeric_limits<double>::infinity();
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const auto batch = static_cast<std::size_t>(config.batch_size);
  bool stop = false;

  for (std::int64_t epoch = 1; epoch <= config.epochs && !stop; ++epoch) {
    for (std::size_t i = order.size(); i-- > 1;) {
      std::swap(order[i], order[static_cast<std::size_t>(shuffle.UniformInt(0, static_cast<std::int64_t>(i)))]);
    }
    const auto drops = std::count_if(config.lr_drop_epochs.begin(), config.lr_drop_epochs.end(),
                                     [&](std::int64_t e) { return e < epoch; });
    const double drop_scale = std::pow(config.lr_drop_factor, static_cast<double>(drops));
    EpochRecord rec;
    rec.epoch = epoch;
    std::int64_t epoch_steps = 0;
    for (std::size_t begin = 0; begin < order.size() && !stop; begin += batch) {
      const std::size_t end = std::min(order.size(), begin + batch);
      std::vector<std::vector<LayerPrediction>> preds;
      std::vector<Targets> targets;
      std::string ids;
      for (std::size_t b = begin; b < end; ++b) {
        const Sample& s = train[order[b]];
        auto layers = detector.Forward(s.image);
        if (!config.model.aux_loss) layers.erase(layers.begin(), layers.end() - 1);
        preds.push_back(std::move(layers));
        targets.push_back(s.targets);
        ids += (ids.empty() ? "" : ",") + std::to_string(s.image_id);
      }
      const std::int64_t step = adam.step_count() + 1;
      const double warmup = config.lr_warmup_steps > 0
                                ? std::min(1.0, static_cast<double>(step) / static_cast<double>(config.lr_warmup_steps))
                                : 1.0;
      adam.set_lr_scale(drop_scale * warmup);
      const auto where = [&] {
        return " at epoch " + std::to_string(epoch) + ", step " + std::to_string(step) + "; batch image ids [" + ids +
               "]";
      };
      LossBreakdown loss;
      try {
        loss = SetLoss(preds, targets, config.loss);
      } catch (const Error& e) {
        // NaN predictions surface first in the matcher.
        if (e.kind() != ErrorKind::kNumeric) throw;
        Tape::Active().Clear();
        Fail(ErrorKind::kNumeric, std::string("non-finite loss (") + e.what() + ")" + where());
      }
      const double value = loss.total.item();
      auto diagnose = [&](const std::string& what) {
        std::ostringstream msg;
        msg << what << where() << "; loss components cls=" << loss.cls << " l1=" << loss.l1 << " giou=" << loss.giou;
        return msg.str();
      };
      if (!std::isfinite(value)) {
        Tape::Active().Clear();
        Fail(ErrorKind::kNumeric, diagnose("non-finite loss"));
      }
      Backward(loss.total);
      double grad_norm = 0.0;
      try {
        grad_norm = adam.Step(detector.params());
      } catch (const Error& e) {
        if (e.kind() != ErrorKind::kNumeric) throw;
        detector.params().ZeroGrad();
        Fail(ErrorKind::kNumeric, diagnose(std::string("non-finite gradient (") + e.what() + ")"));
      }
      StepRecord sr{epoch, step, value, loss.cls, loss.l1, loss.giou, grad_norm};
      report.steps.push_back(sr);
      if (hooks.on_step) hooks.on_step(sr);
      rec.loss += value;
      rec.loss_cls += loss.cls;
      rec.loss_l1 += loss.l1;
      rec.loss_giou += loss.giou;
      ++epoch_steps;
      if (hooks.max_steps > 0 && step >= hooks.max_steps) stop = true;
    }
    const double inv = 1.0 / static_cast<double>(std::max<std::int64_t>(1, epoch_steps));
    rec.loss *= inv;
    rec.loss_cls *= inv;
    rec.loss_l1 *= inv;
    rec.loss_giou *= inv;
    rec.step = adam.step_count();
    rec.lr_backbone = adam.LearningRate(ParamGroup::kBackbone);
    rec.lr_detector = adam.LearningRate(ParamGroup::kDetector);
    if (validation != nullptr) rec.validation = EvaluateDetector(detector, *validation);
    const double score = rec.validation ? rec.validation->map : -rec.loss;
    if (score > best_score) {
      best_score = score;
      report.best_epoch = epoch;
      if (on_best) on_best(detector);
    }
    report.epochs.push_back(rec);
    if (hooks.on_epoch) hooks.on_epoch(rec);
  }
  return report;
}

// ---------------------------------------------------------------------------
// Inference

std::vector<CocoDetection> Predict(const Detector& detector, const std::vector<Sample>& samples,
                                   const std::vector<std::int64_t>& category_ids) {
  const std::int64_t classes = detector.config().num_classes;
  Require(static_cast<std::int64_t>(category_ids.size()) == classes, ErrorKind::kValidation,
          "category id list does not match the model's class count");
  NoGradGuard no_grad;
  std::vector<CocoDetection> out;
  for (const auto& s : samples) {
    const auto layers = detector.Forward(s.image);
    const LayerPrediction& last = layers.back();
    const auto probs = last.probs.data();
    const auto boxes = last.boxes.data();
    const auto w = static_cast<double>(s.image.dim(2));
    const auto h = static_cast<double>(s.image.dim(1));
    const std::int64_t n = last.probs.dim(0);
    for (std::int64_t q = 0; q < n; ++q) {
      const double* p = probs.data() + q * (classes + 1);
      const std::int64_t label = std::max_element(p, p + classes) - p;
      const double* b = boxes.data() + 4 * q;
      const BoxXyxy px = CxCyWhToXyxy(BoxCxCyWh{b[0], b[1], b[2], b[3]}, w, h);
      out.push_back({s.image_id, category_ids[static_cast<std::size_t>(label)], XyxyToXyWh(px), p[label]});
    }
  }
  return out;
}

EvalResult EvaluateDetector(const Detector& detector, const LoadedDataset& data,
                            std::vector<CocoDetection>* detections) {
  auto dets = Predict(detector, data.samples, data.category_ids);
  EvalResult result = EvaluateDetections(data.coco, dets);
  if (detections != nullptr) *detections = std::move(dets);
  return result;
}

TrainReport RunTraining(const RunConfig& config) {
  config.Validate(true);
  std::error_code ec;
  fs::create_directories(config.output_dir, ec);
  if (ec) Fail(ErrorKind::kIo, "cannot create " + config.output_dir + ": " + ec.message());
  const fs::path out(config.output_dir);

  const LoadedDataset train = LoadDataset(config.train_annotations, config.train_images, config.model);
  std::optional<LoadedDataset> val;
  if (!config.val_annotations.empty()) val = LoadDataset(config.val_annotations, config.val_images, config.model);

  WriteTextFile((out / "config.json").string(), config.ToJson());
  const std::string metrics_path = (out / "metrics.jsonl").string();
  std::ofstream metrics(metrics_path, std::ios::trunc);
  if (!metrics) Fail(ErrorKind::kIo, "cannot open " + metrics_path);

  Detector detector(config.model, config.seed);
  const std::string best_path = (out / "best.ckpt").string();
  SaveCheckpoint(best_path, detector);

  TrainHooks hooks;
  hooks.on_epoch = [&](const EpochRecord& rec) {
    metrics << rec.ToJsonLine() << "\n";
    metrics.flush();
  };
  TrainReport report;
  try {
    report = TrainDetector(detector, train.samples, val ? &*val : nullptr, config, hooks,
                           [&](const Detector& d) { SaveCheckpoint(best_path, d); });
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::kNumeric) {
      WriteTextFile((out / "nonfinite_batch.txt").string(), std::string(e.what()) + "\n");
    }
    throw;
  }
  SaveCheckpoint((out / "final.ckpt").string(), detector);
  return report;
}

}  // namespace detr
