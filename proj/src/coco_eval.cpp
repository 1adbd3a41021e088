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

#include "detr/coco_eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <set>
#include <unordered_map>

#include <json.hpp>

#include "detr/error.hpp"

namespace detr {

double IouThreshold(int index) { return static_cast<double>(50 + 5 * index) / 100.0; }
double RecallPoint(int index) { return static_cast<double>(index) / 100.0; }

namespace {

struct Scored {
  double score;
  bool tp;
};

// Greedy matching for one (image, category) cell at threshold t; dets must be
// sorted by descending score. Appends one entry per detection.
void MatchCell(const std::vector<const CocoDetection*>& dets, const std::vector<BoxXyxy>& gts, double t,
               std::vector<Scored>& out) {
  std::vector<char> taken(gts.size(), 0);
  for (const CocoDetection* d : dets) {
    const BoxXyxy db = XyWhToXyxy(d->bbox);
    std::int64_t best = -1;
    double best_iou = 0.0;
    for (std::size_t g = 0; g < gts.size(); ++g) {
      if (taken[g]) continue;
      const double iou = Iou(db, gts[g]);
      if (iou < t) continue;
      // Strict improvement keeps the lowest GT index on ties.
      if (best < 0 || iou > best_iou) {
        best = static_cast<std::int64_t>(g);
        best_iou = iou;
      }
    }
    if (best >= 0) taken[static_cast<std::size_t>(best)] = 1;
    out.push_back({d->score, best >= 0});
  }
}

std::array<double, kNumRecallPoints> InterpolatedPrecision(std::vector<Scored> scored, std::int64_t num_gt) {
  std::stable_sort(scored.begin(), scored.end(), [](const Scored& a, const Scored& b) { return a.score > b.score; });
  std::vector<double> recall, precision;
  double tp = 0.0, fp = 0.0;
  for (const auto& s : scored) {
    (s.tp ? tp : fp) += 1.0;
    recall.push_back(tp / static_cast<double>(num_gt));
    precision.push_back(tp / (tp + fp));
  }
  for (std::size_t i = precision.size(); i-- > 1;) precision[i - 1] = std::max(precision[i - 1], precision[i]);
  std::array<double, kNumRecallPoints> q{};
  for (int r = 0; r < kNumRecallPoints; ++r) {
    const auto it = std::lower_bound(recall.begin(), recall.end(), RecallPoint(r));
    q[static_cast<std::size_t>(r)] = it == recall.end() ? 0.0 : precision[static_cast<std::size_t>(it - recall.begin())];
  }
  return q;
}

}  // namespace

EvalResult EvaluateDetections(const CocoDataset& gt, const std::vector<CocoDetection>& detections) {
  ValidateCoco(gt);
  std::set<std::int64_t> image_ids, category_ids;
  for (const auto& im : gt.images) image_ids.insert(im.id);
  for (const auto& c : gt.categories) category_ids.insert(c.id);
  for (std::size_t i = 0; i < detections.size(); ++i) {
    const auto& d = detections[i];
    const std::string where = "detections[" + std::to_string(i) + "]";
    if (!category_ids.count(d.category_id)) {
      Fail(ErrorKind::kValidation, where + ": unknown category_id " + std::to_string(d.category_id));
    }
    if (!image_ids.count(d.image_id)) {
      Fail(ErrorKind::kValidation, where + ": unknown image_id " + std::to_string(d.image_id));
    }
    if (!std::isfinite(d.score)) Fail(ErrorKind::kValidation, where + ": score is not finite");
    if (!(d.bbox.w >= 0.0 && d.bbox.h >= 0.0)) Fail(ErrorKind::kValidation, where + ": negative box extent");
  }

  // Cells keyed by (category, image), each in input order.
  std::map<std::pair<std::int64_t, std::int64_t>, std::vector<BoxXyxy>> gt_cells;
  std::map<std::int64_t, std::int64_t> gt_count;
  for (const auto& a : gt.annotations) {
    if (a.iscrowd) continue;
    gt_cells[{a.category_id, a.image_id}].push_back(XyWhToXyxy(a.bbox));
    ++gt_count[a.category_id];
  }
  std::map<std::pair<std::int64_t, std::int64_t>, std::vector<const CocoDetection*>> det_cells;
  for (const auto& d : detections) det_cells[{d.category_id, d.image_id}].push_back(&d);
  for (auto& [key, dets] : det_cells) {
    std::stable_sort(dets.begin(), dets.end(),
                     [](const CocoDetection* a, const CocoDetection* b) { return a->score > b->score; });
  }

  EvalResult result;
  const std::vector<BoxXyxy> no_gt;
  for (std::int64_t cat : category_ids) {
    const auto count = gt_count.find(cat);
    if (count == gt_count.end()) continue;  // no ground truth: excluded from the mean
    CategoryEval ce;
    ce.category_id = cat;
    ce.num_gt = count->second;
    for (int t = 0; t < kNumIouThresholds; ++t) {
      std::vector<Scored> scored;
      for (std::int64_t img : image_ids) {
        const auto dit = det_cells.find({cat, img});
        if (dit == det_cells.end()) continue;
        const auto git = gt_cells.find({cat, img});
        MatchCell(dit->second, git == gt_cells.end() ? no_gt : git->second, IouThreshold(t), scored);
      }
      const auto q = InterpolatedPrecision(std::move(scored), ce.num_gt);
      ce.precision.push_back(q);
      ce.ap[static_cast<std::size_t>(t)] = std::accumulate(q.begin(), q.end(), 0.0) / kNumRecallPoints;
    }
    result.categories.push_back(std::move(ce));
  }
  if (!result.categories.empty()) {
    const auto k = static_cast<double>(result.categories.size());
    for (int t = 0; t < kNumIouThresholds; ++t) {
      double sum = 0.0;
      for (const auto& ce : result.categories) sum += ce.ap[static_cast<std::size_t>(t)];
      result.ap_per_threshold[static_cast<std::size_t>(t)] = sum / k;
    }
  }
  result.map = std::accumulate(result.ap_per_threshold.begin(), result.ap_per_threshold.end(), 0.0) /
               kNumIouThresholds;
  result.map50 = result.ap_per_threshold[0];
  result.map75 = result.ap_per_threshold[5];
  return result;
}

std::string EvalResult::ToJson() const {
  nlohmann::json root;
  root["mAP"] = map;
  root["mAP@0.5"] = map50;
  root["mAP@0.75"] = map75;
  root["iou_thresholds"] = nlohmann::json::array();
  for (int t = 0; t < kNumIouThresholds; ++t) root["iou_thresholds"].push_back(IouThreshold(t));
  root["ap_per_threshold"] = ap_per_threshold;
  root["categories"] = nlohmann::json::array();
  for (const auto& ce : categories) {
    root["categories"].push_back(
        {{"category_id", ce.category_id}, {"num_gt", ce.num_gt}, {"ap", ce.ap}, {"precision", ce.precision}});
  }
  return root.dump(1) + "\n";
}

EvalResult EvalResult::FromJson(const std::string& text) {
  try {
    const auto root = nlohmann::json::parse(text);
    EvalResult r;
    r.map = root.at("mAP").get<double>();
    r.map50 = root.at("mAP@0.5").get<double>();
    r.map75 = root.at("mAP@0.75").get<double>();
    r.ap_per_threshold = root.at("ap_per_threshold").get<std::array<double, kNumIouThresholds>>();
    for (const auto& c : root.at("categories")) {
      CategoryEval ce;
      ce.category_id = c.at("category_id").get<std::int64_t>();
      ce.num_gt = c.at("num_gt").get<std::int64_t>();
      ce.ap = c.at("ap").get<std::array<double, kNumIouThresholds>>();
      ce.precision = c.at("precision").get<std::vector<std::array<double, kNumRecallPoints>>>();
      r.categories.push_back(std::move(ce));
    }
    return r;
  } catch (const nlohmann::json::exception& e) {
    Fail(ErrorKind::kValidation, std::string("evaluation JSON: ") + e.what());
  }
}

std::string FormatEvalTable(const EvalResult& result) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%-10s %-10s %s\n%-10.4f %-10.4f %.4f\n", "mAP", "mAP@0.5", "mAP@0.75",
                result.map, result.map50, result.map75);
  return buf;
}

}  // namespace detr
