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

#include <doctest.h>

#include <cmath>

#include "detr/box.hpp"
#include "detr/coco.hpp"
#include "detr/coco_eval.hpp"
#include "detr/error.hpp"
#include "detr/random.hpp"

using namespace detr;

namespace {

CocoDataset Dataset(int images, int categories) {
  CocoDataset ds;
  for (int i = 1; i <= images; ++i) ds.images.push_back({i, "img" + std::to_string(i) + ".ppm", 100, 100});
  for (int c = 1; c <= categories; ++c) ds.categories.push_back({c, "c" + std::to_string(c)});
  return ds;
}

void AddGt(CocoDataset& ds, std::int64_t image, std::int64_t cat, BoxXyWh box) {
  const auto id = static_cast<std::int64_t>(ds.annotations.size()) + 1;
  ds.annotations.push_back({id, image, cat, box, box.w * box.h, 0});
}

void CheckSame(const EvalResult& a, const EvalResult& b) {
  CHECK(a.map == b.map);
  CHECK(a.map50 == b.map50);
  CHECK(a.map75 == b.map75);
  for (int t = 0; t < kNumIouThresholds; ++t) CHECK(a.ap_per_threshold[t] == b.ap_per_threshold[t]);
}

// Random scene: non-overlapping ground truth on a 4x4 cell layout and
// detections that are jittered copies, misses and clutter.
struct Scene {
  CocoDataset gt;
  std::vector<CocoDetection> dets;
};

// Annotations that no detection on the same image overlaps at IoU >= 0.5, so
// a new exact detection cannot displace an existing match at any threshold.
std::vector<const CocoAnnotation*> MissedAnnotations(const Scene& s) {
  std::vector<const CocoAnnotation*> out;
  for (const auto& a : s.gt.annotations) {
    bool covered = false;
    for (const auto& d : s.dets) {
      covered = covered || (d.image_id == a.image_id && Iou(XyWhToXyxy(d.bbox), XyWhToXyxy(a.bbox)) >= 0.5);
    }
    if (!covered) out.push_back(&a);
  }
  return out;
}

Scene RandomScene(Rng& rng) {
  Scene s;
  s.gt = Dataset(3, 2);
  for (int img = 1; img <= 3; ++img) {
    for (int cell = 0; cell < 16; ++cell) {
      if (rng.Uniform() < 0.6) continue;
      const double x = (cell % 4) * 25 + rng.Uniform(0, 5), y = (cell / 4) * 25 + rng.Uniform(0, 5);
      const BoxXyWh box{x, y, rng.Uniform(8, 18), rng.Uniform(8, 18)};
      const auto cat = rng.UniformInt(1, 2);
      AddGt(s.gt, img, cat, box);
      const int copies = static_cast<int>(rng.UniformInt(0, 2));
      for (int k = 0; k < copies; ++k) {
        const BoxXyWh jit{box.x + rng.Uniform(-3, 3), box.y + rng.Uniform(-3, 3), box.w * rng.Uniform(0.8, 1.2),
                          box.h * rng.Uniform(0.8, 1.2)};
        s.dets.push_back({img, rng.Uniform() < 0.85 ? cat : 3 - cat, jit, rng.Uniform()});
      }
    }
    for (int k = 0; k < 3; ++k) {
      s.dets.push_back({img, rng.UniformInt(1, 2), BoxXyWh{rng.Uniform(0, 80), rng.Uniform(0, 80), 10, 10}, rng.Uniform()});
    }
  }
  return s;
}

}  // namespace

TEST_SUITE("eval") {
  TEST_CASE("perfect prediction scores 1") {
    CocoDataset gt = Dataset(1, 1);
    AddGt(gt, 1, 1, {10, 10, 20, 30});
    const EvalResult r = EvaluateDetections(gt, {{1, 1, {10, 10, 20, 30}, 0.9}});
    CHECK(r.map == 1.0);
    CHECK(r.map50 == 1.0);
    CHECK(r.map75 == 1.0);
  }

  TEST_CASE("single detection at IoU 0.6") {
    CocoDataset gt = Dataset(1, 1);
    AddGt(gt, 1, 1, {0, 0, 10, 10});
    const EvalResult r = EvaluateDetections(gt, {{1, 1, {0, 0, 6, 10}, 0.5}});
    CHECK(r.ap_per_threshold[0] == 1.0);
    CHECK(r.ap_per_threshold[1] == 1.0);
    CHECK(r.ap_per_threshold[2] == 1.0);
    CHECK(r.ap_per_threshold[3] == 0.0);
    CHECK(r.map == doctest::Approx(0.3).epsilon(1e-15));
    CHECK(r.map50 == 1.0);
    CHECK(r.map75 == 0.0);
  }

  TEST_CASE("no predictions score 0") {
    CocoDataset gt = Dataset(2, 1);
    AddGt(gt, 1, 1, {0, 0, 10, 10});
    const EvalResult r = EvaluateDetections(gt, {});
    CHECK(r.map == 0.0);
    CHECK(r.map50 == 0.0);
    CHECK(r.map75 == 0.0);
  }

  TEST_CASE("duplicates count once") {
    CocoDataset gt = Dataset(1, 1);
    AddGt(gt, 1, 1, {0, 0, 10, 10});
    AddGt(gt, 1, 1, {50, 50, 10, 10});
    const std::vector<CocoDetection> dets{
        {1, 1, {0, 0, 10, 10}, 0.9}, {1, 1, {0, 0, 10, 10}, 0.8}, {1, 1, {50, 50, 10, 10}, 0.7}};
    const EvalResult r = EvaluateDetections(gt, dets);
    // TP, FP, TP: precision 1 up to recall 0.5, then 2/3.
    const double expect = (51.0 + 50.0 * 2.0 / 3.0) / 101.0;
    for (int t = 0; t < kNumIouThresholds; ++t) CHECK(r.ap_per_threshold[t] == doctest::Approx(expect).epsilon(1e-14));
    // A lone duplicate pair on one GT is a TP followed by an FP.
    CocoDataset one = Dataset(1, 1);
    AddGt(one, 1, 1, {0, 0, 10, 10});
    const EvalResult dup = EvaluateDetections(one, {{1, 1, {0, 0, 10, 10}, 0.9}, {1, 1, {0, 0, 10, 10}, 0.8}});
    CHECK(dup.map == 1.0);
    const EvalResult dup_first = EvaluateDetections(one, {{1, 1, {30, 30, 10, 10}, 0.95}, {1, 1, {0, 0, 10, 10}, 0.8}});
    CHECK(dup_first.map == doctest::Approx(0.5).epsilon(1e-14));
  }

  TEST_CASE("a correct top-scoring detection of a missed object never lowers AP") {
    Rng rng(21);
    int tested = 0;
    for (int trial = 0; trial < 60; ++trial) {
      Scene s = RandomScene(rng);
      const auto missed = MissedAnnotations(s);
      if (missed.empty()) continue;
      ++tested;
      const EvalResult before = EvaluateDetections(s.gt, s.dets);
      const auto& a = *missed[static_cast<std::size_t>(rng.UniformInt(0, static_cast<std::int64_t>(missed.size()) - 1))];
      auto dets = s.dets;
      dets.push_back({a.image_id, a.category_id, a.bbox, 2.0});
      const EvalResult after = EvaluateDetections(s.gt, dets);
      for (int t = 0; t < kNumIouThresholds; ++t) CHECK(after.ap_per_threshold[t] >= before.ap_per_threshold[t] - 1e-15);
      CHECK(after.map >= before.map - 1e-15);
    }
    CHECK(tested >= 40);
  }

  TEST_CASE("a correct detection of an already matched object can lower AP") {
    // The new detection takes the match and the old one becomes a duplicate.
    CocoDataset gt = Dataset(1, 1);
    AddGt(gt, 1, 1, {0, 0, 10, 10});
    AddGt(gt, 1, 1, {50, 50, 10, 10});
    std::vector<CocoDetection> dets{{1, 1, {0, 0, 10, 10}, 0.9}, {1, 1, {50, 50, 10, 10}, 0.8}};
    CHECK(EvaluateDetections(gt, dets).map == 1.0);
    dets.push_back({1, 1, {0, 0, 10, 10}, 2.0});
    CHECK(EvaluateDetections(gt, dets).map == doctest::Approx((51.0 + 50.0 * 2.0 / 3.0) / 101.0).epsilon(1e-14));
  }

  TEST_CASE("monotone score rescaling leaves every metric unchanged") {
    Rng rng(22);
    for (int trial = 0; trial < 30; ++trial) {
      const Scene s = RandomScene(rng);
      auto scaled = s.dets;
      for (auto& d : scaled) d.score = std::exp(3.0 * d.score) + 7.0;
      CheckSame(EvaluateDetections(s.gt, s.dets), EvaluateDetections(s.gt, scaled));
    }
  }

  TEST_CASE("categories without ground truth are excluded") {
    CocoDataset gt = Dataset(1, 2);
    AddGt(gt, 1, 1, {0, 0, 10, 10});
    const EvalResult r = EvaluateDetections(gt, {{1, 1, {0, 0, 10, 10}, 0.9}, {1, 2, {40, 40, 10, 10}, 0.9}});
    CHECK(r.categories.size() == 1);
    CHECK(r.map == 1.0);
  }

  TEST_CASE("invalid detections are rejected") {
    CocoDataset gt = Dataset(1, 1);
    AddGt(gt, 1, 1, {0, 0, 10, 10});
    CHECK_THROWS_AS(EvaluateDetections(gt, {{1, 9, {0, 0, 10, 10}, 0.9}}), Error);
    CHECK_THROWS_AS(EvaluateDetections(gt, {{7, 1, {0, 0, 10, 10}, 0.9}}), Error);
    CHECK_THROWS_AS(EvaluateDetections(gt, {{1, 1, {0, 0, 10, 10}, std::nan("")}}), Error);
    CHECK_THROWS_AS(EvaluateDetections(gt, {{1, 1, {0, 0, -1, 10}, 0.5}}), Error);
    // Clamped predictions can collapse to zero width; they are legal misses.
    CHECK(EvaluateDetections(gt, {{1, 1, {0, 0, 0, 10}, 0.5}}).map == 0.0);
  }

  TEST_CASE("result JSON round trip and table columns") {
    Rng rng(23);
    const Scene s = RandomScene(rng);
    const EvalResult r = EvaluateDetections(s.gt, s.dets);
    const EvalResult back = EvalResult::FromJson(r.ToJson());
    CheckSame(r, back);
    const std::string table = FormatEvalTable(r);
    const auto header = table.substr(0, table.find('\n'));
    CHECK(header.find("mAP@0.5") != std::string::npos);
    CHECK(header.find("mAP@0.75") != std::string::npos);
    CHECK(header.rfind("mAP", 0) != std::string::npos);
  }

  TEST_CASE("threshold and recall grids") {
    CHECK(IouThreshold(0) == 0.5);
    CHECK(IouThreshold(9) == 0.95);
    CHECK(RecallPoint(100) == 1.0);
  }
}
