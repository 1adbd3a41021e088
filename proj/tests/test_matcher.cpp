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

#include <algorithm>
#include <cmath>

#include "detr/error.hpp"
#include "detr/matcher.hpp"
#include "detr/model.hpp"
#include "detr/reference.hpp"
#include "detr/selfcheck.hpp"
#include "test_util.hpp"

using namespace detr;
using detr::test::RandomTensor;

namespace {

LayerPrediction FromLogits(const Tensor& logits, const Tensor& boxes) {
  LayerPrediction p;
  p.logits = logits;
  p.probs = Softmax(logits, -1);
  p.boxes = boxes;
  return p;
}

}  // namespace

TEST_SUITE("matcher") {
  TEST_CASE("hungarian examples") {
    const CostMatrix a{2, 2, {1, 2, 2, 1}};
    const Assignment ma = HungarianMatch(a);
    CHECK(ma == Assignment{{0, 0}, {1, 1}});
    CHECK(AssignmentCost(a, ma) == 2.0);
    const CostMatrix b{2, 2, {2, 1, 1, 2}};
    const Assignment mb = HungarianMatch(b);
    CHECK(mb == Assignment{{0, 1}, {1, 0}});
    CHECK(AssignmentCost(b, mb) == 2.0);
  }

  TEST_CASE("hungarian handles rectangular and empty matrices") {
    CHECK(HungarianMatch(CostMatrix{0, 0, {}}).empty());
    CHECK(HungarianMatch(CostMatrix{3, 0, {}}).empty());
    const CostMatrix wide{1, 3, {5, 1, 3}};
    CHECK(HungarianMatch(wide) == Assignment{{0, 1}});
    const CostMatrix tall{3, 1, {5, 1, 3}};
    CHECK(HungarianMatch(tall) == Assignment{{1, 0}});
  }

  TEST_CASE("hungarian rejects non-finite costs") {
    CHECK_THROWS_AS(HungarianMatch(CostMatrix{1, 2, {1.0, std::nan("")}}), Error);
  }

  TEST_CASE("hungarian matches exhaustive search for n <= 6") {
    CHECK(HungarianMismatches(7, 100, 6) == 0);
    Rng rng(8);
    for (int t = 0; t < 50; ++t) {
      const auto r = rng.UniformInt(1, 6), c = rng.UniformInt(1, 6);
      CostMatrix m{r, c, {}};
      for (std::int64_t i = 0; i < r * c; ++i) m.values.push_back(static_cast<double>(rng.UniformInt(0, 3)));
      const Assignment a = HungarianMatch(m);
      CHECK(static_cast<std::int64_t>(a.size()) == std::min(r, c));
      CHECK(AssignmentCost(m, a) == doctest::Approx(reference::BruteForceAssignmentCost(m)).epsilon(1e-12));
    }
  }

  TEST_CASE("match cost spot values") {
    const LossWeights w;
    Targets t;
    t.boxes = {{0.5, 0.5, 0.2, 0.2}};
    t.labels = {1};
    const std::vector<double> probs{0.0, 1.0, 0.0, 0.3, 0.3, 0.4};
    const std::vector<double> boxes{0.5, 0.5, 0.2, 0.2, 0.6, 0.5, 0.2, 0.2};
    const CostMatrix c = MatchCost(probs, boxes, 2, 3, t, w);
    CHECK(c.at(0, 0) == doctest::Approx(-w.cls - w.giou).epsilon(1e-15));
    const double giou = Giou(BoxXyxy{0.5, 0.4, 0.7, 0.6}, BoxXyxy{0.4, 0.4, 0.6, 0.6});
    CHECK(c.at(1, 0) == doctest::Approx(-0.3 + w.l1 * 0.1 - w.giou * giou).epsilon(1e-12));
  }

  TEST_CASE("identical candidates have identical cost rows") {
    Targets t;
    t.boxes = {{0.3, 0.3, 0.1, 0.2}, {0.7, 0.6, 0.3, 0.2}};
    t.labels = {0, 1};
    const std::vector<double> probs{0.2, 0.5, 0.3, 0.2, 0.5, 0.3};
    const std::vector<double> boxes{0.4, 0.4, 0.2, 0.2, 0.4, 0.4, 0.2, 0.2};
    const CostMatrix c = MatchCost(probs, boxes, 2, 3, t, LossWeights{});
    CHECK(c.at(0, 0) == c.at(1, 0));
    CHECK(c.at(0, 1) == c.at(1, 1));
  }

  TEST_CASE("perfect prediction has zero loss") {
    Targets t;
    t.boxes = {{0.3, 0.4, 0.2, 0.1}};
    t.labels = {0};
    const Tensor logits = Tensor::FromData({3, 3}, {1000, 0, 0, 0, 0, 1000, 0, 0, 1000}, true);
    const Tensor boxes = Tensor::FromData({3, 4}, {0.3, 0.4, 0.2, 0.1, 0.5, 0.5, 0.1, 0.1, 0.2, 0.8, 0.3, 0.1}, true);
    const LossBreakdown loss = SetLoss({{FromLogits(logits, boxes)}}, {t}, LossWeights{});
    CHECK(loss.total.item() == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(loss.l1 == 0.0);
    Tape::Active().Clear();
  }

  TEST_CASE("empty ground truth is pure no-object loss") {
    const std::int64_t n = 4, classes = 3;
    const Tensor logits = Tensor::Zeros({n, classes + 1}, true);
    const Tensor boxes = Tensor::Full({n, 4}, 0.5, true);
    const LossWeights w;
    const LossBreakdown loss = SetLoss({{FromLogits(logits, boxes)}}, {Targets{}}, w);
    CHECK(loss.total.item() == doctest::Approx(n * w.no_object * std::log(classes + 1.0)).epsilon(1e-14));
    CHECK(loss.l1 == 0.0);
    CHECK(loss.giou == 0.0);
    Tape::Active().Clear();
  }

  TEST_CASE("loss is invariant to query and target order") {
    Rng rng(12);
    const std::int64_t n = 5;
    const Tensor logits = RandomTensor(rng, {n, 3}, -2, 2);
    Tensor raw = RandomTensor(rng, {n, 4}, -1, 1);
    const Tensor boxes = Sigmoid(raw);
    Targets t;
    t.boxes = {{0.3, 0.3, 0.2, 0.2}, {0.6, 0.7, 0.3, 0.1}, {0.5, 0.5, 0.4, 0.4}};
    t.labels = {0, 1, 1};
    NoGradGuard ng;
    const double base = SetLoss({{FromLogits(logits, boxes)}}, {t}, LossWeights{}).total.item();
    const std::vector<std::int64_t> perm{3, 1, 4, 0, 2};
    const double moved =
        SetLoss({{FromLogits(IndexRows(logits, perm), IndexRows(boxes, perm))}}, {t}, LossWeights{}).total.item();
    CHECK(moved == doctest::Approx(base).epsilon(1e-13));
    Targets swapped;
    swapped.boxes = {t.boxes[2], t.boxes[0], t.boxes[1]};
    swapped.labels = {t.labels[2], t.labels[0], t.labels[1]};
    const double reordered = SetLoss({{FromLogits(logits, boxes)}}, {swapped}, LossWeights{}).total.item();
    CHECK(reordered == doctest::Approx(base).epsilon(1e-13));
  }

  TEST_CASE("loss sums layers and averages images") {
    Rng rng(13);
    const Tensor l1 = RandomTensor(rng, {3, 3}), b1 = Sigmoid(RandomTensor(rng, {3, 4}));
    const Tensor l2 = RandomTensor(rng, {3, 3}), b2 = Sigmoid(RandomTensor(rng, {3, 4}));
    Targets t;
    t.boxes = {{0.4, 0.4, 0.2, 0.3}};
    t.labels = {1};
    NoGradGuard ng;
    const double a = SetLoss({{FromLogits(l1, b1)}}, {t}, LossWeights{}).total.item();
    const double b = SetLoss({{FromLogits(l2, b2)}}, {t}, LossWeights{}).total.item();
    const double both = SetLoss({{FromLogits(l1, b1), FromLogits(l2, b2)}}, {t}, LossWeights{}).total.item();
    CHECK(both == doctest::Approx(a + b).epsilon(1e-13));
    const double avg = SetLoss({{FromLogits(l1, b1)}, {FromLogits(l2, b2)}}, {t, t}, LossWeights{}).total.item();
    CHECK(avg == doctest::Approx((a + b) / 2).epsilon(1e-13));
  }

  TEST_CASE("loss gradient matches finite differences") {
    const auto e = RunGradCheck("set_loss", 5, 3);
    CHECK(e.worst_rel_error < 1e-4);
  }
}
