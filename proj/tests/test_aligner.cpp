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

#include "detr/deform_attn.hpp"
#include "detr/layers.hpp"
#include "detr/params.hpp"
#include "detr/sam.hpp"
#include "detr/selfcheck.hpp"
#include "test_util.hpp"

using namespace detr;
using detr::test::RandomTensor;

namespace {

void Fill(const Tensor& t, double v) {
  for (auto& x : t.mutable_data()) x = v;
}

LinearLayer ZeroLinear(ParamStore& store, const std::string& name, std::int64_t in, std::int64_t out) {
  Rng rng(0);
  return LinearLayer::Create(store, name, in, out, ParamGroup::kDetector, rng, Init::kZero);
}

}  // namespace

TEST_SUITE("aligner") {
  TEST_CASE("zero projections give centred reference boxes and points") {
    ParamStore store;
    Rng rng(1);
    const auto box_proj = ZeroLinear(store, "box", 16, 4);
    const auto point_proj = ZeroLinear(store, "point", 4, 2);
    const Tensor boxes = ProjectRefBoxes(RandomTensor(rng, {5, 16}, -3, 3), box_proj);
    CHECK(boxes.shape() == Shape{5, 4});
    for (double v : boxes.data()) CHECK(v == 0.5);
    const Tensor points = ProjectRefPoints(boxes, point_proj);
    CHECK(points.shape() == Shape{5, 2});
    for (double v : points.data()) CHECK(v == 0.5);
  }

  TEST_CASE("reference points are a learned function of the box, not its centre") {
    ParamStore store;
    Rng rng(2);
    const auto point_proj = LinearLayer::Create(store, "point", 4, 2, ParamGroup::kDetector, rng);
    const Tensor boxes = RandomTensor(rng, {6, 4}, 0.1, 0.9);
    const Tensor points = ProjectRefPoints(boxes, point_proj);
    double diff = 0.0;
    for (int n = 0; n < 6; ++n) diff += std::abs(points.at({n, 0}) - boxes.at({n, 0}));
    CHECK(diff > 1e-3);
    for (double v : points.data()) {
      CHECK(v > 0.0);
      CHECK(v < 1.0);
    }
  }

  TEST_CASE("roi align on a constant map") {
    Rng rng(3);
    const Tensor map = Tensor::Full({8, 8, 3}, 1.25);
    const Tensor boxes = Tensor::FromData({2, 4}, {0.5, 0.5, 0.4, 0.3, 0.4, 0.6, 0.2, 0.5});
    const Tensor out = RoiAlign(map, boxes, 4);
    CHECK(out.shape() == Shape{2, 4, 4, 3});
    for (double v : out.data()) CHECK(v == doctest::Approx(1.25).epsilon(1e-14));
  }

  TEST_CASE("roi align of a point box repeats the centre sample") {
    Rng rng(4);
    const Tensor map = RandomTensor(rng, {6, 9, 2});
    const Tensor boxes = Tensor::FromData({1, 4}, {0.37, 0.61, 0.0, 0.0});
    const Tensor out = RoiAlign(map, boxes, 3);
    const auto center = BilinearSample(map, 0.37 * 9 - 0.5, 0.61 * 6 - 0.5);
    for (int gy = 0; gy < 3; ++gy) {
      for (int gx = 0; gx < 3; ++gx) {
        for (int c = 0; c < 2; ++c) CHECK(out.at({0, gy, gx, c}) == center[static_cast<std::size_t>(c)]);
      }
    }
  }

  TEST_CASE("roi align matches the loop oracle on 100 configurations") { CHECK(RoiAlignOracleMaxError(5, 100) < 1e-10); }

  TEST_CASE("zero predictor puts every salient point at the box centre") {
    ParamStore store;
    Rng rng(5);
    const std::int64_t d = 4, grid = 2, m = 3;
    Mlp predictor = Mlp::Create(store, "sal", {grid * grid * d, 8, 2 * m}, ParamGroup::kDetector, rng);
    Fill(predictor.layers.back().weight, 0.0);
    const Tensor map = RandomTensor(rng, {5, 5, d});
    const Tensor boxes = Tensor::FromData({2, 4}, {0.3, 0.6, 0.2, 0.4, 0.7, 0.45, 0.5, 0.3});
    const SalientSamples s = ResampleSalient(RoiAlign(map, boxes, grid), boxes, map, predictor, m);
    CHECK(s.points.shape() == Shape{2, m, 2});
    CHECK(s.content.shape() == Shape{2, m, d});
    for (int n = 0; n < 2; ++n) {
      const auto center = BilinearSample(map, boxes.at({n, 0}) * 5 - 0.5, boxes.at({n, 1}) * 5 - 0.5);
      for (int k = 0; k < m; ++k) {
        CHECK(s.points.at({n, k, 0}) == doctest::Approx(boxes.at({n, 0})).epsilon(1e-15));
        CHECK(s.points.at({n, k, 1}) == doctest::Approx(boxes.at({n, 1})).epsilon(1e-15));
        for (int c = 0; c < d; ++c) CHECK(s.content.at({n, k, c}) == doctest::Approx(center[static_cast<std::size_t>(c)]));
      }
    }
  }

  TEST_CASE("salient points stay inside their reference boxes") {
    ParamStore store;
    Rng rng(6);
    const std::int64_t d = 4, grid = 3, m = 4;
    Mlp predictor = Mlp::Create(store, "sal", {grid * grid * d, 8, 2 * m}, ParamGroup::kDetector, rng);
    for (auto& w : predictor.layers.back().weight.mutable_data()) w *= 50.0;
    const Tensor map = RandomTensor(rng, {8, 8, d}, -3, 3);
    const Tensor boxes = RandomTensor(rng, {10, 4}, 0.1, 0.6);
    const SalientSamples s = ResampleSalient(RoiAlign(map, boxes, grid), boxes, map, predictor, m);
    for (int n = 0; n < 10; ++n) {
      for (int k = 0; k < m; ++k) {
        for (int a = 0; a < 2; ++a) {
          const double c = boxes.at({n, a}), half = boxes.at({n, a + 2}) / 2;
          CHECK(s.points.at({n, k, a}) >= c - half);
          CHECK(s.points.at({n, k, a}) <= c + half);
        }
      }
    }
  }

  TEST_CASE("zero gates blend half and half") {
    ParamStore store;
    Rng rng(7);
    const std::int64_t n = 3, m = 2, d = 4;
    const auto cg = ZeroLinear(store, "cg", d, m * d);
    const auto pg = ZeroLinear(store, "pg", d, m * d);
    const Tensor old_c = RandomTensor(rng, {n, d}), old_p = RandomTensor(rng, {n, d});
    const Tensor new_c = RandomTensor(rng, {n, m, d}), new_p = RandomTensor(rng, {n, m, d});
    const ReweightedQueries q = Reweight(old_c, old_p, new_c, new_p, cg, pg);
    for (int i = 0; i < n; ++i) {
      for (int k = 0; k < m; ++k) {
        for (int c = 0; c < d; ++c) {
          CHECK(q.content.at({i, k, c}) == doctest::Approx(0.5 * new_c.at({i, k, c}) + 0.5 * old_c.at({i, c})).epsilon(1e-15));
          CHECK(q.pos.at({i, k, c}) == doctest::Approx(0.5 * new_p.at({i, k, c}) + 0.5 * old_p.at({i, c})).epsilon(1e-15));
        }
      }
    }
  }

  TEST_CASE("saturated gates pass the new queries through") {
    ParamStore store;
    Rng rng(8);
    const std::int64_t n = 2, m = 3, d = 4;
    const auto cg = ZeroLinear(store, "cg", d, m * d);
    const auto pg = ZeroLinear(store, "pg", d, m * d);
    Fill(cg.bias, 1000.0);
    Fill(pg.bias, 1000.0);
    const Tensor new_c = RandomTensor(rng, {n, m, d}), new_p = RandomTensor(rng, {n, m, d});
    const ReweightedQueries q = Reweight(RandomTensor(rng, {n, d}), RandomTensor(rng, {n, d}), new_c, new_p, cg, pg);
    CHECK(test::MaxAbsDiff(q.content.data(), new_c.data()) == 0.0);
    CHECK(test::MaxAbsDiff(q.pos.data(), new_p.data()) == 0.0);
  }

  TEST_CASE("cross-attention reshape is [N, M*d] with m-major columns") {
    Rng rng(9);
    const Tensor q = RandomTensor(rng, {2, 8, 256});
    const Tensor flat = ReshapeForCrossAttn(q);
    CHECK(flat.shape() == Shape{2, 2048});
    for (int n = 0; n < 2; ++n) {
      for (int m : {0, 3, 7}) {
        for (int c : {0, 100, 255}) CHECK(flat.at({n, m * 256 + c}) == q.at({n, m, c}));
      }
    }
    CHECK(UnflattenHeads(flat, 8).shape() == Shape{2, 8, 256});
    CHECK(test::MaxAbsDiff(UnflattenHeads(flat, 8).data(), q.data()) == 0.0);
  }

  TEST_CASE("aligner forward shapes") {
    ParamStore store;
    Rng rng(10);
    SemanticAligner sam(store, "sam", SemanticAlignerConfig{8, 2, 3, 16, true}, ParamGroup::kDetector, rng);
    const Tensor map = RandomTensor(rng, {4, 4, 8});
    const AlignedQueries a = sam.Forward(RandomTensor(rng, {5, 8}), RandomTensor(rng, {5, 8}), map, 2);
    CHECK(a.level == 2);
    CHECK(a.ref_boxes.shape() == Shape{5, 4});
    CHECK(a.ref_points.shape() == Shape{5, 2});
    CHECK(a.salient_points.shape() == Shape{5, 2, 2});
    CHECK(a.content.shape() == Shape{5, 16});
    CHECK(a.pos.shape() == Shape{5, 16});
    CHECK(a.content_gate.shape() == Shape{5, 2, 8});
  }

  TEST_CASE("disabled aligner uses the centre sample with a half blend") {
    ParamStore store;
    Rng rng(11);
    const std::int64_t d = 8, m = 2, n = 3;
    SemanticAligner sam(store, "sam", SemanticAlignerConfig{d, m, 3, 16, false}, ParamGroup::kDetector, rng);
    CHECK_FALSE(store.Contains("sam.salient.0.weight"));
    CHECK_FALSE(store.Contains("sam.content_gate.weight"));
    const Tensor map = RandomTensor(rng, {4, 4, d});
    const Tensor content = RandomTensor(rng, {n, d});
    const AlignedQueries a = sam.Forward(content, RandomTensor(rng, {n, d}), map, 0);
    for (int i = 0; i < n; ++i) {
      const auto s = BilinearSample(map, a.ref_boxes.at({i, 0}) * 4 - 0.5, a.ref_boxes.at({i, 1}) * 4 - 0.5);
      for (int k = 0; k < m; ++k) {
        for (int c = 0; c < d; ++c) {
          CHECK(a.content.at({i, k * d + c}) ==
                doctest::Approx(0.5 * (s[static_cast<std::size_t>(c)] + content.at({i, c}))).epsilon(1e-14));
        }
      }
    }
  }
}
