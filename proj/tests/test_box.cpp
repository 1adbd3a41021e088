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

#include "detr/box.hpp"
#include "detr/random.hpp"
#include "test_util.hpp"

using namespace detr;

TEST_SUITE("box") {
  TEST_CASE("cxcywh to corners") {
    const BoxXyxy full = CxCyWhToXyxy(BoxCxCyWh{0.5, 0.5, 1, 1}, 100, 100);
    CHECK(full.x1 == 0);
    CHECK(full.y1 == 0);
    CHECK(full.x2 == 100);
    CHECK(full.y2 == 100);
    const BoxXyxy point = CxCyWhToXyxy(BoxCxCyWh{0.5, 0.5, 0, 0}, 100, 100);
    CHECK(point.x1 == 50);
    CHECK(point.y1 == 50);
    CHECK(point.x2 == 50);
    CHECK(point.y2 == 50);
  }

  TEST_CASE("conversions round trip") {
    Rng rng(1);
    for (int i = 0; i < 200; ++i) {
      // Inside the image, so clamping is a no-op.
      const double cx = rng.Uniform(0.05, 0.95), cy = rng.Uniform(0.05, 0.95);
      const BoxCxCyWh b{cx, cy, rng.Uniform(0, 2 * std::min(cx, 1 - cx)), rng.Uniform(0, 2 * std::min(cy, 1 - cy))};
      const double w = rng.Uniform(10, 500), h = rng.Uniform(10, 500);
      const BoxCxCyWh back = XyxyToCxCyWh(CxCyWhToXyxy(b, w, h), w, h);
      CHECK(back.cx == doctest::Approx(b.cx).epsilon(1e-12));
      CHECK(back.cy == doctest::Approx(b.cy).epsilon(1e-12));
      CHECK(back.w == doctest::Approx(b.w).epsilon(1e-12));
      CHECK(back.h == doctest::Approx(b.h).epsilon(1e-12));
      const BoxXyWh xywh{rng.Uniform(0, 50), rng.Uniform(0, 50), rng.Uniform(0, 50), rng.Uniform(0, 50)};
      const BoxXyWh again = XyxyToXyWh(XyWhToXyxy(xywh));
      CHECK(again.x == xywh.x);
      CHECK(again.w == doctest::Approx(xywh.w).epsilon(1e-12));
    }
  }

  TEST_CASE("iou examples") {
    const BoxXyxy a{0, 0, 2, 2};
    CHECK(Iou(a, a) == 1.0);
    CHECK(Iou(a, BoxXyxy{5, 5, 6, 6}) == 0.0);
    CHECK(Iou(a, BoxXyxy{1, 1, 3, 3}) == doctest::Approx(1.0 / 7.0).epsilon(1e-15));
  }

  TEST_CASE("giou examples") {
    const BoxXyxy a{0, 0, 1, 1};
    CHECK(Giou(a, a) == 1.0);
    CHECK(Giou(a, BoxXyxy{2, 0, 3, 1}) == doctest::Approx(-1.0 / 3.0).epsilon(1e-15));
  }

  TEST_CASE("giou never exceeds iou") {
    Rng rng(2);
    for (int i = 0; i < 1000; ++i) {
      auto box = [&rng] {
        const double x = rng.Uniform(0, 10), y = rng.Uniform(0, 10);
        return BoxXyxy{x, y, x + rng.Uniform(0.01, 5), y + rng.Uniform(0.01, 5)};
      };
      const BoxXyxy a = box(), b = box();
      const double g = Giou(a, b);
      CHECK(g <= Iou(a, b) + 1e-15);
      CHECK(g > -1.0);
    }
  }

  TEST_CASE("tensor giou agrees with the scalar version") {
    Rng rng(4);
    std::vector<double> av, bv;
    std::vector<BoxCxCyWh> as, bs;
    for (int i = 0; i < 50; ++i) {
      BoxCxCyWh a{rng.Uniform(0.2, 0.8), rng.Uniform(0.2, 0.8), rng.Uniform(0.05, 0.4), rng.Uniform(0.05, 0.4)};
      BoxCxCyWh b{rng.Uniform(0.2, 0.8), rng.Uniform(0.2, 0.8), rng.Uniform(0.05, 0.4), rng.Uniform(0.05, 0.4)};
      as.push_back(a);
      bs.push_back(b);
      av.insert(av.end(), {a.cx, a.cy, a.w, a.h});
      bv.insert(bv.end(), {b.cx, b.cy, b.w, b.h});
    }
    const Tensor g = GeneralizedIou(Tensor::FromData({50, 4}, av), Tensor::FromData({50, 4}, bv));
    for (int i = 0; i < 50; ++i) {
      const double expect = Giou(CxCyWhCorners(as[static_cast<std::size_t>(i)]), CxCyWhCorners(bs[static_cast<std::size_t>(i)]));
      CHECK(g.data()[static_cast<std::size_t>(i)] == doctest::Approx(expect).epsilon(1e-12));
    }
  }
}
