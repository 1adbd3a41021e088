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
#include "detr/error.hpp"
#include "detr/params.hpp"
#include "detr/reference.hpp"
#include "detr/selfcheck.hpp"
#include "test_util.hpp"

using namespace detr;
using detr::test::RandomTensor;

namespace {

void Fill(const Tensor& t, double v) {
  for (auto& x : t.mutable_data()) x = v;
}

void SetIdentity(const Tensor& weight) {
  Fill(weight, 0.0);
  const auto n = std::min(weight.dim(0), weight.dim(1));
  auto w = weight.mutable_data();
  for (std::int64_t i = 0; i < n; ++i) w[static_cast<std::size_t>(i * weight.dim(1) + i)] = 1.0;
}

}  // namespace

TEST_SUITE("deform") {
  TEST_CASE("bilinear examples") {
    const Tensor map = Tensor::FromData({2, 2, 1}, {1, 2, 3, 4});
    CHECK(BilinearSample(map, 0.5, 0.5)[0] == 2.5);
    CHECK(BilinearSample(map, 1.0, 0.0)[0] == 2.0);
    CHECK(BilinearSample(map, -1.0, -1.0)[0] == 0.0);
    // Half a pixel outside: two of four neighbours are padding.
    CHECK(BilinearSample(map, -0.5, 0.0)[0] == 0.5);
  }

  TEST_CASE("bilinear matches the loop oracle") { CHECK(BilinearOracleMaxError(1, 100) < 1e-12); }

  TEST_CASE("fault hook breaks the bilinear oracle") {
    testing::SetBilinearFault(true);
    const double err = BilinearOracleMaxError(1, 20);
    testing::SetBilinearFault(false);
    CHECK(err > 1e-3);
    CHECK_FALSE(testing::BilinearFault());
  }

  TEST_CASE("degenerate configuration reduces to one bilinear sample") {
    Rng rng(9);
    const std::int64_t d = 3;
    ParamStore store;
    MsDeformAttn attn(store, "a", MsDeformAttnConfig{d, d, 1, d, d, 1, 1}, ParamGroup::kDetector, rng);
    Fill(attn.offset_proj().weight, 0.0);
    Fill(attn.offset_proj().bias, 0.0);
    SetIdentity(attn.value_proj().weight);
    SetIdentity(attn.out_proj().weight);
    const Tensor map = RandomTensor(rng, {5, 7, d});
    const FeaturePyramid pyr = FeaturePyramid::FromLevels({map});
    const Tensor query = RandomTensor(rng, {4, d});
    const Tensor ref = RandomTensor(rng, {4, 2}, 0.0, 1.0);
    const Tensor out = attn.Forward(query, ref, pyr);
    for (int n = 0; n < 4; ++n) {
      const double x = ref.at({n, 0}) * 7 - 0.5, y = ref.at({n, 1}) * 5 - 0.5;
      const auto expect = BilinearSample(map, x, y);
      for (int c = 0; c < d; ++c) CHECK(out.at({n, c}) == doctest::Approx(expect[static_cast<std::size_t>(c)]).epsilon(1e-14));
    }
  }

  TEST_CASE("constant field gives OutProj(ValueProj(c))") {
    Rng rng(10);
    const std::int64_t d = 8, heads = 2;
    ParamStore store;
    MsDeformAttn attn(store, "a", MsDeformAttnConfig{d, d, heads, d / heads, d, 2, 3}, ParamGroup::kDetector, rng);
    // Random offsets within 1.5 px and random attention logits; the ring bias
    // is cleared so every sample stays inside the maps.
    for (auto& w : attn.offset_proj().weight.mutable_data()) w = rng.Uniform(-0.15, 0.15);
    Fill(attn.offset_proj().bias, 0.0);
    for (auto& w : attn.attn_proj().weight.mutable_data()) w = rng.Uniform(-1, 1);
    const double c = 0.7;
    const FeaturePyramid pyr =
        FeaturePyramid::FromLevels({Tensor::Full({16, 16, d}, c), Tensor::Full({8, 8, d}, c)});
    const Tensor query = RandomTensor(rng, {6, d});
    const Tensor ref = RandomTensor(rng, {6, 2}, 0.35, 0.65);
    const Tensor out = attn.Forward(query, ref, pyr);
    const Tensor expect = attn.out_proj()(attn.value_proj()(Tensor::Full({1, d}, c)));
    for (int n = 0; n < 6; ++n) {
      for (int j = 0; j < d; ++j) CHECK(out.at({n, j}) == doctest::Approx(expect.at({0, j})).epsilon(1e-12));
    }
  }

  TEST_CASE("attention weights sum to one per head and the sample count is N*M*L*K") {
    Rng rng(12);
    const std::int64_t d = 8, heads = 4, levels = 3, points = 2, n = 5;
    ParamStore store;
    MsDeformAttn attn(store, "a", MsDeformAttnConfig{d, d, heads, 2, d, levels, points}, ParamGroup::kDetector, rng);
    for (auto& w : attn.attn_proj().weight.mutable_data()) w = rng.Uniform(-2, 2);
    const FeaturePyramid pyr = FeaturePyramid::FromLevels(
        {RandomTensor(rng, {8, 8, d}), RandomTensor(rng, {4, 4, d}), RandomTensor(rng, {2, 2, d})});
    MsDeformAttn::Trace trace;
    ResetDeformSampleCount();
    const Tensor out = attn.Forward(RandomTensor(rng, {n, d}), RandomTensor(rng, {n, 2}, 0, 1), pyr, &trace);
    CHECK(DeformSampleCount() == n * heads * levels * points);
    CHECK(out.shape() == Shape{n, d});
    CHECK(trace.offsets.shape() == Shape{n, heads, levels, points, 2});
    const auto w = trace.weights.data();
    for (std::int64_t q = 0; q < n * heads; ++q) {
      double sum = 0.0;
      for (std::int64_t i = 0; i < levels * points; ++i) sum += w[static_cast<std::size_t>(q * levels * points + i)];
      CHECK(sum == doctest::Approx(1.0).epsilon(1e-14));
    }
  }

  TEST_CASE("initial offsets form a ring") {
    Rng rng(1);
    ParamStore store;
    MsDeformAttn attn(store, "a", MsDeformAttnConfig{4, 4, 4, 1, 4, 1, 2}, ParamGroup::kDetector, rng);
    const auto b = attn.offset_proj().bias.data();
    // Head 0 points along +x, head 1 along +y; point k sits k+1 px out.
    CHECK(b[0] == doctest::Approx(1.0));
    CHECK(b[1] == doctest::Approx(0.0));
    CHECK(b[2] == doctest::Approx(2.0));
    CHECK(b[4] == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(b[5] == doctest::Approx(1.0));
  }

  TEST_CASE("kernel matches the loop oracle on 100 configurations") { CHECK(DeformOracleMaxError(2, 100) < 1e-10); }

  TEST_CASE("core validates shapes") {
    const Tensor value = Tensor::Zeros({20, 4});
    const std::vector<LevelShape> shapes{{4, 4}};
    const std::vector<std::int64_t> starts{0};
    const Tensor ref = Tensor::Zeros({2, 2});
    const Tensor off = Tensor::Zeros({2, 2, 1, 1, 2});
    const Tensor w = Tensor::Zeros({2, 2, 1, 1});
    CHECK_THROWS_AS(MsDeformAttnCore(value, shapes, starts, ref, off, w), Error);
  }

  TEST_CASE("pyramid flattening and locations") {
    Rng rng(3);
    const Tensor a = RandomTensor(rng, {2, 3, 4});
    const Tensor b = RandomTensor(rng, {1, 2, 4});
    const FeaturePyramid pyr = FeaturePyramid::FromLevels({a, b});
    CHECK(pyr.length() == 8);
    CHECK(pyr.starts == std::vector<std::int64_t>{0, 6});
    CHECK(test::MaxAbsDiff(pyr.Level(1).data(), b.data()) == 0.0);
    const Tensor loc = pyr.NormalizedLocations();
    CHECK(loc.at({0, 0}) == doctest::Approx(1.0 / 6.0));
    CHECK(loc.at({0, 1}) == doctest::Approx(0.25));
    CHECK(loc.at({7, 0}) == doctest::Approx(0.75));
    CHECK(loc.at({7, 1}) == doctest::Approx(0.5));
  }
}
