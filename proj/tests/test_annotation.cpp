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
#include <filesystem>
#include <fstream>

#include "detr/annotate.hpp"
#include "detr/coco.hpp"
#include "detr/error.hpp"
#include "detr/imageio.hpp"
#include "detr/reference.hpp"
#include "detr/selfcheck.hpp"
#include "detr/synth.hpp"
#include "test_util.hpp"

using namespace detr;
namespace fs = std::filesystem;

namespace {

bool SameBox(const BoxXyWh& a, const BoxXyWh& b) { return a.x == b.x && a.y == b.y && a.w == b.w && a.h == b.h; }

bool BoxLess(const BoxXyWh& a, const BoxXyWh& b) {
  return std::tie(a.x, a.y, a.w, a.h) < std::tie(b.x, b.y, b.w, b.h);
}

MaskImage RectMask(std::int64_t w, std::int64_t h, std::int64_t x0, std::int64_t y0, std::int64_t x1, std::int64_t y1) {
  MaskImage m{w, h, std::vector<std::uint8_t>(static_cast<std::size_t>(w * h), 0)};
  for (std::int64_t y = y0; y <= y1; ++y) {
    for (std::int64_t x = x0; x <= x1; ++x) m.pixels[static_cast<std::size_t>(y * w + x)] = 255;
  }
  return m;
}

// Random blobs: a few filled discs and speckles.
MaskImage RandomMask(Rng& rng) {
  const std::int64_t w = rng.UniformInt(8, 40), h = rng.UniformInt(8, 40);
  MaskImage m{w, h, std::vector<std::uint8_t>(static_cast<std::size_t>(w * h), 0)};
  const auto blobs = rng.UniformInt(0, 4);
  for (std::int64_t b = 0; b < blobs; ++b) {
    const double cx = rng.Uniform(0, static_cast<double>(w)), cy = rng.Uniform(0, static_cast<double>(h));
    const double r = rng.Uniform(1, 6);
    for (std::int64_t y = 0; y < h; ++y) {
      for (std::int64_t x = 0; x < w; ++x) {
        if ((x - cx) * (x - cx) + (y - cy) * (y - cy) <= r * r) m.pixels[static_cast<std::size_t>(y * w + x)] = 1;
      }
    }
  }
  for (int s = 0; s < 5; ++s) {
    if (rng.Uniform() < 0.5) m.pixels[static_cast<std::size_t>(rng.UniformInt(0, w * h - 1))] = 200;
  }
  return m;
}

CocoDataset TwoImageDataset() {
  CocoDataset ds;
  ds.images = {{1, "a.pgm", 40, 30}, {2, "b.pgm", 50, 60}};
  ds.categories = {{1, "glottis"}};
  ds.annotations = {{1, 1, 1, {2.5, 3, 10, 12}, 120, 0}, {2, 2, 1, {0, 0, 50, 60}, 3000, 0}};
  return ds;
}

void WritePts(const fs::path& path, const std::vector<Point2>& pts) {
  std::ofstream out(path);
  out << "version: 1\nn_points: " << pts.size() << "\n{\n";
  for (const auto& p : pts) out << p.x << " " << p.y << "\n";
  out << "}\n";
}

void WriteGray(const fs::path& path, const MaskImage& m) {
  WritePgm(path.string(), GrayImage{m.width, m.height, m.pixels});
}

}  // namespace

TEST_SUITE("annotation") {
  TEST_CASE("keypoint expansion") {
    const auto box = KeypointToBbox({120, 90}, 20, 14, 384, 286);
    REQUIRE(box.has_value());
    CHECK(SameBox(*box, {110, 83, 20, 14}));
    const auto corner = KeypointToBbox({0, 0}, 10, 10, 100, 100);
    REQUIRE(corner.has_value());
    CHECK(SameBox(*corner, {0, 0, 5, 5}));
    CHECK_FALSE(KeypointToBbox({-1, 5}, 10, 10, 100, 100).has_value());
    CHECK_FALSE(KeypointToBbox({5, 101}, 10, 10, 100, 100).has_value());
  }

  TEST_CASE("keypoint expansion round-trips centres when unclipped") {
    Rng rng(3);
    for (int i = 0; i < 500; ++i) {
      const double bw = rng.Uniform(2, 30), bh = rng.Uniform(2, 30);
      const Point2 kp{rng.Uniform(bw, 384 - bw), rng.Uniform(bh, 286 - bh)};
      const auto box = KeypointToBbox(kp, bw, bh, 384, 286);
      REQUIRE(box.has_value());
      CHECK(box->x + box->w / 2 == doctest::Approx(kp.x).epsilon(1e-12));
      CHECK(box->y + box->h / 2 == doctest::Approx(kp.y).epsilon(1e-12));
      CHECK(box->w == doctest::Approx(bw).epsilon(1e-12));
    }
  }

  TEST_CASE("mask rectangle and empty mask") {
    const MaskImage m = RectMask(20, 20, 5, 3, 8, 10);
    for (auto mode : {MaskBoxMode::kGlobal, MaskBoxMode::kPerComponent}) {
      const auto boxes = MaskToBboxes(m, mode);
      REQUIRE(boxes.size() == 1);
      CHECK(SameBox(boxes[0], {5, 3, 4, 8}));
    }
    const MaskImage empty{10, 10, std::vector<std::uint8_t>(100, 0)};
    CHECK(MaskToBboxes(empty, MaskBoxMode::kGlobal).empty());
    CHECK(MaskToBboxes(empty, MaskBoxMode::kPerComponent).empty());
  }

  TEST_CASE("diagonal pixels join under 8-connectivity") {
    MaskImage m{4, 4, std::vector<std::uint8_t>(16, 0)};
    m.pixels[0] = m.pixels[5] = m.pixels[10] = 1;
    m.pixels[3] = 1;
    const auto boxes = MaskToBboxes(m, MaskBoxMode::kPerComponent);
    REQUIRE(boxes.size() == 2);
    CHECK(SameBox(boxes[0], {0, 0, 3, 3}));
    CHECK(SameBox(boxes[1], {3, 0, 1, 1}));
  }

  TEST_CASE("50 random masks match the per-pixel oracle") {
    Rng rng(4);
    for (int i = 0; i < 50; ++i) {
      const MaskImage m = RandomMask(rng);
      for (auto mode : {MaskBoxMode::kGlobal, MaskBoxMode::kPerComponent}) {
        const auto got = MaskToBboxes(m, mode);
        const auto want = reference::MaskBoxes(m, mode);
        REQUIRE(got.size() == want.size());
        for (std::size_t k = 0; k < got.size(); ++k) CHECK(SameBox(got[k], want[k]));
      }
      // The global box contains every component box.
      const auto global = MaskToBboxes(m, MaskBoxMode::kGlobal);
      for (const auto& b : MaskToBboxes(m, MaskBoxMode::kPerComponent)) {
        CHECK(b.x >= global[0].x);
        CHECK(b.y >= global[0].y);
        CHECK(b.x + b.w <= global[0].x + global[0].w);
        CHECK(b.y + b.h <= global[0].y + global[0].h);
      }
    }
    CHECK(MaskOracleMismatches(5, 50) == 0);
  }

  TEST_CASE("PTS parsing") {
    const auto pts = ParsePts("version: 1\nn_points: 2\n{\n1.5 2\n3 4.25\n}\n");
    REQUIRE(pts.size() == 2);
    CHECK(pts[1].x == 3);
    CHECK(pts[1].y == 4.25);
    CHECK(ParsePts("7 8\n\n9 10\r\n").size() == 2);
    CHECK_THROWS_AS(ParsePts("n_points: 3\n{\n1 2\n}\n"), Error);
    CHECK_THROWS_AS(ParsePts("1 two\n"), Error);
  }

  TEST_CASE("COCO round trip") {
    const CocoDataset ds = TwoImageDataset();
    const auto dir = test::ScratchDir("coco");
    const std::string path = (dir / "a.json").string();
    WriteCoco(path, ds);
    const CocoDataset back = ReadCoco(path);
    REQUIRE(back.images.size() == 2);
    CHECK(back.images[1].file_name == "b.pgm");
    CHECK(back.images[1].height == 60);
    REQUIRE(back.annotations.size() == 2);
    CHECK(SameBox(back.annotations[0].bbox, ds.annotations[0].bbox));
    CHECK(back.annotations[0].area == 120);
    CHECK(back.categories[0].name == "glottis");
    // Byte-level: writing what was read reproduces the file.
    const std::string again = (dir / "b.json").string();
    WriteCoco(again, back);
    CHECK(ReadFileBytes(path) == ReadFileBytes(again));
  }

  TEST_CASE("hand-written fixture parses") {
    const std::string text = R"({
      "images": [{"id": 7, "file_name": "x.pgm", "width": 10, "height": 20},
                 {"id": 9, "file_name": "y.pgm", "width": 30, "height": 40}],
      "annotations": [{"id": 1, "image_id": 9, "category_id": 3, "bbox": [1, 2, 3.5, 4], "area": 14, "iscrowd": 0}],
      "categories": [{"id": 3, "name": "nostril"}]
    })";
    const CocoDataset ds = CocoFromJson(text);
    REQUIRE(ds.images.size() == 2);
    CHECK(ds.images[0].id == 7);
    CHECK(ds.FindImage(9)->width == 30);
    CHECK(ds.annotations[0].bbox.w == 3.5);
    CHECK(ds.SortedCategoryIds() == std::vector<std::int64_t>{3});
  }

  TEST_CASE("COCO validation errors name the record") {
    auto expect_error = [](const CocoDataset& ds, const std::string& needle) {
      try {
        ValidateCoco(ds);
        FAIL("expected a validation error");
      } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::kValidation);
        INFO(e.what());
        CHECK(std::string(e.what()).find(needle) != std::string::npos);
      }
    };
    CocoDataset ds = TwoImageDataset();
    ds.annotations[1].image_id = 42;
    expect_error(ds, "42");
    ds = TwoImageDataset();
    ds.annotations[0].category_id = 5;
    expect_error(ds, "category_id 5");
    ds = TwoImageDataset();
    ds.images[1].id = 1;
    expect_error(ds, "duplicate image id");
    ds = TwoImageDataset();
    ds.annotations[0].bbox.w = -1;
    expect_error(ds, "annotations[0]");
    ds = TwoImageDataset();
    ds.annotations[0].bbox.x = 35;
    expect_error(ds, "outside");
    CHECK_THROWS_AS(CocoFromJson("{\"images\": ["), Error);
    CHECK_THROWS_AS(CocoFromJson("{\"images\": [], \"annotations\": []}"), Error);
  }

  TEST_CASE("detections JSON round trip") {
    const std::vector<CocoDetection> dets{{1, 2, {1, 2, 3, 4}, 0.75}, {3, 1, {0.5, 0, 8, 9}, 0.125}};
    const auto back = DetectionsFromJson(DetectionsToJson(dets));
    REQUIRE(back.size() == 2);
    CHECK(back[1].image_id == 3);
    CHECK(back[1].score == 0.125);
    CHECK(SameBox(back[0].bbox, dets[0].bbox));
  }

  TEST_CASE("netpbm round trip") {
    const auto dir = test::ScratchDir("pnm");
    const RgbImage img{3, 2, {1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14, 15, 16, 17, 18}};
    WritePpm((dir / "a.ppm").string(), img);
    CHECK(ReadPpm((dir / "a.ppm").string()) == img);
    const GrayImage g{2, 2, {0, 255, 7, 9}};
    WritePgm((dir / "a.pgm").string(), g);
    const GrayImage gb = ReadPgm((dir / "a.pgm").string());
    CHECK(gb.pixels == g.pixels);
    CHECK(ReadNetpbmSize((dir / "a.ppm").string()).width == 3);
    CHECK_THROWS_AS(ParsePgm("P2\n1 1\n255\n0"), Error);
    CHECK_THROWS_AS(ParsePpm("P6\n2 2\n255\nab"), Error);
  }

  TEST_CASE("nostril annotation on a fixture directory") {
    const auto dir = test::ScratchDir("nostril");
    std::vector<Point2> pts(20, Point2{50, 50});
    for (int i = 0; i < 3; ++i) {
      pts[15] = {100.0 + i, 90};
      pts[16] = {140.0 + i, 91};
      WritePts(dir / ("face" + std::to_string(i) + ".pts"), pts);
    }
    WritePgm((dir / "face0.pgm").string(), GrayImage{200, 150, std::vector<std::uint8_t>(200 * 150, 0)});
    std::ofstream(dir / "notes.txt") << "ignored";
    const AnnotationReport r = AnnotateNostrils(dir.string(), dir.string(), NostrilOptions{});
    REQUIRE(r.dataset.images.size() == 3);
    CHECK(r.dataset.images[0].width == 200);
    CHECK(r.dataset.images[1].width == 384);
    CHECK(r.dataset.annotations.size() == 6);
    CHECK(SameBox(r.dataset.annotations[0].bbox, {90, 83, 20, 14}));
    CHECK(r.warnings.size() == 2);  // two images fall back to the default size
    ValidateCoco(r.dataset);
    const auto empty = test::ScratchDir("nostril_empty");
    const AnnotationReport none = AnnotateNostrils(empty.string(), empty.string(), NostrilOptions{});
    CHECK(none.dataset.images.empty());
    CHECK(none.warnings.size() == 1);
  }

  TEST_CASE("glottis annotation on fixtures") {
    const auto dir = test::ScratchDir("glottis");
    WriteGray(dir / "m0.pgm", RectMask(20, 20, 5, 3, 8, 10));
    MaskImage two = RectMask(30, 20, 1, 1, 4, 4);
    for (std::int64_t y = 10; y < 15; ++y) two.pixels[static_cast<std::size_t>(y * 30 + 20)] = 9;
    WriteGray(dir / "m1.pgm", two);
    WriteGray(dir / "m2.pgm", MaskImage{8, 8, std::vector<std::uint8_t>(64, 0)});
    std::ofstream(dir / "readme.txt") << "not an image";
    const AnnotationReport global = AnnotateGlottis(dir.string(), MaskBoxMode::kGlobal);
    CHECK(global.dataset.images.size() == 3);
    CHECK(global.dataset.annotations.size() == 2);
    CHECK(global.warnings.size() == 1);
    CHECK(SameBox(global.dataset.annotations[1].bbox, {1, 1, 20, 14}));
    const AnnotationReport comp = AnnotateGlottis(dir.string(), MaskBoxMode::kPerComponent);
    CHECK(comp.dataset.annotations.size() == 3);
    for (const auto& a : comp.dataset.annotations) {
      const auto* img = comp.dataset.FindImage(a.image_id);
      const MaskImage m = MaskImage::FromGray(ReadPgm((dir / img->file_name).string()));
      const auto want = reference::MaskBoxes(m, MaskBoxMode::kPerComponent);
      CHECK(std::any_of(want.begin(), want.end(), [&](const BoxXyWh& b) { return SameBox(b, a.bbox); }));
    }
  }

  TEST_CASE("synthetic data is deterministic per seed") {
    const SyntheticOptions opt{5, 6, 64, 64, 2};
    const SyntheticDataset a = GenerateSynthetic(opt), b = GenerateSynthetic(opt);
    CHECK(CocoToJson(a.coco) == CocoToJson(b.coco));
    for (std::size_t i = 0; i < a.images.size(); ++i) CHECK(a.images[i] == b.images[i]);
    SyntheticOptions other = opt;
    other.seed = 6;
    CHECK(CocoToJson(GenerateSynthetic(other).coco) != CocoToJson(a.coco));
  }

  TEST_CASE("synthetic boxes tightly bound the rendered shapes") {
    const SyntheticDataset data = GenerateSynthetic({9, 40, 64, 48, 3});
    for (std::size_t i = 0; i < data.images.size(); ++i) {
      const RgbImage& img = data.images[i];
      MaskImage m{img.width, img.height, std::vector<std::uint8_t>(static_cast<std::size_t>(img.width * img.height))};
      for (std::size_t p = 0; p < m.pixels.size(); ++p) {
        m.pixels[p] = img.pixels[3 * p] >= 170 && img.pixels[3 * p + 1] >= 170 && img.pixels[3 * p + 2] >= 170;
      }
      auto want = reference::MaskBoxes(m, MaskBoxMode::kPerComponent);
      std::vector<BoxXyWh> got;
      for (const auto& a : data.coco.annotations) {
        if (a.image_id == data.coco.images[i].id) got.push_back(a.bbox);
      }
      std::sort(want.begin(), want.end(), BoxLess);
      std::sort(got.begin(), got.end(), BoxLess);
      REQUIRE(got.size() == want.size());
      for (std::size_t k = 0; k < got.size(); ++k) CHECK(SameBox(got[k], want[k]));
    }
  }

  TEST_CASE("synthetic cardinality and file output") {
    const SyntheticDataset data = GenerateSynthetic({1, 100, 64, 64, 2});
    CHECK(data.coco.images.size() == 100);
    CHECK(data.coco.annotations.size() >= 100);
    CHECK(data.coco.annotations.size() <= 300);
    CHECK(data.coco.categories.size() == 2);
    for (const auto& a : data.coco.annotations) {
      CHECK(a.bbox.x >= 0);
      CHECK(a.bbox.x + a.bbox.w <= 64);
    }
    const auto dir = test::ScratchDir("synth");
    const SyntheticDataset small = GenerateSynthetic({2, 3, 32, 32, 1});
    WriteSynthetic(small, dir.string());
    const CocoDataset back = ReadCoco((dir / "annotations.json").string());
    CHECK(back.images.size() == 3);
    CHECK(ReadPpm((dir / back.images[2].file_name).string()) == small.images[2]);
    CHECK_THROWS_AS(GenerateSynthetic({1, 0, 64, 64, 2}), Error);
    CHECK_THROWS_AS(GenerateSynthetic({1, 1, 64, 64, 4}), Error);
  }
}
