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

#include "detr/selfcheck.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>

#include "detr/box.hpp"
#include "detr/coco_eval.hpp"
#include "detr/deform_attn.hpp"
#include "detr/error.hpp"
#include "detr/gradcheck.hpp"
#include "detr/matcher.hpp"
#include "detr/model.hpp"
#include "detr/random.hpp"
#include "detr/reference.hpp"
#include "detr/sam.hpp"

namespace detr {
namespace {

constexpr double kGradTolerance = 1e-4;
constexpr double kOracleTolerance = 1e-10;

Tensor RandomTensor(Rng& rng, Shape shape, double lo = -1.0, double hi = 1.0) {
  std::vector<double> data(static_cast<std::size_t>(NumElements(shape)));
  for (auto& v : data) v = rng.Uniform(lo, hi);
  return Tensor::FromData(std::move(shape), std::move(data));
}

std::vector<double> RandomVector(Rng& rng, std::size_t n, double lo, double hi) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.Uniform(lo, hi);
  return v;
}

// Keeps finite differences of step 1e-6 clear of the interpolation kinks.
bool OffLattice(double v) {
  const double f = v - std::floor(v);
  return f > 1e-3 && f < 1.0 - 1e-3;
}

std::int64_t Dim(Rng& rng, std::int64_t lo, std::int64_t hi) { return rng.UniformInt(lo, hi); }

double Check(const std::function<Tensor(const std::vector<Tensor>&)>& loss, const std::vector<Tensor>& inputs,
             std::int64_t max_coords = 0) {
  GradCheckOptions opts;
  opts.max_coords = max_coords;
  return GradCheck(loss, inputs, opts).rel_error;
}

// ---------------------------------------------------------------------------
// Random problem generators shared by the gradient checks and the oracles.

struct DeformCase {
  std::int64_t heads, head_dim, points, queries;
  std::vector<LevelShape> shapes;
  std::vector<std::int64_t> starts;
  Tensor value, ref, offsets, weights;
};

DeformCase MakeDeformCase(Rng& rng) {
  DeformCase c;
  c.heads = Dim(rng, 1, 3);
  c.head_dim = Dim(rng, 1, 3);
  c.points = Dim(rng, 1, 3);
  c.queries = Dim(rng, 1, 3);
  const std::int64_t levels = Dim(rng, 1, 3);
  std::int64_t total = 0;
  for (std::int64_t l = 0; l < levels; ++l) {
    c.shapes.push_back({Dim(rng, 1, 5), Dim(rng, 1, 5)});
    c.starts.push_back(total);
    total += c.shapes.back().h * c.shapes.back().w;
  }
  c.value = RandomTensor(rng, {total, c.heads * c.head_dim});
  c.ref = RandomTensor(rng, {c.queries, 2}, 0.0, 1.0);
  c.offsets = RandomTensor(rng, {c.queries, c.heads, levels, c.points, 2}, -2.0, 2.0);
  c.weights = RandomTensor(rng, {c.queries, c.heads, levels, c.points}, 0.0, 1.0);
  // Redraw offsets whose sample lands within 1e-3 of a lattice line.
  auto off = c.offsets.mutable_data();
  auto ref = c.ref.data();
  for (std::int64_t q = 0; q < c.queries; ++q) {
    for (std::int64_t m = 0; m < c.heads; ++m) {
      for (std::int64_t l = 0; l < levels; ++l) {
        const auto& s = c.shapes[static_cast<std::size_t>(l)];
        for (std::int64_t k = 0; k < c.points; ++k) {
          const auto o = static_cast<std::size_t>(2 * (((q * c.heads + m) * levels + l) * c.points + k));
          const double bx = ref[static_cast<std::size_t>(2 * q)] * static_cast<double>(s.w) - 0.5;
          const double by = ref[static_cast<std::size_t>(2 * q + 1)] * static_cast<double>(s.h) - 0.5;
          while (!OffLattice(bx + off[o])) off[o] = rng.Uniform(-2.0, 2.0);
          while (!OffLattice(by + off[o + 1])) off[o + 1] = rng.Uniform(-2.0, 2.0);
        }
      }
    }
  }
  return c;
}

struct RoiCase {
  std::int64_t grid;
  Tensor features, boxes;
};

RoiCase MakeRoiCase(Rng& rng) {
  RoiCase c;
  const std::int64_t h = Dim(rng, 2, 6), w = Dim(rng, 2, 6), d = Dim(rng, 1, 3), n = Dim(rng, 1, 3);
  c.grid = Dim(rng, 1, 3);
  c.features = RandomTensor(rng, {h, w, d});
  std::vector<double> boxes;
  const auto g = static_cast<double>(c.grid);
  for (std::int64_t b = 0; b < n; ++b) {
    for (;;) {
      const double cx = rng.Uniform(0.2, 0.8), cy = rng.Uniform(0.2, 0.8);
      const double bw = rng.Uniform(0.1, 0.6), bh = rng.Uniform(0.1, 0.6);
      bool ok = true;
      for (std::int64_t i = 0; i < c.grid && ok; ++i) {
        const double f = (static_cast<double>(i) + 0.5) / g - 0.5;
        ok = OffLattice((cx + bw * f) * static_cast<double>(w) - 0.5) &&
             OffLattice((cy + bh * f) * static_cast<double>(h) - 0.5);
      }
      if (!ok) continue;
      boxes.insert(boxes.end(), {cx, cy, bw, bh});
      break;
    }
  }
  c.boxes = Tensor::FromData({n, 4}, std::move(boxes));
  return c;
}

Tensor OffLatticePoints(Rng& rng, std::int64_t count, std::int64_t h, std::int64_t w) {
  std::vector<double> pts;
  for (std::int64_t i = 0; i < count; ++i) {
    double x, y;
    do x = rng.Uniform(-1.0, static_cast<double>(w)); while (!OffLattice(x));
    do y = rng.Uniform(-1.0, static_cast<double>(h)); while (!OffLattice(y));
    pts.insert(pts.end(), {x, y});
  }
  return Tensor::FromData({count, 2}, std::move(pts));
}

Targets RandomTargets(Rng& rng, std::int64_t count, std::int64_t classes) {
  Targets t;
  for (std::int64_t i = 0; i < count; ++i) {
    t.boxes.push_back({rng.Uniform(0.2, 0.8), rng.Uniform(0.2, 0.8), rng.Uniform(0.05, 0.4), rng.Uniform(0.05, 0.4)});
    t.labels.push_back(rng.UniformInt(0, classes - 1));
  }
  return t;
}

// ---------------------------------------------------------------------------
// One gradient check instance per op.

double GradInstance(const std::string& op, Rng& rng) {
  if (op == "matmul") {
    const std::int64_t r = Dim(rng, 1, 5), k = Dim(rng, 1, 5), c = Dim(rng, 1, 5);
    const Tensor w = RandomTensor(rng, {r, c});
    return Check([&](const auto& in) { return Project(MatMul(in[0], in[1]), w); },
                 {RandomTensor(rng, {r, k}), RandomTensor(rng, {k, c})});
  }
  if (op == "softmax") {
    const std::int64_t r = Dim(rng, 1, 5), c = Dim(rng, 1, 5);
    const int axis = static_cast<int>(rng.UniformInt(0, 1));
    const Tensor w = RandomTensor(rng, {r, c});
    return Check([&](const auto& in) { return Project(Softmax(in[0], axis), w); },
                 {RandomTensor(rng, {r, c}, -3.0, 3.0)});
  }
  if (op == "sigmoid") {
    const std::int64_t r = Dim(rng, 1, 6), c = Dim(rng, 1, 6);
    const Tensor w = RandomTensor(rng, {r, c});
    return Check([&](const auto& in) { return Project(Sigmoid(in[0]), w); }, {RandomTensor(rng, {r, c}, -4.0, 4.0)});
  }
  if (op == "layer_norm") {
    // Width 2 is degenerate: the normalized pair is +-1 up to eps, so its
    // gradient is eps-sized and finite differences drown in round-off.
    const std::int64_t r = Dim(rng, 1, 4), c = Dim(rng, 3, 8);
    const Tensor w = RandomTensor(rng, {r, c});
    return Check([&](const auto& in) { return Project(LayerNorm(in[0], in[1], in[2]), w); },
                 {RandomTensor(rng, {r, c}, -2.0, 2.0), RandomTensor(rng, {c}, 0.5, 1.5), RandomTensor(rng, {c})});
  }
  if (op == "bilinear_sample") {
    const std::int64_t h = Dim(rng, 1, 5), w = Dim(rng, 1, 5), d = Dim(rng, 1, 3), p = Dim(rng, 1, 6);
    const Tensor proj = RandomTensor(rng, {p, d});
    return Check([&](const auto& in) { return Project(SamplePoints(in[0], in[1]), proj); },
                 {RandomTensor(rng, {h, w, d}), OffLatticePoints(rng, p, h, w)});
  }
  if (op == "ms_deform_attn") {
    DeformCase c = MakeDeformCase(rng);
    const Tensor proj = RandomTensor(rng, {c.queries, c.heads * c.head_dim});
    return Check(
        [&](const auto& in) {
          return Project(MsDeformAttnCore(in[0], c.shapes, c.starts, in[1], in[2], in[3]), proj);
        },
        {c.value, c.ref, c.offsets, c.weights});
  }
  if (op == "roi_align") {
    RoiCase c = MakeRoiCase(rng);
    const Tensor proj = RandomTensor(rng, {c.boxes.dim(0), c.grid, c.grid, c.features.dim(2)});
    return Check([&](const auto& in) { return Project(RoiAlign(in[0], in[1], c.grid), proj); },
                 {c.features, c.boxes});
  }
  if (op == "reweight") {
    const std::int64_t n = Dim(rng, 1, 3), m = Dim(rng, 1, 3), d = Dim(rng, 1, 4);
    ParamStore store;
    const LinearLayer cg = LinearLayer::Create(store, "cg", d, m * d, ParamGroup::kDetector, rng);
    const LinearLayer pg = LinearLayer::Create(store, "pg", d, m * d, ParamGroup::kDetector, rng);
    const Tensor w1 = RandomTensor(rng, {n, m, d}), w2 = RandomTensor(rng, {n, m, d});
    return Check(
        [&](const auto& in) {
          const LinearLayer c{in[4], in[5]}, p{in[6], in[7]};
          const ReweightedQueries q = Reweight(in[0], in[1], in[2], in[3], c, p);
          return Add(Project(q.content, w1), Project(q.pos, w2));
        },
        {RandomTensor(rng, {n, d}), RandomTensor(rng, {n, d}), RandomTensor(rng, {n, m, d}),
         RandomTensor(rng, {n, m, d}), cg.weight.clone(), cg.bias.clone(), pg.weight.clone(), pg.bias.clone()});
  }
  if (op == "heads") {
    DetectorConfig cfg = DetectorConfig::Desk();
    cfg.dim = 8;
    cfg.heads = 2;
    cfg.ffn_dim = 8;
    cfg.salient_hidden = 8;
    cfg.num_classes = static_cast<std::int64_t>(rng.UniformInt(1, 3));
    Detector det(cfg, rng.NextU64());
    const std::int64_t n = Dim(rng, 1, 4);
    // Random head parameters, biases included: a zero bias can pin a ReLU
    // input exactly at its kink.
    std::vector<Tensor> params;
    for (const auto& p : det.params().all()) {
      if (p.name.rfind("head.", 0) != 0) continue;
      for (auto& v : p.value.mutable_data()) v = rng.Uniform(-0.5, 0.5);
      params.push_back(p.value);
    }
    // Redraw the queries until every hidden ReLU input of the box MLP is
    // clear of zero by far more than the finite-difference step.
    const LinearLayer b0 = LinearLayer::Bind(det.params(), "head.box.0");
    const LinearLayer b1 = LinearLayer::Bind(det.params(), "head.box.1");
    Tensor x;
    for (int attempt = 0;; ++attempt) {
      x = RandomTensor(rng, {n, cfg.dim});
      NoGradGuard ng;
      const Tensor z0 = b0(x), z1 = b1(Relu(z0));
      bool clear = true;
      for (const Tensor& z : {z0, z1}) {
        for (double v : z.data()) clear = clear && std::abs(v) > 1e-3;
      }
      if (clear) break;
      Require(attempt < 1000, ErrorKind::kNumeric, "heads gradcheck: no kink-free input found");
    }
    std::vector<Tensor> inputs{x};
    inputs.insert(inputs.end(), params.begin(), params.end());
    const Tensor w1 = RandomTensor(rng, {n, cfg.num_classes + 1}), w2 = RandomTensor(rng, {n, 4});
    return Check(
        [&](const auto& in) {
          const LayerPrediction p = det.Heads(in[0]);
          return Add(Project(p.probs, w1), Project(p.boxes, w2));
        },
        inputs);
  }
  if (op == "set_loss") {
    const std::int64_t images = Dim(rng, 1, 2), layers = Dim(rng, 1, 2), n = Dim(rng, 2, 5);
    const std::int64_t classes = Dim(rng, 1, 3);
    std::vector<Targets> targets;
    std::vector<Tensor> inputs;
    for (std::int64_t i = 0; i < images; ++i) {
      targets.push_back(RandomTargets(rng, rng.UniformInt(0, n), classes));
      for (std::int64_t l = 0; l < layers; ++l) {
        inputs.push_back(RandomTensor(rng, {n, classes + 1}, -2.0, 2.0));
        inputs.push_back(RandomTensor(rng, {n, 4}, -1.5, 1.5));
      }
    }
    return Check(
        [&](const auto& in) {
          std::vector<std::vector<LayerPrediction>> preds(static_cast<std::size_t>(images));
          std::size_t k = 0;
          for (auto& per_image : preds) {
            for (std::int64_t l = 0; l < layers; ++l) {
              LayerPrediction p;
              p.logits = in[k++];
              p.probs = Softmax(p.logits, -1);
              p.boxes = Sigmoid(in[k++]);
              per_image.push_back(std::move(p));
            }
          }
          return SetLoss(preds, targets, LossWeights{}).total;
        },
        inputs);
  }
  Fail(ErrorKind::kContract, "unknown gradient-suite op '" + op + "'");
}

// ---------------------------------------------------------------------------
// Evaluator fixtures

CocoDataset FixtureGroundTruth() {
  CocoDataset gt;
  gt.images = {{1, "a.ppm", 100, 100}, {2, "b.ppm", 100, 100}};
  gt.categories = {{1, "nostril"}};
  gt.annotations = {{1, 1, 1, {10, 10, 20, 20}, 400, 0}, {2, 2, 1, {0, 0, 10, 10}, 100, 0}};
  return gt;
}

std::string MapFixtureFailure() {
  const CocoDataset gt = FixtureGroundTruth();
  std::vector<CocoDetection> perfect;
  for (const auto& a : gt.annotations) perfect.push_back({a.image_id, a.category_id, a.bbox, 0.9});
  const EvalResult p = EvaluateDetections(gt, perfect);
  if (p.map != 1.0 || p.map50 != 1.0 || p.map75 != 1.0) return "perfect predictions do not score 1/1/1";

  CocoDataset single = gt;
  single.images.resize(1);
  single.annotations = {{1, 1, 1, {0, 0, 10, 10}, 100, 0}};
  // Width 6 against width 10: IoU exactly 0.6.
  const EvalResult r = EvaluateDetections(single, {{1, 1, {0, 0, 6, 10}, 0.8}});
  if (std::abs(r.map - 0.3) > 1e-12 || r.map50 != 1.0 || r.map75 != 0.0) {
    char buf[160];
    std::snprintf(buf, sizeof(buf), "IoU 0.6 fixture gave %.6f/%.6f/%.6f, expected 0.3/1/0", r.map, r.map50,
                  r.map75);
    return buf;
  }
  return {};
}

std::string Format(const char* fmt, double v) {
  char buf[128];
  std::snprintf(buf, sizeof(buf), fmt, v);
  return buf;
}

}  // namespace

const std::vector<std::string>& GradSuiteOps() {
  static const std::vector<std::string> ops = {"matmul",   "softmax",   "sigmoid", "layer_norm",
                                               "bilinear_sample", "ms_deform_attn", "roi_align",
                                               "reweight", "heads",     "set_loss"};
  return ops;
}

GradSuiteEntry RunGradCheck(const std::string& op, std::uint64_t seed, int instances) {
  Rng rng(seed);
  GradSuiteEntry e{op, 0, 0.0};
  for (int i = 0; i < instances; ++i) {
    e.worst_rel_error = std::max(e.worst_rel_error, GradInstance(op, rng));
    ++e.instances;
  }
  Tape::Active().Clear();
  return e;
}

double DeformOracleMaxError(std::uint64_t seed, int configs) {
  Rng rng(seed);
  NoGradGuard no_grad;
  double worst = 0.0;
  for (int i = 0; i < configs; ++i) {
    const DeformCase c = MakeDeformCase(rng);
    const Tensor fast = MsDeformAttnCore(c.value, c.shapes, c.starts, c.ref, c.offsets, c.weights);
    auto vec = [](const Tensor& t) { return std::vector<double>(t.data().begin(), t.data().end()); };
    const auto slow = reference::MsDeformAttn(vec(c.value), c.head_dim, c.heads, c.shapes, vec(c.ref),
                                              vec(c.offsets), vec(c.weights), c.queries, c.points);
    for (std::size_t k = 0; k < slow.size(); ++k) worst = std::max(worst, std::abs(fast.data()[k] - slow[k]));
  }
  return worst;
}

double RoiAlignOracleMaxError(std::uint64_t seed, int configs) {
  Rng rng(seed);
  NoGradGuard no_grad;
  double worst = 0.0;
  for (int i = 0; i < configs; ++i) {
    const RoiCase c = MakeRoiCase(rng);
    const Tensor fast = RoiAlign(c.features, c.boxes, c.grid);
    const auto slow = reference::RoiAlign({c.features.data().begin(), c.features.data().end()}, c.features.dim(0),
                                          c.features.dim(1), c.features.dim(2),
                                          {c.boxes.data().begin(), c.boxes.data().end()}, c.grid);
    for (std::size_t k = 0; k < slow.size(); ++k) worst = std::max(worst, std::abs(fast.data()[k] - slow[k]));
  }
  return worst;
}

double BilinearOracleMaxError(std::uint64_t seed, int configs) {
  Rng rng(seed);
  double worst = 0.0;
  for (int i = 0; i < configs; ++i) {
    const std::int64_t h = Dim(rng, 1, 6), w = Dim(rng, 1, 6), d = Dim(rng, 1, 3);
    const auto map = RandomVector(rng, static_cast<std::size_t>(h * w * d), -1.0, 1.0);
    for (int p = 0; p < 8; ++p) {
      const double x = rng.Uniform(-1.5, static_cast<double>(w) + 0.5);
      const double y = rng.Uniform(-1.5, static_cast<double>(h) + 0.5);
      std::vector<double> fast(static_cast<std::size_t>(d));
      BilinearSample(map, h, w, d, x, y, fast);
      const auto slow = reference::Bilinear(map, h, w, d, x, y);
      for (std::size_t k = 0; k < slow.size(); ++k) worst = std::max(worst, std::abs(fast[k] - slow[k]));
    }
  }
  return worst;
}

int HungarianMismatches(std::uint64_t seed, int matrices, int max_n) {
  Rng rng(seed);
  int bad = 0;
  for (int i = 0; i < matrices; ++i) {
    CostMatrix cost;
    cost.rows = rng.UniformInt(1, max_n);
    cost.cols = rng.UniformInt(1, max_n);
    // Integer costs on some matrices exercise ties.
    const bool ties = rng.Uniform() < 0.3;
    for (std::int64_t k = 0; k < cost.rows * cost.cols; ++k) {
      cost.values.push_back(ties ? static_cast<double>(rng.UniformInt(0, 3)) : rng.Uniform(-5.0, 5.0));
    }
    const Assignment a = HungarianMatch(cost);
    bool valid = static_cast<std::int64_t>(a.size()) == std::min(cost.rows, cost.cols);
    std::vector<char> row_used(static_cast<std::size_t>(cost.rows)), col_used(static_cast<std::size_t>(cost.cols));
    for (const auto& [r, c] : a) {
      valid = valid && r >= 0 && r < cost.rows && c >= 0 && c < cost.cols && !row_used[static_cast<std::size_t>(r)] &&
              !col_used[static_cast<std::size_t>(c)];
      if (!valid) break;
      row_used[static_cast<std::size_t>(r)] = col_used[static_cast<std::size_t>(c)] = 1;
    }
    if (!valid || std::abs(AssignmentCost(cost, a) - reference::BruteForceAssignmentCost(cost)) > 1e-9) ++bad;
  }
  return bad;
}

int MaskOracleMismatches(std::uint64_t seed, int masks) {
  Rng rng(seed);
  int bad = 0;
  auto same = [](const std::vector<BoxXyWh>& a, const std::vector<BoxXyWh>& b) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i) {
      if (a[i].x != b[i].x || a[i].y != b[i].y || a[i].w != b[i].w || a[i].h != b[i].h) return false;
    }
    return true;
  };
  for (int i = 0; i < masks; ++i) {
    MaskImage m;
    m.width = rng.UniformInt(1, 24);
    m.height = rng.UniformInt(1, 24);
    const double density = rng.Uniform(0.0, 0.4);
    for (std::int64_t k = 0; k < m.width * m.height; ++k) {
      m.pixels.push_back(rng.Uniform() < density ? static_cast<std::uint8_t>(rng.UniformInt(1, 255)) : 0);
    }
    for (MaskBoxMode mode : {MaskBoxMode::kGlobal, MaskBoxMode::kPerComponent}) {
      if (!same(MaskToBboxes(m, mode), reference::MaskBoxes(m, mode))) {
        ++bad;
        break;
      }
    }
  }
  return bad;
}

std::vector<CheckResult> RunSelfCheck(const SelfCheckOptions& options) {
  std::vector<CheckResult> out;
  auto guarded = [&](const std::string& name, const std::function<CheckResult()>& fn) {
    try {
      CheckResult r = fn();
      r.name = name;
      out.push_back(std::move(r));
    } catch (const std::exception& e) {
      out.push_back({name, false, std::string("threw: ") + e.what()});
    }
  };

  std::uint64_t salt = 0;
  for (const auto& op : GradSuiteOps()) {
    guarded("grad_" + op, [&] {
      const auto e = RunGradCheck(op, options.seed + 1000 * ++salt, options.grad_instances);
      return CheckResult{"", e.worst_rel_error < kGradTolerance,
                         Format("worst relative error %.3g", e.worst_rel_error)};
    });
  }
  auto oracle = [&](const std::string& name, double (*fn)(std::uint64_t, int)) {
    guarded(name, [&] {
      const double err = fn(options.seed + 7, options.oracle_configs);
      return CheckResult{"", err <= kOracleTolerance, Format("max abs difference %.3g", err)};
    });
  };
  oracle("bilinear_oracle", &BilinearOracleMaxError);
  oracle("ms_deform_attn_oracle", &DeformOracleMaxError);
  oracle("roi_align_oracle", &RoiAlignOracleMaxError);
  guarded("hungarian_brute_force", [&] {
    const int bad = HungarianMismatches(options.seed + 11, 100, 6);
    return CheckResult{"", bad == 0, std::to_string(bad) + " of 100 matrices disagree"};
  });
  guarded("map_fixtures", [&] {
    const std::string why = MapFixtureFailure();
    return CheckResult{"", why.empty(), why.empty() ? "perfect and IoU-0.6 fixtures exact" : why};
  });
  guarded("giou_bound", [&] {
    Rng rng(options.seed + 13);
    int bad = 0;
    for (int i = 0; i < 1000; ++i) {
      auto box = [&] {
        const double x = rng.Uniform(0, 10), y = rng.Uniform(0, 10);
        return BoxXyxy{x, y, x + rng.Uniform(0, 5), y + rng.Uniform(0, 5)};
      };
      const BoxXyxy a = box(), b = box();
      const double g = Giou(a, b), iou = Iou(a, b);
      if (!(g <= iou + 1e-15 && g >= -1.0 && iou >= 0.0 && iou <= 1.0)) ++bad;
    }
    return CheckResult{"", bad == 0, std::to_string(bad) + " of 1000 pairs violate -1 <= giou <= iou <= 1"};
  });
  guarded("mask_oracle", [&] {
    const int bad = MaskOracleMismatches(options.seed + 17, 50);
    return CheckResult{"", bad == 0, std::to_string(bad) + " of 50 masks disagree"};
  });
  return out;
}

}  // namespace detr
