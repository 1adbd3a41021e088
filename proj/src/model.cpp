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

#include "detr/model.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include "detr/error.hpp"
#include "json.hpp"

namespace detr {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Config

DetectorConfig DetectorConfig::Desk() { return DetectorConfig{}; }

DetectorConfig DetectorConfig::Full() {
  DetectorConfig c;
  c.dim = 256;
  c.num_queries = 300;
  c.heads = 8;
  c.levels = 4;
  c.encoder_layers = 6;
  c.decoder_layers = 6;
  c.ffn_dim = 1024;
  c.image_height = 512;
  c.image_width = 512;
  c.backbone_channels = {64, 128, 256, 512, 1024, 2048};
  c.salient_hidden = 256;
  return c;
}

std::int64_t DetectorConfig::deepest_stride() const { return std::int64_t{8} << (levels - 1); }

void DetectorConfig::Validate() const {
  auto need = [](bool ok, const std::string& msg) {
    if (!ok) Fail(ErrorKind::kContract, "detector config: " + msg);
  };
  need(dim > 0 && dim % 4 == 0, "dim must be a positive multiple of 4");
  need(heads > 0 && dim % heads == 0, "dim must divide evenly across heads");
  need(num_queries > 0, "num_queries must be positive");
  need(levels >= 1, "levels must be >= 1");
  need(encoder_layers >= 0 && decoder_layers >= 1, "need >= 0 encoder and >= 1 decoder layers");
  need(num_classes >= 1, "num_classes must be >= 1");
  need(points >= 1 && roi_grid >= 1 && ffn_dim >= 1 && salient_hidden >= 1, "sizes must be positive");
  need(static_cast<std::int64_t>(backbone_channels.size()) == levels + 2,
       "backbone_channels needs levels + 2 entries");
  need(backbone_depth >= 1, "backbone_depth must be >= 1");
  need(image_height % deepest_stride() == 0 && image_width % deepest_stride() == 0,
       "image size must be divisible by the deepest stride " + std::to_string(deepest_stride()));
}

std::string DetectorConfig::ToJson() const {
  json j{{"dim", dim},
         {"num_queries", num_queries},
         {"heads", heads},
         {"levels", levels},
         {"encoder_layers", encoder_layers},
         {"decoder_layers", decoder_layers},
         {"num_classes", num_classes},
         {"image_height", image_height},
         {"image_width", image_width},
         {"backbone_channels", backbone_channels},
         {"backbone_depth", backbone_depth},
         {"points", points},
         {"ffn_dim", ffn_dim},
         {"roi_grid", roi_grid},
         {"salient_hidden", salient_hidden},
         {"sam_enabled", sam_enabled},
         {"aux_loss", aux_loss},
         {"query_init_std", query_init_std}};
  return j.dump();
}

DetectorConfig DetectorConfig::FromJson(const std::string& text) {
  DetectorConfig c;
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    Fail(ErrorKind::kValidation, std::string("detector config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) Fail(ErrorKind::kValidation, "detector config must be a JSON object");
  try {
    auto get = [&j](const char* key, auto& field) {
      if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
    };
    get("dim", c.dim);
    get("num_queries", c.num_queries);
    get("heads", c.heads);
    get("levels", c.levels);
    get("encoder_layers", c.encoder_layers);
    get("decoder_layers", c.decoder_layers);
    get("num_classes", c.num_classes);
    get("image_height", c.image_height);
    get("image_width", c.image_width);
    get("backbone_channels", c.backbone_channels);
    get("backbone_depth", c.backbone_depth);
    get("points", c.points);
    get("ffn_dim", c.ffn_dim);
    get("roi_grid", c.roi_grid);
    get("salient_hidden", c.salient_hidden);
    get("sam_enabled", c.sam_enabled);
    get("aux_loss", c.aux_loss);
    get("query_init_std", c.query_init_std);
  } catch (const json::exception& e) {
    Fail(ErrorKind::kValidation, std::string("detector config has a field of the wrong type: ") + e.what());
  }
  return c;
}

// ---------------------------------------------------------------------------
// Detector

Detector::Detector(const DetectorConfig& config, std::uint64_t seed) : config_(config) {
  config_.Validate();
  const auto& c = config_;
  Rng rng(seed);
  const auto bb = ParamGroup::kBackbone;
  const auto det = ParamGroup::kDetector;

  std::int64_t in_ch = 3;
  for (std::size_t s = 0; s < c.backbone_channels.size(); ++s) {
    const std::int64_t out_ch = c.backbone_channels[s];
    std::vector<Conv> stage;
    for (std::int64_t j = 0; j < c.backbone_depth; ++j) {
      const std::string name = "backbone.stage" + std::to_string(s) + ".conv" + std::to_string(j);
      Conv conv;
      conv.weight = params_.Add(name + ".weight", KaimingUniform(rng, in_ch * 9, {out_ch, in_ch, 3, 3}), bb);
      conv.bias = params_.Add(name + ".bias", Tensor::Zeros({out_ch}), bb);
      stage.push_back(conv);
      in_ch = out_ch;
    }
    stages_.push_back(std::move(stage));
  }
  for (std::int64_t l = 0; l < c.levels; ++l) {
    input_proj_.push_back(LinearLayer::Create(params_, "input_proj." + std::to_string(l),
                                              c.backbone_channels[static_cast<std::size_t>(l + 2)], c.dim, det, rng));
  }
  level_embed_ = params_.Add("level_embed", NormalInit(rng, {c.levels, c.dim}, 1.0), det);

  for (std::int64_t i = 0; i < c.encoder_layers; ++i) {
    const std::string p = "encoder." + std::to_string(i);
    EncoderLayer layer;
    layer.attn = MsDeformAttn(params_, p + ".attn",
                              MsDeformAttnConfig{c.dim, c.dim, c.heads, c.dim / c.heads, c.dim, c.levels, c.points},
                              det, rng);
    layer.norm1 = Norm::Create(params_, p + ".norm1", c.dim, det);
    layer.ffn1 = LinearLayer::Create(params_, p + ".ffn1", c.dim, c.ffn_dim, det, rng);
    layer.ffn2 = LinearLayer::Create(params_, p + ".ffn2", c.ffn_dim, c.dim, det, rng);
    layer.norm2 = Norm::Create(params_, p + ".norm2", c.dim, det);
    encoder_.push_back(std::move(layer));
  }

  for (std::int64_t i = 0; i < c.decoder_layers; ++i) {
    const std::string p = "decoder." + std::to_string(i);
    DecoderLayer layer;
    layer.aligner = SemanticAligner(params_, p + ".sam",
                                    SemanticAlignerConfig{c.dim, c.heads, c.roi_grid, c.salient_hidden, c.sam_enabled},
                                    det, rng);
    // Cross-attention query width is M*d: M heads of width d.
    layer.cross_attn =
        MsDeformAttn(params_, p + ".cross_attn",
                     MsDeformAttnConfig{c.heads * c.dim, c.dim, c.heads, c.dim, c.dim, c.levels, c.points}, det, rng);
    layer.norm1 = Norm::Create(params_, p + ".norm1", c.dim, det);
    layer.q_proj = LinearLayer::Create(params_, p + ".self_attn.q", c.dim, c.dim, det, rng);
    layer.k_proj = LinearLayer::Create(params_, p + ".self_attn.k", c.dim, c.dim, det, rng);
    layer.v_proj = LinearLayer::Create(params_, p + ".self_attn.v", c.dim, c.dim, det, rng);
    layer.o_proj = LinearLayer::Create(params_, p + ".self_attn.o", c.dim, c.dim, det, rng);
    layer.norm2 = Norm::Create(params_, p + ".norm2", c.dim, det);
    layer.ffn1 = LinearLayer::Create(params_, p + ".ffn1", c.dim, c.ffn_dim, det, rng);
    layer.ffn2 = LinearLayer::Create(params_, p + ".ffn2", c.ffn_dim, c.dim, det, rng);
    layer.norm3 = Norm::Create(params_, p + ".norm3", c.dim, det);
    decoder_.push_back(std::move(layer));
  }

  query_content_ = params_.Add("query.content", NormalInit(rng, {c.num_queries, c.dim}, c.query_init_std), det);
  query_pos_ = params_.Add("query.pos", NormalInit(rng, {c.num_queries, c.dim}, c.query_init_std), det);
  class_head_ = LinearLayer::Create(params_, "head.class", c.dim, c.num_classes + 1, det, rng);
  box_head_ = Mlp::Create(params_, "head.box", {c.dim, c.dim, c.dim, 4}, det, rng);
}

FeaturePyramid Detector::Backbone(const Tensor& image) const {
  const auto& c = config_;
  if (image.rank() != 3 || image.dim(0) != 3) {
    Fail(ErrorKind::kDimension, "backbone expects a [3, H, W] image, got " + ShapeString(image.shape()));
  }
  const std::int64_t stride = c.deepest_stride();
  if (image.dim(1) % stride != 0 || image.dim(2) % stride != 0) {
    Fail(ErrorKind::kContract, "image " + ShapeString(image.shape()) + " is not divisible by the deepest stride " +
                                   std::to_string(stride));
  }
  std::vector<Tensor> levels;
  Tensor x = image;
  for (std::size_t s = 0; s < stages_.size(); ++s) {
    for (std::size_t j = 0; j < stages_[s].size(); ++j) {
      x = Relu(Conv2d(x, stages_[s][j].weight, stages_[s][j].bias, j == 0 ? 2 : 1, 1));
    }
    if (s >= 2) {
      const std::int64_t ch = x.dim(0), h = x.dim(1), w = x.dim(2);
      const Tensor rows = Transpose(Reshape(x, {ch, h * w}));
      levels.push_back(Reshape(input_proj_[s - 2](rows), {h, w, c.dim}));
    }
  }
  return FeaturePyramid::FromLevels(levels);
}

Tensor Detector::EncoderPositions(const FeaturePyramid& pyramid) const {
  const Tensor sine = SineEmbed(pyramid.NormalizedLocations(), config_.dim);
  std::vector<std::int64_t> level_of_row;
  level_of_row.reserve(static_cast<std::size_t>(pyramid.length()));
  for (int l = 0; l < pyramid.num_levels(); ++l) {
    const auto& s = pyramid.shapes[static_cast<std::size_t>(l)];
    level_of_row.insert(level_of_row.end(), static_cast<std::size_t>(s.h * s.w), l);
  }
  return Add(sine, IndexRows(level_embed_, level_of_row));
}

FeaturePyramid Detector::Encode(const FeaturePyramid& pyramid) const {
  if (encoder_.empty()) return pyramid;
  const Tensor pos = EncoderPositions(pyramid);
  const Tensor ref = pyramid.NormalizedLocations();
  FeaturePyramid current = pyramid;
  for (const auto& layer : encoder_) {
    const Tensor src = current.flat;
    const Tensor attn = layer.attn.Forward(Add(src, pos), ref, current);
    Tensor h = layer.norm1(Add(src, attn));
    h = layer.norm2(Add(h, layer.ffn2(Relu(layer.ffn1(h)))));
    current.flat = h;
  }
  return current;
}

Tensor Detector::SelfAttention(const DecoderLayer& layer, const Tensor& content, const Tensor& pos) const {
  const std::int64_t heads = config_.heads;
  const std::int64_t head_dim = config_.dim / heads;
  const Tensor qk_in = Add(content, pos);
  const Tensor q = layer.q_proj(qk_in);
  const Tensor k = layer.k_proj(qk_in);
  const Tensor v = layer.v_proj(content);
  const double scale = 1.0 / std::sqrt(static_cast<double>(head_dim));
  std::vector<Tensor> outs;
  for (std::int64_t m = 0; m < heads; ++m) {
    const Tensor qm = Slice(q, 1, m * head_dim, head_dim);
    const Tensor km = Slice(k, 1, m * head_dim, head_dim);
    const Tensor vm = Slice(v, 1, m * head_dim, head_dim);
    const Tensor attn = Softmax(Scale(MatMul(qm, Transpose(km)), scale), -1);
    outs.push_back(MatMul(attn, vm));
  }
  return layer.o_proj(heads == 1 ? outs[0] : Concat(outs, 1));
}

std::vector<DecoderState> Detector::Decode(const FeaturePyramid& encoded, const Tensor& query_content,
                                           const Tensor& query_pos) const {
  const auto& c = config_;
  if (query_content.rank() != 2 || query_content.dim(1) != c.dim || query_pos.shape() != query_content.shape()) {
    Fail(ErrorKind::kDimension, "decoder queries " + ShapeString(query_content.shape()) + " / pos " +
                                    ShapeString(query_pos.shape()) + " do not match d = " + std::to_string(c.dim));
  }
  std::vector<DecoderState> states;
  Tensor tgt = query_content;
  for (std::size_t i = 0; i < decoder_.size(); ++i) {
    const auto& layer = decoder_[i];
    const int level = RoutedLevel(static_cast<int>(i));
    DecoderState state;
    state.aligned = layer.aligner.Forward(tgt, query_pos, encoded.Level(level), level);
    const Tensor cross_query = Add(state.aligned.content, state.aligned.pos);
    const Tensor cross = layer.cross_attn.Forward(cross_query, state.aligned.ref_points, encoded);
    tgt = layer.norm1(Add(tgt, cross));
    tgt = layer.norm2(Add(tgt, SelfAttention(layer, tgt, query_pos)));
    tgt = layer.norm3(Add(tgt, layer.ffn2(Relu(layer.ffn1(tgt)))));
    state.content = tgt;
    states.push_back(std::move(state));
  }
  return states;
}

LayerPrediction Detector::Heads(const Tensor& content) const {
  LayerPrediction pred;
  pred.logits = class_head_(content);
  pred.probs = Softmax(pred.logits, -1);
  pred.boxes = Sigmoid(box_head_(content));
  return pred;
}

std::vector<LayerPrediction> Detector::Forward(const Tensor& image) const {
  const FeaturePyramid encoded = Encode(Backbone(image));
  const auto states = Decode(encoded, query_content_, query_pos_);
  std::vector<LayerPrediction> out;
  for (const auto& s : states) {
    LayerPrediction p = Heads(s.content);
    p.ref_boxes = s.aligned.ref_boxes;
    p.level = s.aligned.level;
    p.cross_attn_input_shape = s.aligned.content.shape();
    out.push_back(std::move(p));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

constexpr char kMagic[8] = {'D', 'E', 'T', 'R', 'K', 'I', 'T', '\0'};

static_assert(std::endian::native == std::endian::little, "checkpoint IO assumes a little-endian host");

template <typename T>
void WritePod(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T ReadPod(std::istream& is, const std::string& path) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) Fail(ErrorKind::kIo, "checkpoint " + path + " is truncated");
  return v;
}

std::string ReadString(std::istream& is, const std::string& path, std::uint64_t max_len) {
  const auto len = ReadPod<std::uint64_t>(is, path);
  if (len > max_len) Fail(ErrorKind::kValidation, "checkpoint " + path + " has an implausible string length");
  std::string s(len, '\0');
  is.read(s.data(), static_cast<std::streamsize>(len));
  if (!is) Fail(ErrorKind::kIo, "checkpoint " + path + " is truncated");
  return s;
}

}  // namespace

void SaveCheckpoint(const std::string& path, const Detector& detector) {
  std::ofstream os(path, std::ios::binary);
  if (!os) Fail(ErrorKind::kIo, "cannot open " + path + " for writing");
  os.write(kMagic, sizeof(kMagic));
  WritePod(os, kCheckpointVersion);
  const std::string cfg = detector.config().ToJson();
  WritePod(os, static_cast<std::uint64_t>(cfg.size()));
  os.write(cfg.data(), static_cast<std::streamsize>(cfg.size()));
  const auto& params = detector.params().all();
  WritePod(os, static_cast<std::uint64_t>(params.size()));
  for (const auto& p : params) {
    WritePod(os, static_cast<std::uint64_t>(p.name.size()));
    os.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
    WritePod(os, static_cast<std::uint32_t>(p.value.rank()));
    for (auto e : p.value.shape()) WritePod(os, static_cast<std::int64_t>(e));
    const auto data = p.value.data();
    os.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size() * sizeof(double)));
  }
  if (!os) Fail(ErrorKind::kIo, "failed writing checkpoint " + path);
}

Detector LoadCheckpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) Fail(ErrorKind::kIo, "cannot open checkpoint " + path);
  char magic[8];
  is.read(magic, sizeof(magic));
  if (!is || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    Fail(ErrorKind::kValidation, path + " is not a detr-kit checkpoint");
  }
  const auto version = ReadPod<std::uint32_t>(is, path);
  if (version != kCheckpointVersion) {
    Fail(ErrorKind::kValidation, "checkpoint " + path + " has format version " + std::to_string(version) +
                                     ", expected " + std::to_string(kCheckpointVersion));
  }
  const DetectorConfig config = DetectorConfig::FromJson(ReadString(is, path, 1 << 20));
  Detector detector(config, 0);
  const auto count = ReadPod<std::uint64_t>(is, path);
  if (count != detector.params().size()) {
    Fail(ErrorKind::kValidation, "checkpoint " + path + " stores " + std::to_string(count) +
                                     " parameters but its config builds " +
                                     std::to_string(detector.params().size()));
  }
  for (std::uint64_t i = 0; i < count; ++i) {
    const std::string name = ReadString(is, path, 4096);
    const auto rank = ReadPod<std::uint32_t>(is, path);
    if (rank > 8) Fail(ErrorKind::kValidation, "checkpoint " + path + ": parameter " + name + " has rank " + std::to_string(rank));
    Shape shape(rank);
    for (auto& e : shape) e = ReadPod<std::int64_t>(is, path);
    if (!detector.params().Contains(name)) {
      Fail(ErrorKind::kValidation, "checkpoint " + path + " has unknown parameter " + name);
    }
    Tensor target = detector.params().Get(name);
    if (target.shape() != shape) {
      Fail(ErrorKind::kValidation, "checkpoint " + path + ": parameter " + name + " has shape " + ShapeString(shape) +
                                       " but the config expects " + ShapeString(target.shape()));
    }
    auto dst = target.mutable_data();
    is.read(reinterpret_cast<char*>(dst.data()), static_cast<std::streamsize>(dst.size() * sizeof(double)));
    if (!is) Fail(ErrorKind::kIo, "checkpoint " + path + " is truncated");
  }
  return detector;
}

}  // namespace detr
