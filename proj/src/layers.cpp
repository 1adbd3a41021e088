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

#include "detr/layers.hpp"

#include <cmath>
#include <numbers>

#include "detr/error.hpp"

namespace detr {

LinearLayer LinearLayer::Create(ParamStore& store, const std::string& name, std::int64_t in, std::int64_t out,
                                ParamGroup group, Rng& rng, Init init) {
  LinearLayer layer;
  Tensor w = init == Init::kXavier ? XavierUniform(rng, in, out, {in, out}) : Tensor::Zeros({in, out});
  layer.weight = store.Add(name + ".weight", w, group);
  layer.bias = store.Add(name + ".bias", Tensor::Zeros({out}), group);
  return layer;
}

LinearLayer LinearLayer::Bind(const ParamStore& store, const std::string& name) {
  return {store.Get(name + ".weight"), store.Get(name + ".bias")};
}

Mlp Mlp::Create(ParamStore& store, const std::string& name, const std::vector<std::int64_t>& widths,
                ParamGroup group, Rng& rng) {
  Mlp mlp;
  for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
    mlp.layers.push_back(
        LinearLayer::Create(store, name + "." + std::to_string(i), widths[i], widths[i + 1], group, rng));
  }
  return mlp;
}

Tensor Mlp::operator()(const Tensor& x) const {
  Tensor h = x;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    h = layers[i](h);
    if (i + 1 < layers.size()) h = Relu(h);
  }
  return h;
}

Norm Norm::Create(ParamStore& store, const std::string& name, std::int64_t dim, ParamGroup group) {
  Norm n;
  n.gamma = store.Add(name + ".gamma", Tensor::Full({dim}, 1.0), group);
  n.beta = store.Add(name + ".beta", Tensor::Zeros({dim}), group);
  return n;
}

Tensor SineEmbed(const Tensor& points, std::int64_t dim, double temperature) {
  if (points.rank() != 2 || points.dim(1) != 2) {
    Fail(ErrorKind::kDimension, "sine embedding expects [P, 2] points, got " + ShapeString(points.shape()));
  }
  if (dim % 4 != 0) Fail(ErrorKind::kContract, "sine embedding dim must be a multiple of 4");
  const std::int64_t p_count = points.dim(0);
  const std::int64_t half = dim / 2;
  std::vector<double> freq(static_cast<std::size_t>(half));
  for (std::int64_t j = 0; j < half; ++j) {
    freq[static_cast<std::size_t>(j)] =
        2.0 * std::numbers::pi /
        std::pow(temperature, 2.0 * static_cast<double>(j / 2) / static_cast<double>(half));
  }
  Tensor out = Tensor::Zeros({p_count, dim});
  {
    auto pd = points.data();
    auto o = out.mutable_data();
    for (std::int64_t p = 0; p < p_count; ++p) {
      // y first, then x.
      const double coord[2] = {pd[static_cast<std::size_t>(2 * p + 1)], pd[static_cast<std::size_t>(2 * p)]};
      for (int part = 0; part < 2; ++part) {
        for (std::int64_t j = 0; j < half; ++j) {
          const double arg = coord[part] * freq[static_cast<std::size_t>(j)];
          o[static_cast<std::size_t>(p * dim + part * half + j)] = (j % 2 == 0) ? std::sin(arg) : std::cos(arg);
        }
      }
    }
  }
  if (GradEnabled() && points.requires_grad()) {
    out.set_requires_grad(true);
    Tape::Active().Record({points}, out, [points, out, freq, dim, half, p_count]() mutable {
      auto go = out.grad();
      auto pd = points.data();
      auto gp = points.mutable_grad();
      for (std::int64_t p = 0; p < p_count; ++p) {
        const double coord[2] = {pd[static_cast<std::size_t>(2 * p + 1)], pd[static_cast<std::size_t>(2 * p)]};
        double g[2] = {0.0, 0.0};
        for (int part = 0; part < 2; ++part) {
          for (std::int64_t j = 0; j < half; ++j) {
            const double f = freq[static_cast<std::size_t>(j)];
            const double arg = coord[part] * f;
            const double d = (j % 2 == 0) ? f * std::cos(arg) : -f * std::sin(arg);
            g[part] += go[static_cast<std::size_t>(p * dim + part * half + j)] * d;
          }
        }
        gp[static_cast<std::size_t>(2 * p + 1)] += g[0];
        gp[static_cast<std::size_t>(2 * p)] += g[1];
      }
    });
  }
  return out;
}

}  // namespace detr
