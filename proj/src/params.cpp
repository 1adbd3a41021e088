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

#include "detr/params.hpp"

#include <cmath>
#include <numbers>

#include "detr/error.hpp"
#include "detr/optim.hpp"

namespace detr {

double Rng::Normal(double mean, double stddev) {
  double u1 = Uniform();
  while (u1 <= 0.0) u1 = Uniform();
  const double u2 = Uniform();
  return mean + stddev * std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

Tensor ParamStore::Add(std::string name, Tensor value, ParamGroup group) {
  if (Contains(name)) Fail(ErrorKind::kContract, "duplicate parameter name " + name);
  value.set_requires_grad(true);
  params_.push_back(Parameter{std::move(name), value, group});
  return value;
}

Tensor ParamStore::Get(std::string_view name) const {
  for (const auto& p : params_) {
    if (p.name == name) return p.value;
  }
  Fail(ErrorKind::kContract, "unknown parameter " + std::string(name));
}

bool ParamStore::Contains(std::string_view name) const {
  for (const auto& p : params_) {
    if (p.name == name) return true;
  }
  return false;
}

std::int64_t ParamStore::NumScalars() const {
  std::int64_t n = 0;
  for (const auto& p : params_) n += static_cast<std::int64_t>(p.value.numel());
  return n;
}

void ParamStore::ZeroGrad() {
  for (auto& p : params_) p.value.zero_grad();
}

Tensor XavierUniform(Rng& rng, std::int64_t fan_in, std::int64_t fan_out, Shape shape) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::vector<double> data(static_cast<std::size_t>(NumElements(shape)));
  for (double& v : data) v = rng.Uniform(-bound, bound);
  return Tensor::FromData(std::move(shape), std::move(data));
}

Tensor KaimingUniform(Rng& rng, std::int64_t fan_in, Shape shape) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  std::vector<double> data(static_cast<std::size_t>(NumElements(shape)));
  for (double& v : data) v = rng.Uniform(-bound, bound);
  return Tensor::FromData(std::move(shape), std::move(data));
}

Tensor NormalInit(Rng& rng, Shape shape, double stddev) {
  std::vector<double> data(static_cast<std::size_t>(NumElements(shape)));
  for (double& v : data) v = rng.Normal(0.0, stddev);
  return Tensor::FromData(std::move(shape), std::move(data));
}

// ---------------------------------------------------------------------------
// Adam

void AdamUpdate(std::span<double> param, std::span<const double> grad, AdamMoments& moments,
                std::int64_t step, double lr, double beta1, double beta2, double epsilon) {
  if (moments.m.size() != param.size()) {
    moments.m.assign(param.size(), 0.0);
    moments.v.assign(param.size(), 0.0);
  }
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step));
  for (std::size_t i = 0; i < param.size(); ++i) {
    const double g = grad[i];
    moments.m[i] = beta1 * moments.m[i] + (1.0 - beta1) * g;
    moments.v[i] = beta2 * moments.v[i] + (1.0 - beta2) * g * g;
    const double mhat = moments.m[i] / bc1;
    const double vhat = moments.v[i] / bc2;
    param[i] -= lr * mhat / (std::sqrt(vhat) + epsilon);
  }
}

double Adam::LearningRate(ParamGroup group) const {
  return lr_scale_ * (group == ParamGroup::kBackbone ? config_.lr_backbone : config_.lr_detector);
}

double Adam::Step(ParamStore& params) {
  auto& all = params.all();
  if (moments_.size() != all.size()) moments_.resize(all.size());

  double sq = 0.0;
  for (const auto& p : all) {
    if (!p.value.has_grad()) continue;
    for (double g : p.value.grad()) {
      if (!std::isfinite(g)) {
        Fail(ErrorKind::kNumeric, "non-finite gradient in parameter " + p.name + "; step rejected");
      }
      sq += g * g;
    }
  }
  const double norm = std::sqrt(sq);
  const double scale = (config_.clip_norm > 0.0 && norm > config_.clip_norm) ? config_.clip_norm / norm : 1.0;

  ++step_;
  std::vector<double> scaled;
  for (std::size_t i = 0; i < all.size(); ++i) {
    auto& p = all[i];
    if (!p.value.has_grad()) continue;
    auto g = p.value.grad();
    scaled.assign(g.begin(), g.end());
    if (scale != 1.0) {
      for (double& v : scaled) v *= scale;
    }
    AdamUpdate(p.value.mutable_data(), scaled, moments_[i], step_, LearningRate(p.group), config_.beta1,
               config_.beta2, config_.epsilon);
  }
  params.ZeroGrad();
  return norm;
}

}  // namespace detr
