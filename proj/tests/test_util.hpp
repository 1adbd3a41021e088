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

#pragma once
// Small helpers shared by the unit tests.

#include <cmath>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "detr/random.hpp"
#include "detr/tensor.hpp"

namespace detr::test {

inline Tensor RandomTensor(Rng& rng, Shape shape, double lo = -1.0, double hi = 1.0, bool requires_grad = false) {
  std::vector<double> v(static_cast<std::size_t>(NumElements(shape)));
  for (auto& x : v) x = rng.Uniform(lo, hi);
  return Tensor::FromData(std::move(shape), std::move(v), requires_grad);
}

inline double MaxAbsDiff(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) return INFINITY;
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

inline std::vector<double> ToVector(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

// Fresh empty directory under the system temp dir.
inline std::filesystem::path ScratchDir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("detr_kit_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace detr::test
