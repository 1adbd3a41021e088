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

#include "detr/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "detr/error.hpp"

namespace detr {

Tensor Project(const Tensor& out, const Tensor& weights) { return Sum(Mul(out, weights)); }

GradCheckResult GradCheck(const std::function<Tensor(const std::vector<Tensor>&)>& loss,
                          const std::vector<Tensor>& inputs, const GradCheckOptions& options) {
  for (const auto& t : inputs) {
    t.set_requires_grad(true);
    t.zero_grad();
  }
  Tape::Active().Clear();
  const Tensor value = loss(inputs);
  Require(value.numel() == 1, ErrorKind::kContract, "gradcheck loss must be a scalar");
  Backward(value);

  GradCheckResult result;
  NoGradGuard no_grad;
  for (const auto& t : inputs) {
    const std::int64_t n = t.numel();
    const std::int64_t stride = options.max_coords > 0 ? std::max<std::int64_t>(1, n / options.max_coords) : 1;
    std::vector<double> analytic(static_cast<std::size_t>(n), 0.0);
    if (t.has_grad()) {
      const auto g = t.grad();
      std::copy(g.begin(), g.end(), analytic.begin());
    }
    auto data = t.mutable_data();
    double diff2 = 0.0, a2 = 0.0, n2 = 0.0;
    for (std::int64_t i = 0; i < n; i += stride) {
      const auto iu = static_cast<std::size_t>(i);
      const double saved = data[iu];
      data[iu] = saved + options.step;
      const double up = loss(inputs).item();
      data[iu] = saved - options.step;
      const double down = loss(inputs).item();
      data[iu] = saved;
      const double numeric = (up - down) / (2.0 * options.step);
      diff2 += (analytic[iu] - numeric) * (analytic[iu] - numeric);
      a2 += analytic[iu] * analytic[iu];
      n2 += numeric * numeric;
      ++result.coords;
    }
    const double denom = std::max({std::sqrt(a2), std::sqrt(n2), 1e-12});
    result.rel_error = std::max(result.rel_error, std::sqrt(diff2) / denom);
  }
  for (const auto& t : inputs) t.zero_grad();
  return result;
}

}  // namespace detr
