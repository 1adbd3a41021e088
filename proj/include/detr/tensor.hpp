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

// Dense f64 tensors with a reverse-mode tape.
//
// Every differentiable op appends one record to the thread's active tape when
// at least one input requires a gradient. Records are appended in execution
// order, so the tape is topologically sorted by construction and backward()
// simply replays it in reverse, once per record, then clears it.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace detr {

using Shape = std::vector<std::int64_t>;

std::int64_t NumElements(const Shape& shape);
std::string ShapeString(const Shape& shape);

class Tensor {
 public:
  Tensor() = default;

  static Tensor Zeros(Shape shape, bool requires_grad = false);
  static Tensor Full(Shape shape, double value, bool requires_grad = false);
  static Tensor FromData(Shape shape, std::vector<double> data,
                         bool requires_grad = false);
  static Tensor Scalar(double value, bool requires_grad = false);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const;
  int rank() const { return static_cast<int>(shape().size()); }
  // Negative axes count from the back.
  std::int64_t dim(int axis) const;
  std::size_t numel() const;

  std::span<const double> data() const;
  std::span<double> mutable_data() const;
  double item() const;
  double at(std::initializer_list<std::int64_t> index) const;

  bool requires_grad() const;
  void set_requires_grad(bool value) const;
  bool has_grad() const;
  std::span<const double> grad() const;
  // Allocates a zero gradient buffer when absent.
  std::span<double> mutable_grad() const;
  void zero_grad() const;

  // Same storage is not shared: the result is an independent constant copy.
  Tensor detach() const;
  Tensor clone(bool requires_grad = false) const;

  const void* id() const { return impl_.get(); }

 private:
  struct Impl {
    Shape shape;
    std::vector<double> data;
    std::vector<double> grad;
    bool requires_grad = false;
  };
  std::shared_ptr<Impl> impl_;
};

class Tape {
 public:
  using BackwardFn = std::function<void()>;

  // The tape ops record into on this thread.
  static Tape& Active();

  void Record(std::vector<Tensor> inputs, Tensor output, BackwardFn fn);
  // Seeds d(loss)/d(loss) = 1, replays every record in reverse, then clears.
  void Backward(const Tensor& loss);
  void Clear();
  std::size_t size() const { return records_.size(); }

 private:
  struct Entry {
    std::vector<Tensor> inputs;
    Tensor output;
    BackwardFn fn;
  };
  std::vector<Entry> records_;
};

// While alive, ops on this thread record nothing.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool GradEnabled();

// loss must be a scalar (one element).
void Backward(const Tensor& loss);

// ---------------------------------------------------------------------------
// Ops. Elementwise binary ops broadcast numpy-style.

Tensor Add(const Tensor& a, const Tensor& b);
Tensor Sub(const Tensor& a, const Tensor& b);
Tensor Mul(const Tensor& a, const Tensor& b);
Tensor Div(const Tensor& a, const Tensor& b);
Tensor Maximum(const Tensor& a, const Tensor& b);
Tensor Minimum(const Tensor& a, const Tensor& b);

Tensor Scale(const Tensor& x, double s);
Tensor AddScalar(const Tensor& x, double s);
Tensor Neg(const Tensor& x);
Tensor Relu(const Tensor& x);
Tensor Sigmoid(const Tensor& x);
Tensor Exp(const Tensor& x);
Tensor Log(const Tensor& x);
Tensor Abs(const Tensor& x);

Tensor MatMul(const Tensor& a, const Tensor& b);
// x[..., in] * weight[in, out] + bias[out]; bias may be undefined.
Tensor Linear(const Tensor& x, const Tensor& weight, const Tensor& bias);

Tensor Softmax(const Tensor& x, int axis);
Tensor LogSoftmax(const Tensor& x, int axis);
Tensor LayerNorm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                 int axis = -1, double eps = 1e-5);

Tensor Sum(const Tensor& x);
Tensor Sum(const Tensor& x, int axis, bool keepdim = false);
Tensor Mean(const Tensor& x);

Tensor Reshape(const Tensor& x, Shape shape);
Tensor Transpose(const Tensor& x);  // swaps the last two axes
Tensor Concat(const std::vector<Tensor>& parts, int axis);
Tensor Slice(const Tensor& x, int axis, std::int64_t start, std::int64_t length);
// Rows of x[R, ...] selected along axis 0.
Tensor IndexRows(const Tensor& x, std::span<const std::int64_t> rows);
// out[r] = x[r, index[r]] for x[R, C].
Tensor Pick(const Tensor& x, std::span<const std::int64_t> index);

// input[C, H, W], weight[O, C, kh, kw], bias[O] -> [O, Ho, Wo].
Tensor Conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias,
              int stride, int padding);

}  // namespace detr
