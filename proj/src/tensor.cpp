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

#include "detr/tensor.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <sstream>

#include "detr/error.hpp"
#include "detr/parallel.hpp"

namespace detr {

std::int64_t NumElements(const Shape& shape) {
  std::int64_t n = 1;
  for (auto e : shape) n *= e;
  return n;
}

std::string ShapeString(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    os << shape[i];
  }
  os << ']';
  return os.str();
}

// ---------------------------------------------------------------------------
// Tensor

Tensor Tensor::Zeros(Shape shape, bool requires_grad) {
  return Full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::Full(Shape shape, double value, bool requires_grad) {
  for (auto e : shape) {
    if (e <= 0) Fail(ErrorKind::kDimension, "non-positive extent in shape " + ShapeString(shape));
  }
  Tensor t;
  t.impl_ = std::make_shared<Impl>();
  t.impl_->data.assign(static_cast<std::size_t>(NumElements(shape)), value);
  t.impl_->shape = std::move(shape);
  t.impl_->requires_grad = requires_grad;
  return t;
}

Tensor Tensor::FromData(Shape shape, std::vector<double> data, bool requires_grad) {
  for (auto e : shape) {
    if (e <= 0) Fail(ErrorKind::kDimension, "non-positive extent in shape " + ShapeString(shape));
  }
  if (static_cast<std::int64_t>(data.size()) != NumElements(shape)) {
    Fail(ErrorKind::kDimension, "data length " + std::to_string(data.size()) +
                                    " does not match shape " + ShapeString(shape));
  }
  Tensor t;
  t.impl_ = std::make_shared<Impl>();
  t.impl_->shape = std::move(shape);
  t.impl_->data = std::move(data);
  t.impl_->requires_grad = requires_grad;
  return t;
}

Tensor Tensor::Scalar(double value, bool requires_grad) {
  return FromData({1}, {value}, requires_grad);
}

const Shape& Tensor::shape() const { return impl_->shape; }

std::int64_t Tensor::dim(int axis) const {
  const int r = rank();
  const int a = axis < 0 ? axis + r : axis;
  if (a < 0 || a >= r) {
    Fail(ErrorKind::kDimension, "axis " + std::to_string(axis) + " out of range for shape " +
                                    ShapeString(shape()));
  }
  return impl_->shape[static_cast<std::size_t>(a)];
}

std::size_t Tensor::numel() const { return impl_->data.size(); }

std::span<const double> Tensor::data() const { return impl_->data; }
std::span<double> Tensor::mutable_data() const { return impl_->data; }

double Tensor::item() const {
  if (numel() != 1) Fail(ErrorKind::kContract, "item() on tensor of shape " + ShapeString(shape()));
  return impl_->data[0];
}

double Tensor::at(std::initializer_list<std::int64_t> index) const {
  if (index.size() != shape().size()) Fail(ErrorKind::kDimension, "index rank mismatch");
  std::int64_t flat = 0;
  std::size_t d = 0;
  for (auto i : index) {
    const auto extent = shape()[d++];
    if (i < 0 || i >= extent) Fail(ErrorKind::kDimension, "index out of range");
    flat = flat * extent + i;
  }
  return impl_->data[static_cast<std::size_t>(flat)];
}

bool Tensor::requires_grad() const { return impl_ && impl_->requires_grad; }
void Tensor::set_requires_grad(bool value) const { impl_->requires_grad = value; }
bool Tensor::has_grad() const { return impl_ && !impl_->grad.empty(); }
std::span<const double> Tensor::grad() const { return impl_->grad; }

std::span<double> Tensor::mutable_grad() const {
  if (impl_->grad.empty()) impl_->grad.assign(impl_->data.size(), 0.0);
  return impl_->grad;
}

void Tensor::zero_grad() const { impl_->grad.clear(); }

Tensor Tensor::detach() const { return clone(false); }

Tensor Tensor::clone(bool requires_grad) const {
  return FromData(impl_->shape, impl_->data, requires_grad);
}

// ---------------------------------------------------------------------------
// Tape

namespace {
thread_local bool g_grad_enabled = true;
}

bool GradEnabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

Tape& Tape::Active() {
  thread_local Tape tape;
  return tape;
}

void Tape::Record(std::vector<Tensor> inputs, Tensor output, BackwardFn fn) {
  records_.push_back(Entry{std::move(inputs), std::move(output), std::move(fn)});
}

void Tape::Backward(const Tensor& loss) {
  if (!loss.defined() || loss.numel() != 1) {
    Fail(ErrorKind::kContract, "backward() needs a scalar loss, got shape " +
                                   (loss.defined() ? ShapeString(loss.shape()) : std::string("<undefined>")));
  }
  if (!loss.requires_grad()) {
    Fail(ErrorKind::kContract, "backward() on a loss that is not on the tape");
  }
  Tensor seed = loss;
  seed.mutable_grad()[0] += 1.0;
  for (auto it = records_.rbegin(); it != records_.rend(); ++it) {
    if (it->output.has_grad()) it->fn();
  }
  Clear();
}

void Tape::Clear() { records_.clear(); }

void Backward(const Tensor& loss) { Tape::Active().Backward(loss); }

namespace {

bool ShouldRecord(std::initializer_list<const Tensor*> inputs) {
  if (!g_grad_enabled) return false;
  for (const Tensor* t : inputs) {
    if (t->defined() && t->requires_grad()) return true;
  }
  return false;
}

void RecordOp(std::vector<Tensor> inputs, Tensor& out, Tape::BackwardFn fn) {
  out.set_requires_grad(true);
  Tape::Active().Record(std::move(inputs), out, std::move(fn));
}

int NormalizeAxis(int axis, int rank) {
  const int a = axis < 0 ? axis + rank : axis;
  if (a < 0 || a >= rank) {
    Fail(ErrorKind::kDimension, "axis " + std::to_string(axis) + " invalid for rank " + std::to_string(rank));
  }
  return a;
}

// Views shape as [outer, n, inner] around `axis`.
struct AxisView {
  std::int64_t outer = 1, n = 1, inner = 1;
};

AxisView ViewAround(const Shape& shape, int axis) {
  AxisView v;
  for (int i = 0; i < axis; ++i) v.outer *= shape[static_cast<std::size_t>(i)];
  v.n = shape[static_cast<std::size_t>(axis)];
  for (std::size_t i = static_cast<std::size_t>(axis) + 1; i < shape.size(); ++i) v.inner *= shape[i];
  return v;
}

// ---------------------------------------------------------------------------
// Broadcasting

Shape BroadcastShapes(const Shape& a, const Shape& b) {
  const std::size_t r = std::max(a.size(), b.size());
  Shape out(r);
  for (std::size_t i = 0; i < r; ++i) {
    const std::int64_t ea = i < r - a.size() ? 1 : a[i - (r - a.size())];
    const std::int64_t eb = i < r - b.size() ? 1 : b[i - (r - b.size())];
    if (ea != eb && ea != 1 && eb != 1) {
      Fail(ErrorKind::kDimension, "cannot broadcast " + ShapeString(a) + " with " + ShapeString(b));
    }
    out[i] = std::max(ea, eb);
  }
  return out;
}

// Strides of `in` aligned to `out`, zero on broadcast axes.
std::vector<std::int64_t> BroadcastStrides(const Shape& in, const Shape& out) {
  const std::size_t r = out.size();
  std::vector<std::int64_t> strides(r, 0);
  std::int64_t s = 1;
  for (std::size_t k = 0; k < in.size(); ++k) {
    const std::size_t i = in.size() - 1 - k;
    const std::size_t o = r - 1 - k;
    strides[o] = in[i] == 1 ? 0 : s;
    s *= in[i];
  }
  return strides;
}

// Calls fn(out_index, a_index, b_index) for every output element.
template <typename Fn>
void ForEachBroadcast(const Shape& out, const Shape& a, const Shape& b, Fn&& fn) {
  const std::int64_t total = NumElements(out);
  if (a == out && b == out) {
    for (std::int64_t i = 0; i < total; ++i) fn(i, i, i);
    return;
  }
  if (a == out && NumElements(b) == 1) {
    for (std::int64_t i = 0; i < total; ++i) fn(i, i, 0);
    return;
  }
  const auto sa = BroadcastStrides(a, out);
  const auto sb = BroadcastStrides(b, out);
  const std::size_t r = out.size();
  // Innermost axis handled as a tight loop.
  const std::int64_t inner = out[r - 1];
  const std::int64_t ia_step = sa[r - 1], ib_step = sb[r - 1];
  std::vector<std::int64_t> counter(r, 0);
  std::int64_t ia = 0, ib = 0;
  for (std::int64_t base = 0; base < total; base += inner) {
    for (std::int64_t j = 0; j < inner; ++j) fn(base + j, ia + j * ia_step, ib + j * ib_step);
    for (int d = static_cast<int>(r) - 2; d >= 0; --d) {
      const auto du = static_cast<std::size_t>(d);
      ++counter[du];
      ia += sa[du];
      ib += sb[du];
      if (counter[du] < out[du]) break;
      ia -= sa[du] * out[du];
      ib -= sb[du] * out[du];
      counter[du] = 0;
    }
  }
}

// f(a, b) with partials da(a, b), db(a, b).
template <typename F, typename DA, typename DB>
Tensor BinaryOp(const Tensor& a, const Tensor& b, F f, DA da, DB db) {
  const Shape out_shape = BroadcastShapes(a.shape(), b.shape());
  Tensor out = Tensor::Zeros(out_shape);
  {
    auto o = out.mutable_data();
    auto ad = a.data();
    auto bd = b.data();
    ForEachBroadcast(out_shape, a.shape(), b.shape(), [&](std::int64_t i, std::int64_t ia, std::int64_t ib) {
      o[static_cast<std::size_t>(i)] = f(ad[static_cast<std::size_t>(ia)], bd[static_cast<std::size_t>(ib)]);
    });
  }
  if (ShouldRecord({&a, &b})) {
    RecordOp({a, b}, out, [a, b, out, da, db]() mutable {
      auto go = out.grad();
      auto ad = a.data();
      auto bd = b.data();
      std::span<double> ga, gb;
      if (a.requires_grad()) ga = a.mutable_grad();
      if (b.requires_grad()) gb = b.mutable_grad();
      ForEachBroadcast(out.shape(), a.shape(), b.shape(), [&](std::int64_t i, std::int64_t ia, std::int64_t ib) {
        const double g = go[static_cast<std::size_t>(i)];
        const double av = ad[static_cast<std::size_t>(ia)];
        const double bv = bd[static_cast<std::size_t>(ib)];
        if (!ga.empty()) ga[static_cast<std::size_t>(ia)] += g * da(av, bv);
        if (!gb.empty()) gb[static_cast<std::size_t>(ib)] += g * db(av, bv);
      });
    });
  }
  return out;
}

// f(x) with derivative df(x, y) where y = f(x).
template <typename F, typename DF>
Tensor UnaryOp(const Tensor& x, F f, DF df) {
  Tensor out = Tensor::Zeros(x.shape());
  {
    auto o = out.mutable_data();
    auto xd = x.data();
    for (std::size_t i = 0; i < o.size(); ++i) o[i] = f(xd[i]);
  }
  if (ShouldRecord({&x})) {
    RecordOp({x}, out, [x, out, df]() mutable {
      auto go = out.grad();
      auto xd = x.data();
      auto yd = out.data();
      auto gx = x.mutable_grad();
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += go[i] * df(xd[i], yd[i]);
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// GEMM kernels on row-major buffers. All accumulate into c.

// c[m,n] += a[m,k] * b[k,n]
void GemmNN(std::int64_t m, std::int64_t n, std::int64_t k, const double* a, const double* b, double* c) {
  ParallelFor(m, 16, [&](std::int64_t i0, std::int64_t i1) {
    for (std::int64_t i = i0; i < i1; ++i) {
      double* crow = c + i * n;
      const double* arow = a + i * k;
      for (std::int64_t p = 0; p < k; ++p) {
        const double av = arow[p];
        if (av == 0.0) continue;
        const double* brow = b + p * n;
        for (std::int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
      }
    }
  });
}

// c[m,k] += g[m,n] * b[k,n]^T
void GemmNT(std::int64_t m, std::int64_t n, std::int64_t k, const double* g, const double* b, double* c) {
  ParallelFor(m, 16, [&](std::int64_t i0, std::int64_t i1) {
    for (std::int64_t i = i0; i < i1; ++i) {
      const double* grow = g + i * n;
      double* crow = c + i * k;
      for (std::int64_t p = 0; p < k; ++p) {
        const double* brow = b + p * n;
        double s = 0.0;
        for (std::int64_t j = 0; j < n; ++j) s += grow[j] * brow[j];
        crow[p] += s;
      }
    }
  });
}

// c[k,n] += a[m,k]^T * g[m,n]
void GemmTN(std::int64_t m, std::int64_t n, std::int64_t k, const double* a, const double* g, double* c) {
  for (std::int64_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    const double* grow = g + i * n;
    for (std::int64_t p = 0; p < k; ++p) {
      const double av = arow[p];
      if (av == 0.0) continue;
      double* crow = c + p * n;
      for (std::int64_t j = 0; j < n; ++j) crow[j] += av * grow[j];
    }
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// Elementwise

Tensor Add(const Tensor& a, const Tensor& b) {
  return BinaryOp(
      a, b, [](double x, double y) { return x + y; }, [](double, double) { return 1.0; },
      [](double, double) { return 1.0; });
}

Tensor Sub(const Tensor& a, const Tensor& b) {
  return BinaryOp(
      a, b, [](double x, double y) { return x - y; }, [](double, double) { return 1.0; },
      [](double, double) { return -1.0; });
}

Tensor Mul(const Tensor& a, const Tensor& b) {
  return BinaryOp(
      a, b, [](double x, double y) { return x * y; }, [](double, double y) { return y; },
      [](double x, double) { return x; });
}

Tensor Div(const Tensor& a, const Tensor& b) {
  return BinaryOp(
      a, b, [](double x, double y) { return x / y; }, [](double, double y) { return 1.0 / y; },
      [](double x, double y) { return -x / (y * y); });
}

// Ties send the gradient to `a`.
Tensor Maximum(const Tensor& a, const Tensor& b) {
  return BinaryOp(
      a, b, [](double x, double y) { return x >= y ? x : y; },
      [](double x, double y) { return x >= y ? 1.0 : 0.0; }, [](double x, double y) { return x >= y ? 0.0 : 1.0; });
}

Tensor Minimum(const Tensor& a, const Tensor& b) {
  return BinaryOp(
      a, b, [](double x, double y) { return x <= y ? x : y; },
      [](double x, double y) { return x <= y ? 1.0 : 0.0; }, [](double x, double y) { return x <= y ? 0.0 : 1.0; });
}

Tensor Scale(const Tensor& x, double s) {
  return UnaryOp(x, [s](double v) { return v * s; }, [s](double, double) { return s; });
}

Tensor AddScalar(const Tensor& x, double s) {
  return UnaryOp(x, [s](double v) { return v + s; }, [](double, double) { return 1.0; });
}

Tensor Neg(const Tensor& x) { return Scale(x, -1.0); }

Tensor Relu(const Tensor& x) {
  return UnaryOp(x, [](double v) { return v > 0.0 ? v : 0.0; }, [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor Sigmoid(const Tensor& x) {
  return UnaryOp(
      x,
      [](double v) {
        if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
        const double e = std::exp(v);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor Exp(const Tensor& x) {
  return UnaryOp(x, [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

Tensor Log(const Tensor& x) {
  return UnaryOp(x, [](double v) { return std::log(v); }, [](double v, double) { return 1.0 / v; });
}

Tensor Abs(const Tensor& x) {
  return UnaryOp(
      x, [](double v) { return std::abs(v); },
      [](double v, double) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); });
}

// ---------------------------------------------------------------------------
// Contractions

Tensor MatMul(const Tensor& a, const Tensor& b) {
  if (a.rank() < 2 || b.rank() < 2) {
    Fail(ErrorKind::kDimension, "matmul needs rank >= 2, got " + ShapeString(a.shape()) + " and " +
                                    ShapeString(b.shape()));
  }
  const std::int64_t m = a.dim(-2), k = a.dim(-1), n = b.dim(-1);
  if (b.dim(-2) != k) {
    Fail(ErrorKind::kDimension, "matmul inner dimensions differ: " + ShapeString(a.shape()) + " x " +
                                    ShapeString(b.shape()));
  }
  const Shape batch_a(a.shape().begin(), a.shape().end() - 2);
  const Shape batch_b(b.shape().begin(), b.shape().end() - 2);
  Shape batch;
  try {
    batch = BroadcastShapes(batch_a.empty() ? Shape{1} : batch_a, batch_b.empty() ? Shape{1} : batch_b);
  } catch (const Error&) {
    Fail(ErrorKind::kDimension, "matmul batch dimensions not broadcastable: " + ShapeString(a.shape()) + " x " +
                                    ShapeString(b.shape()));
  }
  const Shape ba = batch_a.empty() ? Shape{1} : batch_a;
  const Shape bb = batch_b.empty() ? Shape{1} : batch_b;
  Shape out_shape = (batch_a.empty() && batch_b.empty()) ? Shape{} : batch;
  out_shape.push_back(m);
  out_shape.push_back(n);

  // (out batch, a batch, b batch) triples.
  std::vector<std::array<std::int64_t, 3>> pairs;
  ForEachBroadcast(batch, ba, bb, [&](std::int64_t i, std::int64_t ia, std::int64_t ib) {
    pairs.push_back({i, ia, ib});
  });

  Tensor out = Tensor::Zeros(out_shape);
  {
    double* o = out.mutable_data().data();
    const double* ad = a.data().data();
    const double* bd = b.data().data();
    for (const auto& [i, ia, ib] : pairs) GemmNN(m, n, k, ad + ia * m * k, bd + ib * k * n, o + i * m * n);
  }
  if (ShouldRecord({&a, &b})) {
    RecordOp({a, b}, out, [a, b, out, pairs, m, n, k]() mutable {
      const double* go = out.grad().data();
      if (a.requires_grad()) {
        double* ga = a.mutable_grad().data();
        const double* bd = b.data().data();
        for (const auto& [i, ia, ib] : pairs) GemmNT(m, n, k, go + i * m * n, bd + ib * k * n, ga + ia * m * k);
      }
      if (b.requires_grad()) {
        double* gb = b.mutable_grad().data();
        const double* ad = a.data().data();
        for (const auto& [i, ia, ib] : pairs) GemmTN(m, n, k, ad + ia * m * k, go + i * m * n, gb + ib * k * n);
      }
    });
  }
  return out;
}

Tensor Linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  if (weight.rank() != 2 || x.dim(-1) != weight.dim(0)) {
    Fail(ErrorKind::kDimension, "linear: input " + ShapeString(x.shape()) + " incompatible with weight " +
                                    ShapeString(weight.shape()));
  }
  const std::int64_t in = weight.dim(0), outd = weight.dim(1);
  if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != outd)) {
    Fail(ErrorKind::kDimension, "linear: bias " + ShapeString(bias.shape()) + " does not match weight " +
                                    ShapeString(weight.shape()));
  }
  const std::int64_t rows = static_cast<std::int64_t>(x.numel()) / in;
  Shape out_shape = x.shape();
  out_shape.back() = outd;
  Tensor out = Tensor::Zeros(out_shape);
  {
    double* o = out.mutable_data().data();
    if (bias.defined()) {
      const double* bd = bias.data().data();
      for (std::int64_t r = 0; r < rows; ++r) std::copy(bd, bd + outd, o + r * outd);
    }
    GemmNN(rows, outd, in, x.data().data(), weight.data().data(), o);
  }
  if (ShouldRecord({&x, &weight, &bias})) {
    RecordOp({x, weight, bias}, out, [x, weight, bias, out, rows, in, outd]() mutable {
      const double* go = out.grad().data();
      if (x.requires_grad()) GemmNT(rows, outd, in, go, weight.data().data(), x.mutable_grad().data());
      if (weight.requires_grad()) GemmTN(rows, outd, in, x.data().data(), go, weight.mutable_grad().data());
      if (bias.defined() && bias.requires_grad()) {
        double* gb = bias.mutable_grad().data();
        for (std::int64_t r = 0; r < rows; ++r) {
          for (std::int64_t j = 0; j < outd; ++j) gb[j] += go[r * outd + j];
        }
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Normalizations

Tensor Softmax(const Tensor& x, int axis) {
  const int ax = NormalizeAxis(axis, x.rank());
  const AxisView v = ViewAround(x.shape(), ax);
  Tensor out = Tensor::Zeros(x.shape());
  {
    auto xd = x.data();
    auto o = out.mutable_data();
    for (std::int64_t p = 0; p < v.outer; ++p) {
      for (std::int64_t q = 0; q < v.inner; ++q) {
        const std::int64_t base = p * v.n * v.inner + q;
        double mx = -INFINITY;
        for (std::int64_t i = 0; i < v.n; ++i) mx = std::max(mx, xd[static_cast<std::size_t>(base + i * v.inner)]);
        double s = 0.0;
        for (std::int64_t i = 0; i < v.n; ++i) {
          const auto idx = static_cast<std::size_t>(base + i * v.inner);
          o[idx] = std::exp(xd[idx] - mx);
          s += o[idx];
        }
        for (std::int64_t i = 0; i < v.n; ++i) o[static_cast<std::size_t>(base + i * v.inner)] /= s;
      }
    }
  }
  if (ShouldRecord({&x})) {
    RecordOp({x}, out, [x, out, v]() mutable {
      auto go = out.grad();
      auto y = out.data();
      auto gx = x.mutable_grad();
      for (std::int64_t p = 0; p < v.outer; ++p) {
        for (std::int64_t q = 0; q < v.inner; ++q) {
          const std::int64_t base = p * v.n * v.inner + q;
          double dot = 0.0;
          for (std::int64_t i = 0; i < v.n; ++i) {
            const auto idx = static_cast<std::size_t>(base + i * v.inner);
            dot += go[idx] * y[idx];
          }
          for (std::int64_t i = 0; i < v.n; ++i) {
            const auto idx = static_cast<std::size_t>(base + i * v.inner);
            gx[idx] += y[idx] * (go[idx] - dot);
          }
        }
      }
    });
  }
  return out;
}

Tensor LogSoftmax(const Tensor& x, int axis) {
  const int ax = NormalizeAxis(axis, x.rank());
  const AxisView v = ViewAround(x.shape(), ax);
  Tensor out = Tensor::Zeros(x.shape());
  {
    auto xd = x.data();
    auto o = out.mutable_data();
    for (std::int64_t p = 0; p < v.outer; ++p) {
      for (std::int64_t q = 0; q < v.inner; ++q) {
        const std::int64_t base = p * v.n * v.inner + q;
        double mx = -INFINITY;
        for (std::int64_t i = 0; i < v.n; ++i) mx = std::max(mx, xd[static_cast<std::size_t>(base + i * v.inner)]);
        double s = 0.0;
        for (std::int64_t i = 0; i < v.n; ++i) s += std::exp(xd[static_cast<std::size_t>(base + i * v.inner)] - mx);
        const double lse = mx + std::log(s);
        for (std::int64_t i = 0; i < v.n; ++i) {
          const auto idx = static_cast<std::size_t>(base + i * v.inner);
          o[idx] = xd[idx] - lse;
        }
      }
    }
  }
  if (ShouldRecord({&x})) {
    RecordOp({x}, out, [x, out, v]() mutable {
      auto go = out.grad();
      auto y = out.data();
      auto gx = x.mutable_grad();
      for (std::int64_t p = 0; p < v.outer; ++p) {
        for (std::int64_t q = 0; q < v.inner; ++q) {
          const std::int64_t base = p * v.n * v.inner + q;
          double total = 0.0;
          for (std::int64_t i = 0; i < v.n; ++i) total += go[static_cast<std::size_t>(base + i * v.inner)];
          for (std::int64_t i = 0; i < v.n; ++i) {
            const auto idx = static_cast<std::size_t>(base + i * v.inner);
            gx[idx] += go[idx] - std::exp(y[idx]) * total;
          }
        }
      }
    });
  }
  return out;
}

Tensor LayerNorm(const Tensor& x, const Tensor& gamma, const Tensor& beta, int axis, double eps) {
  const int ax = NormalizeAxis(axis, x.rank());
  const AxisView v = ViewAround(x.shape(), ax);
  if (gamma.numel() != static_cast<std::size_t>(v.n) || beta.numel() != static_cast<std::size_t>(v.n)) {
    Fail(ErrorKind::kDimension, "layer_norm: gamma " + ShapeString(gamma.shape()) + " / beta " +
                                    ShapeString(beta.shape()) + " do not match normalized extent " +
                                    std::to_string(v.n) + " of " + ShapeString(x.shape()));
  }
  Tensor out = Tensor::Zeros(x.shape());
  // Normalized values and inverse std kept for backward.
  auto xhat = std::make_shared<std::vector<double>>(x.numel());
  auto inv_std = std::make_shared<std::vector<double>>(static_cast<std::size_t>(v.outer * v.inner));
  {
    auto xd = x.data();
    auto g = gamma.data();
    auto b = beta.data();
    auto o = out.mutable_data();
    for (std::int64_t p = 0; p < v.outer; ++p) {
      for (std::int64_t q = 0; q < v.inner; ++q) {
        const std::int64_t base = p * v.n * v.inner + q;
        double mean = 0.0;
        for (std::int64_t i = 0; i < v.n; ++i) mean += xd[static_cast<std::size_t>(base + i * v.inner)];
        mean /= static_cast<double>(v.n);
        double var = 0.0;
        for (std::int64_t i = 0; i < v.n; ++i) {
          const double dlt = xd[static_cast<std::size_t>(base + i * v.inner)] - mean;
          var += dlt * dlt;
        }
        var /= static_cast<double>(v.n);
        const double is = 1.0 / std::sqrt(var + eps);
        (*inv_std)[static_cast<std::size_t>(p * v.inner + q)] = is;
        for (std::int64_t i = 0; i < v.n; ++i) {
          const auto idx = static_cast<std::size_t>(base + i * v.inner);
          const double h = (xd[idx] - mean) * is;
          (*xhat)[idx] = h;
          o[idx] = g[static_cast<std::size_t>(i)] * h + b[static_cast<std::size_t>(i)];
        }
      }
    }
  }
  if (ShouldRecord({&x, &gamma, &beta})) {
    RecordOp({x, gamma, beta}, out, [x, gamma, beta, out, v, xhat, inv_std]() mutable {
      auto go = out.grad();
      auto g = gamma.data();
      std::span<double> gx, gg, gb;
      if (x.requires_grad()) gx = x.mutable_grad();
      if (gamma.requires_grad()) gg = gamma.mutable_grad();
      if (beta.requires_grad()) gb = beta.mutable_grad();
      const double inv_n = 1.0 / static_cast<double>(v.n);
      for (std::int64_t p = 0; p < v.outer; ++p) {
        for (std::int64_t q = 0; q < v.inner; ++q) {
          const std::int64_t base = p * v.n * v.inner + q;
          double mean_gh = 0.0, mean_ghh = 0.0;
          for (std::int64_t i = 0; i < v.n; ++i) {
            const auto idx = static_cast<std::size_t>(base + i * v.inner);
            const double gh = go[idx] * g[static_cast<std::size_t>(i)];
            mean_gh += gh;
            mean_ghh += gh * (*xhat)[idx];
            if (!gg.empty()) gg[static_cast<std::size_t>(i)] += go[idx] * (*xhat)[idx];
            if (!gb.empty()) gb[static_cast<std::size_t>(i)] += go[idx];
          }
          if (gx.empty()) continue;
          mean_gh *= inv_n;
          mean_ghh *= inv_n;
          const double is = (*inv_std)[static_cast<std::size_t>(p * v.inner + q)];
          for (std::int64_t i = 0; i < v.n; ++i) {
            const auto idx = static_cast<std::size_t>(base + i * v.inner);
            const double gh = go[idx] * g[static_cast<std::size_t>(i)];
            gx[idx] += is * (gh - mean_gh - (*xhat)[idx] * mean_ghh);
          }
        }
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Reductions and layout

Tensor Sum(const Tensor& x) {
  double s = 0.0;
  for (double v : x.data()) s += v;
  Tensor out = Tensor::Scalar(s);
  if (ShouldRecord({&x})) {
    RecordOp({x}, out, [x, out]() mutable {
      const double g = out.grad()[0];
      for (double& v : x.mutable_grad()) v += g;
    });
  }
  return out;
}

Tensor Sum(const Tensor& x, int axis, bool keepdim) {
  const int ax = NormalizeAxis(axis, x.rank());
  const AxisView v = ViewAround(x.shape(), ax);
  Shape out_shape = x.shape();
  if (keepdim) {
    out_shape[static_cast<std::size_t>(ax)] = 1;
  } else {
    out_shape.erase(out_shape.begin() + ax);
    if (out_shape.empty()) out_shape.push_back(1);
  }
  Tensor out = Tensor::Zeros(out_shape);
  {
    auto xd = x.data();
    auto o = out.mutable_data();
    for (std::int64_t p = 0; p < v.outer; ++p) {
      for (std::int64_t i = 0; i < v.n; ++i) {
        for (std::int64_t q = 0; q < v.inner; ++q) {
          o[static_cast<std::size_t>(p * v.inner + q)] += xd[static_cast<std::size_t>((p * v.n + i) * v.inner + q)];
        }
      }
    }
  }
  if (ShouldRecord({&x})) {
    RecordOp({x}, out, [x, out, v]() mutable {
      auto go = out.grad();
      auto gx = x.mutable_grad();
      for (std::int64_t p = 0; p < v.outer; ++p) {
        for (std::int64_t i = 0; i < v.n; ++i) {
          for (std::int64_t q = 0; q < v.inner; ++q) {
            gx[static_cast<std::size_t>((p * v.n + i) * v.inner + q)] += go[static_cast<std::size_t>(p * v.inner + q)];
          }
        }
      }
    });
  }
  return out;
}

Tensor Mean(const Tensor& x) { return Scale(Sum(x), 1.0 / static_cast<double>(x.numel())); }

Tensor Reshape(const Tensor& x, Shape shape) {
  if (NumElements(shape) != static_cast<std::int64_t>(x.numel())) {
    Fail(ErrorKind::kDimension, "cannot reshape " + ShapeString(x.shape()) + " to " + ShapeString(shape));
  }
  Tensor out = Tensor::FromData(std::move(shape), std::vector<double>(x.data().begin(), x.data().end()));
  if (ShouldRecord({&x})) {
    RecordOp({x}, out, [x, out]() mutable {
      auto go = out.grad();
      auto gx = x.mutable_grad();
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += go[i];
    });
  }
  return out;
}

Tensor Transpose(const Tensor& x) {
  if (x.rank() < 2) Fail(ErrorKind::kDimension, "transpose needs rank >= 2, got " + ShapeString(x.shape()));
  const std::int64_t r = x.dim(-2), c = x.dim(-1);
  const std::int64_t batches = static_cast<std::int64_t>(x.numel()) / (r * c);
  Shape out_shape = x.shape();
  std::swap(out_shape[out_shape.size() - 1], out_shape[out_shape.size() - 2]);
  Tensor out = Tensor::Zeros(out_shape);
  {
    auto xd = x.data();
    auto o = out.mutable_data();
    for (std::int64_t b = 0; b < batches; ++b) {
      for (std::int64_t i = 0; i < r; ++i) {
        for (std::int64_t j = 0; j < c; ++j) {
          o[static_cast<std::size_t>(b * r * c + j * r + i)] = xd[static_cast<std::size_t>(b * r * c + i * c + j)];
        }
      }
    }
  }
  if (ShouldRecord({&x})) {
    RecordOp({x}, out, [x, out, r, c, batches]() mutable {
      auto go = out.grad();
      auto gx = x.mutable_grad();
      for (std::int64_t b = 0; b < batches; ++b) {
        for (std::int64_t i = 0; i < r; ++i) {
          for (std::int64_t j = 0; j < c; ++j) {
            gx[static_cast<std::size_t>(b * r * c + i * c + j)] += go[static_cast<std::size_t>(b * r * c + j * r + i)];
          }
        }
      }
    });
  }
  return out;
}

Tensor Concat(const std::vector<Tensor>& parts, int axis) {
  if (parts.empty()) Fail(ErrorKind::kContract, "concat of zero tensors");
  const int ax = NormalizeAxis(axis, parts[0].rank());
  Shape out_shape = parts[0].shape();
  std::int64_t total = 0;
  for (const auto& p : parts) {
    Shape a = p.shape(), b = parts[0].shape();
    if (a.size() != b.size()) Fail(ErrorKind::kDimension, "concat rank mismatch");
    a[static_cast<std::size_t>(ax)] = b[static_cast<std::size_t>(ax)] = 0;
    if (a != b) {
      Fail(ErrorKind::kDimension, "concat: " + ShapeString(p.shape()) + " incompatible with " +
                                      ShapeString(parts[0].shape()));
    }
    total += p.dim(ax);
  }
  out_shape[static_cast<std::size_t>(ax)] = total;
  const AxisView v = ViewAround(out_shape, ax);
  Tensor out = Tensor::Zeros(out_shape);
  std::vector<std::int64_t> offsets;
  {
    auto o = out.mutable_data();
    std::int64_t off = 0;
    for (const auto& p : parts) {
      offsets.push_back(off);
      const std::int64_t n = p.dim(ax);
      auto pd = p.data();
      for (std::int64_t q = 0; q < v.outer; ++q) {
        std::copy(pd.begin() + q * n * v.inner, pd.begin() + (q + 1) * n * v.inner,
                  o.begin() + (q * v.n + off) * v.inner);
      }
      off += n;
    }
  }
  bool record = false;
  for (const auto& p : parts) record = record || (GradEnabled() && p.requires_grad());
  if (record) {
    RecordOp(parts, out, [parts, out, offsets, v, ax]() mutable {
      auto go = out.grad();
      for (std::size_t k = 0; k < parts.size(); ++k) {
        if (!parts[k].requires_grad()) continue;
        const std::int64_t n = parts[k].dim(ax);
        auto gp = parts[k].mutable_grad();
        for (std::int64_t q = 0; q < v.outer; ++q) {
          for (std::int64_t i = 0; i < n * v.inner; ++i) {
            gp[static_cast<std::size_t>(q * n * v.inner + i)] +=
                go[static_cast<std::size_t>((q * v.n + offsets[k]) * v.inner + i)];
          }
        }
      }
    });
  }
  return out;
}

Tensor Slice(const Tensor& x, int axis, std::int64_t start, std::int64_t length) {
  const int ax = NormalizeAxis(axis, x.rank());
  const AxisView v = ViewAround(x.shape(), ax);
  if (start < 0 || length <= 0 || start + length > v.n) {
    Fail(ErrorKind::kDimension, "slice [" + std::to_string(start) + ", " + std::to_string(start + length) +
                                    ") out of range for axis of extent " + std::to_string(v.n));
  }
  Shape out_shape = x.shape();
  out_shape[static_cast<std::size_t>(ax)] = length;
  Tensor out = Tensor::Zeros(out_shape);
  {
    auto xd = x.data();
    auto o = out.mutable_data();
    for (std::int64_t q = 0; q < v.outer; ++q) {
      std::copy(xd.begin() + (q * v.n + start) * v.inner, xd.begin() + (q * v.n + start + length) * v.inner,
                o.begin() + q * length * v.inner);
    }
  }
  if (ShouldRecord({&x})) {
    RecordOp({x}, out, [x, out, v, start, length]() mutable {
      auto go = out.grad();
      auto gx = x.mutable_grad();
      for (std::int64_t q = 0; q < v.outer; ++q) {
        for (std::int64_t i = 0; i < length * v.inner; ++i) {
          gx[static_cast<std::size_t>((q * v.n + start) * v.inner + i)] +=
              go[static_cast<std::size_t>(q * length * v.inner + i)];
        }
      }
    });
  }
  return out;
}

Tensor IndexRows(const Tensor& x, std::span<const std::int64_t> rows) {
  if (rows.empty()) Fail(ErrorKind::kDimension, "index_rows with no rows");
  const std::int64_t n = x.dim(0);
  const std::int64_t width = static_cast<std::int64_t>(x.numel()) / n;
  for (auto r : rows) {
    if (r < 0 || r >= n) Fail(ErrorKind::kDimension, "row index " + std::to_string(r) + " out of range");
  }
  Shape out_shape = x.shape();
  out_shape[0] = static_cast<std::int64_t>(rows.size());
  Tensor out = Tensor::Zeros(out_shape);
  {
    auto xd = x.data();
    auto o = out.mutable_data();
    for (std::size_t i = 0; i < rows.size(); ++i) {
      std::copy(xd.begin() + rows[i] * width, xd.begin() + (rows[i] + 1) * width,
                o.begin() + static_cast<std::int64_t>(i) * width);
    }
  }
  if (ShouldRecord({&x})) {
    std::vector<std::int64_t> idx(rows.begin(), rows.end());
    RecordOp({x}, out, [x, out, idx, width]() mutable {
      auto go = out.grad();
      auto gx = x.mutable_grad();
      for (std::size_t i = 0; i < idx.size(); ++i) {
        for (std::int64_t j = 0; j < width; ++j) {
          gx[static_cast<std::size_t>(idx[i] * width + j)] += go[i * static_cast<std::size_t>(width) + static_cast<std::size_t>(j)];
        }
      }
    });
  }
  return out;
}

Tensor Pick(const Tensor& x, std::span<const std::int64_t> index) {
  if (x.rank() != 2 || static_cast<std::int64_t>(index.size()) != x.dim(0)) {
    Fail(ErrorKind::kDimension, "pick: expected [R, C] with R indices, got " + ShapeString(x.shape()) + " and " +
                                    std::to_string(index.size()) + " indices");
  }
  const std::int64_t c = x.dim(1);
  for (auto i : index) {
    if (i < 0 || i >= c) Fail(ErrorKind::kDimension, "pick index " + std::to_string(i) + " out of range");
  }
  std::vector<double> vals(index.size());
  for (std::size_t r = 0; r < index.size(); ++r) vals[r] = x.data()[r * static_cast<std::size_t>(c) + static_cast<std::size_t>(index[r])];
  Tensor out = Tensor::FromData({static_cast<std::int64_t>(index.size())}, std::move(vals));
  if (ShouldRecord({&x})) {
    std::vector<std::int64_t> idx(index.begin(), index.end());
    RecordOp({x}, out, [x, out, idx, c]() mutable {
      auto go = out.grad();
      auto gx = x.mutable_grad();
      for (std::size_t r = 0; r < idx.size(); ++r) gx[r * static_cast<std::size_t>(c) + static_cast<std::size_t>(idx[r])] += go[r];
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Convolution

Tensor Conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias, int stride, int padding) {
  if (input.rank() != 3 || weight.rank() != 4 || weight.dim(1) != input.dim(0)) {
    Fail(ErrorKind::kDimension, "conv2d: input " + ShapeString(input.shape()) + " incompatible with weight " +
                                    ShapeString(weight.shape()));
  }
  const std::int64_t c = input.dim(0), h = input.dim(1), w = input.dim(2);
  const std::int64_t oc = weight.dim(0), kh = weight.dim(2), kw = weight.dim(3);
  const std::int64_t ho = (h + 2 * padding - kh) / stride + 1;
  const std::int64_t wo = (w + 2 * padding - kw) / stride + 1;
  if (ho <= 0 || wo <= 0) Fail(ErrorKind::kDimension, "conv2d output would be empty");
  if (bias.defined() && bias.numel() != static_cast<std::size_t>(oc)) {
    Fail(ErrorKind::kDimension, "conv2d bias does not match output channels");
  }
  // im2col: cols[c*kh*kw, ho*wo]
  const std::int64_t krows = c * kh * kw, npix = ho * wo;
  auto cols = std::make_shared<std::vector<double>>(static_cast<std::size_t>(krows * npix), 0.0);
  {
    auto in = input.data();
    for (std::int64_t ci = 0; ci < c; ++ci) {
      for (std::int64_t ky = 0; ky < kh; ++ky) {
        for (std::int64_t kx = 0; kx < kw; ++kx) {
          double* row = cols->data() + ((ci * kh + ky) * kw + kx) * npix;
          for (std::int64_t oy = 0; oy < ho; ++oy) {
            const std::int64_t iy = oy * stride - padding + ky;
            if (iy < 0 || iy >= h) continue;
            for (std::int64_t ox = 0; ox < wo; ++ox) {
              const std::int64_t ix = ox * stride - padding + kx;
              if (ix < 0 || ix >= w) continue;
              row[oy * wo + ox] = in[static_cast<std::size_t>((ci * h + iy) * w + ix)];
            }
          }
        }
      }
    }
  }
  Tensor out = Tensor::Zeros({oc, ho, wo});
  {
    double* o = out.mutable_data().data();
    if (bias.defined()) {
      for (std::int64_t k = 0; k < oc; ++k) std::fill(o + k * npix, o + (k + 1) * npix, bias.data()[static_cast<std::size_t>(k)]);
    }
    GemmNN(oc, npix, krows, weight.data().data(), cols->data(), o);
  }
  if (ShouldRecord({&input, &weight, &bias})) {
    RecordOp({input, weight, bias}, out,
             [input, weight, bias, out, cols, c, h, w, kh, kw, ho, wo, oc, krows, npix, stride, padding]() mutable {
               const double* go = out.grad().data();
               if (weight.requires_grad()) GemmNT(oc, npix, krows, go, cols->data(), weight.mutable_grad().data());
               if (bias.defined() && bias.requires_grad()) {
                 auto gb = bias.mutable_grad();
                 for (std::int64_t k = 0; k < oc; ++k) {
                   double s = 0.0;
                   for (std::int64_t p = 0; p < npix; ++p) s += go[k * npix + p];
                   gb[static_cast<std::size_t>(k)] += s;
                 }
               }
               if (input.requires_grad()) {
                 std::vector<double> gcols(static_cast<std::size_t>(krows * npix), 0.0);
                 GemmTN(oc, npix, krows, weight.data().data(), go, gcols.data());
                 auto gi = input.mutable_grad();
                 for (std::int64_t ci = 0; ci < c; ++ci) {
                   for (std::int64_t ky = 0; ky < kh; ++ky) {
                     for (std::int64_t kx = 0; kx < kw; ++kx) {
                       const double* row = gcols.data() + ((ci * kh + ky) * kw + kx) * npix;
                       for (std::int64_t oy = 0; oy < ho; ++oy) {
                         const std::int64_t iy = oy * stride - padding + ky;
                         if (iy < 0 || iy >= h) continue;
                         for (std::int64_t ox = 0; ox < wo; ++ox) {
                           const std::int64_t ix = ox * stride - padding + kx;
                           if (ix < 0 || ix >= w) continue;
                           gi[static_cast<std::size_t>((ci * h + iy) * w + ix)] += row[oy * wo + ox];
                         }
                       }
                     }
                   }
                 }
               }
             });
  }
  return out;
}

}  // namespace detr
