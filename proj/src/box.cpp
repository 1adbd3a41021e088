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

#include "detr/box.hpp"

#include <algorithm>

#include "detr/error.hpp"

namespace detr {

BoxXyxy CxCyWhToXyxy(const BoxCxCyWh& b, double img_w, double img_h) {
  BoxXyxy out{(b.cx - 0.5 * b.w) * img_w, (b.cy - 0.5 * b.h) * img_h, (b.cx + 0.5 * b.w) * img_w,
              (b.cy + 0.5 * b.h) * img_h};
  out.x1 = std::clamp(out.x1, 0.0, img_w);
  out.x2 = std::clamp(out.x2, 0.0, img_w);
  out.y1 = std::clamp(out.y1, 0.0, img_h);
  out.y2 = std::clamp(out.y2, 0.0, img_h);
  return out;
}

BoxXyxy CxCyWhCorners(const BoxCxCyWh& b) {
  return {b.cx - 0.5 * b.w, b.cy - 0.5 * b.h, b.cx + 0.5 * b.w, b.cy + 0.5 * b.h};
}

BoxCxCyWh XyxyToCxCyWh(const BoxXyxy& b, double img_w, double img_h) {
  return {0.5 * (b.x1 + b.x2) / img_w, 0.5 * (b.y1 + b.y2) / img_h, (b.x2 - b.x1) / img_w, (b.y2 - b.y1) / img_h};
}

BoxXyxy XyWhToXyxy(const BoxXyWh& b) { return {b.x, b.y, b.x + b.w, b.y + b.h}; }

BoxXyWh XyxyToXyWh(const BoxXyxy& b) { return {b.x1, b.y1, b.x2 - b.x1, b.y2 - b.y1}; }

double Area(const BoxXyxy& b) { return std::max(0.0, b.x2 - b.x1) * std::max(0.0, b.y2 - b.y1); }

namespace {

double Intersection(const BoxXyxy& a, const BoxXyxy& b) {
  const double w = std::min(a.x2, b.x2) - std::max(a.x1, b.x1);
  const double h = std::min(a.y2, b.y2) - std::max(a.y1, b.y1);
  return (w > 0.0 && h > 0.0) ? w * h : 0.0;
}

}  // namespace

double Iou(const BoxXyxy& a, const BoxXyxy& b) {
  const double inter = Intersection(a, b);
  const double uni = Area(a) + Area(b) - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

double Giou(const BoxXyxy& a, const BoxXyxy& b) {
  const double inter = Intersection(a, b);
  const double uni = Area(a) + Area(b) - inter;
  const double iou = uni > 0.0 ? inter / uni : 0.0;
  const BoxXyxy hull{std::min(a.x1, b.x1), std::min(a.y1, b.y1), std::max(a.x2, b.x2), std::max(a.y2, b.y2)};
  const double enclosing = Area(hull);
  const double empty = enclosing > 0.0 ? (enclosing - uni) / enclosing : 1.0;
  return iou - empty;
}

Tensor CxCyWhToXyxy(const Tensor& boxes) {
  if (boxes.rank() != 2 || boxes.dim(1) != 4) {
    Fail(ErrorKind::kDimension, "expected [R, 4] boxes, got " + ShapeString(boxes.shape()));
  }
  const Tensor c = Slice(boxes, 1, 0, 2);
  const Tensor half = Scale(Slice(boxes, 1, 2, 2), 0.5);
  return Concat({Sub(c, half), Add(c, half)}, 1);
}

Tensor GeneralizedIou(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    Fail(ErrorKind::kDimension, "giou: box shapes differ " + ShapeString(a.shape()) + " vs " +
                                    ShapeString(b.shape()));
  }
  const Tensor ax = CxCyWhToXyxy(a);
  const Tensor bx = CxCyWhToXyxy(b);
  auto col = [](const Tensor& t, int i) { return Slice(t, 1, i, 1); };
  auto area = [&](const Tensor& t) { return Mul(Sub(col(t, 2), col(t, 0)), Sub(col(t, 3), col(t, 1))); };
  const Tensor zero = Tensor::Scalar(0.0);
  const Tensor iw = Maximum(Sub(Minimum(col(ax, 2), col(bx, 2)), Maximum(col(ax, 0), col(bx, 0))), zero);
  const Tensor ih = Maximum(Sub(Minimum(col(ax, 3), col(bx, 3)), Maximum(col(ax, 1), col(bx, 1))), zero);
  const Tensor inter = Mul(iw, ih);
  const Tensor uni = Sub(Add(area(ax), area(bx)), inter);
  const Tensor tiny = Tensor::Scalar(1e-12);
  const Tensor iou = Div(inter, Maximum(uni, tiny));
  const Tensor ew = Sub(Maximum(col(ax, 2), col(bx, 2)), Minimum(col(ax, 0), col(bx, 0)));
  const Tensor eh = Sub(Maximum(col(ax, 3), col(bx, 3)), Minimum(col(ax, 1), col(bx, 1)));
  const Tensor enclosing = Maximum(Mul(ew, eh), tiny);
  const Tensor giou = Sub(iou, Div(Sub(enclosing, uni), enclosing));
  return Reshape(giou, {a.dim(0)});
}

}  // namespace detr
