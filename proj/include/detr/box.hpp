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

#include "detr/tensor.hpp"

namespace detr {

// Normalized center form, the model's native box parameterization.
struct BoxCxCyWh {
  double cx = 0, cy = 0, w = 0, h = 0;
};

// Absolute pixels, top-left origin (COCO "bbox").
struct BoxXyWh {
  double x = 0, y = 0, w = 0, h = 0;
};

// Corner form.
struct BoxXyxy {
  double x1 = 0, y1 = 0, x2 = 0, y2 = 0;
};

// Scales to pixels and clamps into [0, img_w] x [0, img_h].
BoxXyxy CxCyWhToXyxy(const BoxCxCyWh& b, double img_w, double img_h);
// Corners in the same normalized units, no clamping.
BoxXyxy CxCyWhCorners(const BoxCxCyWh& b);
BoxCxCyWh XyxyToCxCyWh(const BoxXyxy& b, double img_w, double img_h);
BoxXyxy XyWhToXyxy(const BoxXyWh& b);
BoxXyWh XyxyToXyWh(const BoxXyxy& b);

double Area(const BoxXyxy& b);

// Zero-area unions give 0 instead of NaN.
double Iou(const BoxXyxy& a, const BoxXyxy& b);

// IoU minus the empty fraction of the enclosing box. When the enclosing box is
// itself empty the empty fraction is taken as 1.
double Giou(const BoxXyxy& a, const BoxXyxy& b);

// Row-wise tensor versions on [R, 4] normalized cxcywh boxes, differentiable.
Tensor CxCyWhToXyxy(const Tensor& boxes);
Tensor GeneralizedIou(const Tensor& a, const Tensor& b);  // -> [R]

}  // namespace detr
