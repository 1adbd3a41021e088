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

#include <cstdint>
#include <functional>

namespace detr {

// Worker count for internal kernels. Defaults to DETR_KIT_THREADS when set,
// otherwise 1.
int Threads();
// n <= 0 restores the default.
void SetThreads(int n);

// Runs fn(begin, end) over disjoint chunks of [0, n). Chunks are independent,
// so results do not depend on the thread count.
void ParallelFor(std::int64_t n, std::int64_t min_chunk,
                 const std::function<void(std::int64_t, std::int64_t)>& fn);

}  // namespace detr
