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

#include "detr/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <thread>
#include <vector>

namespace detr {
namespace {

int ThreadsFromEnv() {
  const char* env = std::getenv("DETR_KIT_THREADS");
  if (env == nullptr) return 1;
  const int n = std::atoi(env);
  return n > 0 ? n : 1;
}

std::atomic<int>& ThreadSetting() {
  static std::atomic<int> threads{ThreadsFromEnv()};
  return threads;
}

}  // namespace

int Threads() { return ThreadSetting().load(); }

void SetThreads(int n) { ThreadSetting().store(n > 0 ? n : ThreadsFromEnv()); }

void ParallelFor(std::int64_t n, std::int64_t min_chunk,
                 const std::function<void(std::int64_t, std::int64_t)>& fn) {
  if (n <= 0) return;
  const std::int64_t workers =
      std::min<std::int64_t>(Threads(), std::max<std::int64_t>(1, n / std::max<std::int64_t>(1, min_chunk)));
  if (workers <= 1) {
    fn(0, n);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(workers - 1));
  const std::int64_t chunk = (n + workers - 1) / workers;
  for (std::int64_t w = 1; w < workers; ++w) {
    const std::int64_t b = w * chunk;
    const std::int64_t e = std::min(n, b + chunk);
    if (b >= e) break;
    pool.emplace_back([&fn, b, e] { fn(b, e); });
  }
  fn(0, std::min(n, chunk));
  for (auto& t : pool) t.join();
}

}  // namespace detr
