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

// Numeric self-verification: finite-difference gradient checks, loop oracles
// and evaluator fixtures, runnable from the command line.

#include <cstdint>
#include <string>
#include <vector>

namespace detr {

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;
};

struct GradSuiteEntry {
  std::string op;
  int instances = 0;
  double worst_rel_error = 0.0;
};

// Operations covered by the gradient suite, in report order.
const std::vector<std::string>& GradSuiteOps();

// `instances` random finite-difference checks of one op (a name from
// GradSuiteOps). Inputs keep every bilinear sample off the integer lattice,
// where the interpolant has kinks.
GradSuiteEntry RunGradCheck(const std::string& op, std::uint64_t seed, int instances);

// Largest absolute difference between the optimized kernel and the loop
// oracle over `configs` random configurations.
double DeformOracleMaxError(std::uint64_t seed, int configs);
double RoiAlignOracleMaxError(std::uint64_t seed, int configs);
double BilinearOracleMaxError(std::uint64_t seed, int configs);

// Random cost matrices with 1 <= rows, cols <= max_n; returns how many
// assignments were invalid or costlier than exhaustive search (tolerance
// 1e-9).
int HungarianMismatches(std::uint64_t seed, int matrices, int max_n);

// Random masks compared against the per-pixel scan in both box modes;
// returns the number of masks that disagree.
int MaskOracleMismatches(std::uint64_t seed, int masks);

struct SelfCheckOptions {
  std::uint64_t seed = 0;
  int grad_instances = 3;
  int oracle_configs = 20;
};

// Runs every named check; never throws for a failing check, only reports.
std::vector<CheckResult> RunSelfCheck(const SelfCheckOptions& options = {});

}  // namespace detr
