// Copyright 2026 The sedlab Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "sedlab/crnn.hpp"
#include "sedlab/losses.hpp"
#include "sedlab/tensor.hpp"

namespace sedlab {

struct GradCheckOptions {
  double step = 1e-5;
  /// Entries checked per tensor; tensors with fewer entries are checked fully.
  std::size_t samples_per_tensor = 200;
  std::uint64_t seed = 0;
  /// Multiplies the analytic gradient before comparison (fault injection).
  double analytic_scale = 1.0;
  /// Also check dL/dx for the model input.
  bool check_input = true;
};

/// |a - b| / max(|a|, |b|, 1e-8)
double relative_error(double analytic, double numeric);

struct GradCheckTarget {
  std::string name;
  Tensor<double>* value;
  const Tensor<double>* analytic;
};

struct GradCheckEntry {
  std::string name;
  std::size_t checked = 0;
  double max_rel_error = 0.0;
};

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst;
  std::vector<GradCheckEntry> entries;
};

/// Central finite differences of `loss` against precomputed analytic
/// gradients, perturbing each sampled entry of each target in place.
GradCheckResult check_gradients(const std::function<double()>& loss, const std::vector<GradCheckTarget>& targets,
                                const GradCheckOptions& opts = {});

/// End-to-end check of a model in training mode (batch-statistics BN)
/// under the given loss.
GradCheckResult grad_check(Crnn<double>& model, const Tensor<double>& input, const Tensor<double>& target,
                           LossKind loss, const LossConfig& loss_cfg = {}, const GradCheckOptions& opts = {});

}  // namespace sedlab
