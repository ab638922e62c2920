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

#include <cstddef>
#include <set>
#include <span>
#include <string>
#include <vector>

namespace sedlab {

struct LossConfig {
  /// Dice stabilizer. 1.0 for training; use 1e-7 for analysis.
  double dice_epsilon = 1.0;
  double bce_clamp = 1e-7;
};

enum class LossKind { Bce, Dice, BceDice };

LossKind parse_loss(const std::string& s);
std::string loss_name(LossKind k);

template <typename T>
struct LossResult {
  double value = 0.0;
  std::vector<T> grad;
};

/// Mean binary cross-entropy over every element. Predictions are clamped to
/// [c, 1 - c]; the gradient is zero where the clamp is active.
template <typename T>
LossResult<T> bce_loss(std::span<const T> pred, std::span<const T> target, const LossConfig& cfg = {});

/// Soft Dice loss averaged over `batch` samples; each sample is one
/// contiguous T x L block of the inputs:
///   L = 1/N sum_n [1 - 2 |p_n * y_n|_1 / (|p_n + y_n|_1 + eps)]
template <typename T>
LossResult<T> dice_loss(std::span<const T> pred, std::span<const T> target, std::size_t batch,
                        const LossConfig& cfg = {});

/// Unweighted sum of the two losses above.
template <typename T>
LossResult<T> bce_dice_loss(std::span<const T> pred, std::span<const T> target, std::size_t batch,
                            const LossConfig& cfg = {});

template <typename T>
LossResult<T> compute_loss(LossKind kind, std::span<const T> pred, std::span<const T> target,
                           std::size_t batch, const LossConfig& cfg = {});

/// Sorensen-Dice coefficient 2|A n B| / (|A| + |B|); 1 when both are empty.
double sdc(const std::set<std::size_t>& a, const std::set<std::size_t>& b);

}  // namespace sedlab
