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

#include "sedlab/losses.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace sedlab {

LossKind parse_loss(const std::string& s) {
  if (s == "bce") return LossKind::Bce;
  if (s == "dice") return LossKind::Dice;
  if (s == "bce_dice" || s == "bce+dice") return LossKind::BceDice;
  throw std::invalid_argument("unknown loss '" + s + "'");
}

std::string loss_name(LossKind k) {
  switch (k) {
    case LossKind::Bce:
      return "bce";
    case LossKind::Dice:
      return "dice";
    case LossKind::BceDice:
      return "bce_dice";
  }
  return "?";
}

template <typename T>
LossResult<T> bce_loss(std::span<const T> pred, std::span<const T> target, const LossConfig& cfg) {
  if (pred.size() != target.size()) throw std::invalid_argument("bce: shape mismatch");
  if (pred.empty()) throw std::invalid_argument("bce: empty input");
  const double lo = cfg.bce_clamp, hi = 1.0 - cfg.bce_clamp;
  const double inv_m = 1.0 / static_cast<double>(pred.size());
  LossResult<T> r;
  r.grad.resize(pred.size());
  double total = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double raw = static_cast<double>(pred[i]);
    const double p = std::clamp(raw, lo, hi);
    const double y = static_cast<double>(target[i]);
    total -= y * std::log(p) + (1.0 - y) * std::log(1.0 - p);
    r.grad[i] = (raw > lo && raw < hi) ? static_cast<T>((p - y) / (p * (1.0 - p)) * inv_m) : T(0);
  }
  r.value = total * inv_m;
  return r;
}

template <typename T>
LossResult<T> dice_loss(std::span<const T> pred, std::span<const T> target, std::size_t batch,
                        const LossConfig& cfg) {
  if (pred.size() != target.size()) throw std::invalid_argument("dice: shape mismatch");
  if (batch == 0 || pred.size() % batch != 0) throw std::invalid_argument("dice: bad batch size");
  if (!(cfg.dice_epsilon > 0.0)) throw std::invalid_argument("dice: epsilon must be positive");
  const std::size_t per = pred.size() / batch;
  const double inv_n = 1.0 / static_cast<double>(batch);
  LossResult<T> r;
  r.grad.resize(pred.size());
  double total = 0.0;
  for (std::size_t n = 0; n < batch; ++n) {
    const std::size_t off = n * per;
    double inter = 0.0, sum = 0.0;
    for (std::size_t i = off; i < off + per; ++i) {
      const double p = static_cast<double>(pred[i]), y = static_cast<double>(target[i]);
      inter += p * y;
      sum += p + y;
    }
    const double den = sum + cfg.dice_epsilon;
    total += 1.0 - 2.0 * inter / den;
    for (std::size_t i = off; i < off + per; ++i) {
      const double y = static_cast<double>(target[i]);
      r.grad[i] = static_cast<T>(inv_n * (-2.0 * y / den + 2.0 * inter / (den * den)));
    }
  }
  r.value = total * inv_n;
  return r;
}

template <typename T>
LossResult<T> bce_dice_loss(std::span<const T> pred, std::span<const T> target, std::size_t batch,
                            const LossConfig& cfg) {
  LossResult<T> a = bce_loss(pred, target, cfg);
  LossResult<T> b = dice_loss(pred, target, batch, cfg);
  for (std::size_t i = 0; i < a.grad.size(); ++i) a.grad[i] += b.grad[i];
  a.value += b.value;
  return a;
}

template <typename T>
LossResult<T> compute_loss(LossKind kind, std::span<const T> pred, std::span<const T> target,
                           std::size_t batch, const LossConfig& cfg) {
  switch (kind) {
    case LossKind::Bce:
      return bce_loss(pred, target, cfg);
    case LossKind::Dice:
      return dice_loss(pred, target, batch, cfg);
    case LossKind::BceDice:
      return bce_dice_loss(pred, target, batch, cfg);
  }
  throw std::invalid_argument("unknown loss kind");
}

double sdc(const std::set<std::size_t>& a, const std::set<std::size_t>& b) {
  if (a.empty() && b.empty()) return 1.0;
  std::size_t common = 0;
  for (auto v : a) common += b.count(v);
  return 2.0 * static_cast<double>(common) / static_cast<double>(a.size() + b.size());
}

#define SEDLAB_INSTANTIATE(T)                                                                          \
  template LossResult<T> bce_loss<T>(std::span<const T>, std::span<const T>, const LossConfig&);       \
  template LossResult<T> dice_loss<T>(std::span<const T>, std::span<const T>, std::size_t,             \
                                      const LossConfig&);                                              \
  template LossResult<T> bce_dice_loss<T>(std::span<const T>, std::span<const T>, std::size_t,         \
                                          const LossConfig&);                                          \
  template LossResult<T> compute_loss<T>(LossKind, std::span<const T>, std::span<const T>, std::size_t, \
                                         const LossConfig&);

SEDLAB_INSTANTIATE(float)
SEDLAB_INSTANTIATE(double)

#undef SEDLAB_INSTANTIATE

}  // namespace sedlab
