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

#include "sedlab/optim.hpp"

#include <algorithm>
#include <array>
#include <cmath>

namespace sedlab {

template <typename T>
Adam<T>::Adam(std::vector<Param<T>*> params, AdamConfig cfg) : params_(std::move(params)), cfg_(cfg) {
  for (auto* p : params_) {
    m_.emplace_back(p->value.shape);
    v_.emplace_back(p->value.shape);
  }
}

template <typename T>
bool Adam<T>::step(double lr) {
  for (auto* p : params_)
    if (!p->grad.all_finite()) return false;
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (std::size_t k = 0; k < params_.size(); ++k) {
    auto& value = params_[k]->value.data;
    const auto& grad = params_[k]->grad.data;
    auto& m = m_[k].data;
    auto& v = v_[k].data;
    for (std::size_t i = 0; i < value.size(); ++i) {
      const double g = grad[i];
      const double mi = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g;
      const double vi = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g * g;
      m[i] = static_cast<T>(mi);
      v[i] = static_cast<T>(vi);
      const double update = lr * (mi / bc1) / (std::sqrt(vi / bc2) + cfg_.eps);
      value[i] = static_cast<T>(value[i] - update);
    }
  }
  return true;
}

double lr_schedule(double progress) {
  static constexpr std::array<double, 4> xs = {0.0, 0.1, 0.7, 1.0};
  static constexpr std::array<double, 4> rates = {1e-4, 1e-3, 1e-3, 1e-4};
  static constexpr std::array<double, 4> ys = {-4.0, -3.0, -3.0, -4.0};
  const double p = std::isnan(progress) ? 0.0 : std::clamp(progress, 0.0, 1.0);
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (p == xs[i]) return rates[i];
  }
  std::size_t seg = 0;
  while (seg + 2 < xs.size() && p > xs[seg + 1]) ++seg;
  const double u = (p - xs[seg]) / (xs[seg + 1] - xs[seg]);
  return std::pow(10.0, ys[seg] + u * (ys[seg + 1] - ys[seg]));
}

template class Adam<float>;
template class Adam<double>;

}  // namespace sedlab
