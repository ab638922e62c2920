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

#include "sedlab/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "sedlab/common.hpp"

namespace sedlab {

double relative_error(double analytic, double numeric) {
  const double den = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
  return std::abs(analytic - numeric) / den;
}

GradCheckResult check_gradients(const std::function<double()>& loss, const std::vector<GradCheckTarget>& targets,
                                const GradCheckOptions& opts) {
  GradCheckResult result;
  Rng rng(opts.seed);
  for (const auto& tgt : targets) {
    if (tgt.value->shape != tgt.analytic->shape) {
      throw std::invalid_argument("check_gradients: '" + tgt.name + "' value and gradient shapes differ");
    }
    const std::size_t n = tgt.value->size();
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    if (n > opts.samples_per_tensor) {
      std::shuffle(idx.begin(), idx.end(), rng);
      idx.resize(opts.samples_per_tensor);
      std::sort(idx.begin(), idx.end());
    }
    GradCheckEntry entry{tgt.name, idx.size(), 0.0};
    for (std::size_t i : idx) {
      double& v = tgt.value->data[i];
      const double orig = v;
      v = orig + opts.step;
      const double lp = loss();
      v = orig - opts.step;
      const double lm = loss();
      v = orig;
      const double numeric = (lp - lm) / (2.0 * opts.step);
      const double analytic = tgt.analytic->data[i] * opts.analytic_scale;
      entry.max_rel_error = std::max(entry.max_rel_error, relative_error(analytic, numeric));
    }
    if (entry.max_rel_error >= result.max_rel_error) {
      result.max_rel_error = entry.max_rel_error;
      result.worst = tgt.name;
    }
    result.entries.push_back(entry);
  }
  return result;
}

GradCheckResult grad_check(Crnn<double>& model, const Tensor<double>& input, const Tensor<double>& target,
                           LossKind loss, const LossConfig& loss_cfg, const GradCheckOptions& opts) {
  const std::size_t batch = input.dim(0);
  Tensor<double> x = input;
  auto eval = [&]() {
    Tensor<double> p = model.forward(x, true);
    if (p.shape != target.shape) {
      throw std::invalid_argument("grad_check: target shape " + shape_string(target.shape) +
                                  " does not match prediction shape " + shape_string(p.shape));
    }
    return compute_loss<double>(loss, p.data, target.data, batch, loss_cfg);
  };

  model.zero_grad();
  Tensor<double> probs = model.forward(x, true);
  require_shape(target, probs.shape, "grad_check target");
  auto lr = compute_loss<double>(loss, probs.data, target.data, batch, loss_cfg);
  Tensor<double> dprobs(probs.shape);
  dprobs.data = lr.grad;
  Tensor<double> dx = model.backward(dprobs);

  std::vector<GradCheckTarget> targets;
  for (auto* p : model.params()) targets.push_back({p->name, &p->value, &p->grad});
  if (opts.check_input) targets.push_back({"input", &x, &dx});
  return check_gradients([&]() { return eval().value; }, targets, opts);
}

}  // namespace sedlab
