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

#include <doctest.h>

#include <cmath>
#include <algorithm>
#include <random>
#include <set>

#include "sedlab/common.hpp"
#include "sedlab/losses.hpp"

using namespace sedlab;

namespace {

template <typename F>
std::vector<double> numeric_grad(F f, std::vector<double> x, double h = 1e-6) {
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double keep = x[i];
    x[i] = keep + h;
    const double up = f(x);
    x[i] = keep - h;
    const double down = f(x);
    x[i] = keep;
    g[i] = (up - down) / (2 * h);
  }
  return g;
}

std::vector<double> random_probs(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::uniform_real_distribution<double> u(0.05, 0.95);
  std::vector<double> v(n);
  for (auto& x : v) x = u(rng);
  return v;
}

std::vector<double> random_binary(std::size_t n, std::uint64_t seed, double p = 0.3) {
  Rng rng(seed);
  std::bernoulli_distribution b(p);
  std::vector<double> v(n);
  for (auto& x : v) x = b(rng) ? 1.0 : 0.0;
  return v;
}

using Span = std::span<const double>;

}  // namespace

TEST_CASE("bce values") {
  std::vector<double> p = {0.8, 0.2}, y = {1.0, 0.0};
  CHECK(bce_loss<double>(p, y).value == doctest::Approx(-(std::log(0.8) + std::log(0.8)) / 2));
  CHECK(bce_loss<double>(p, y).value == doctest::Approx(0.22314).epsilon(1e-4));

  std::vector<double> half(10, 0.5);
  CHECK(bce_loss<double>(half, random_binary(10, 1)).value == doctest::Approx(std::log(2.0)));

  std::vector<double> perfect = {1.0, 0.0, 1.0};
  const double v = bce_loss<double>(perfect, perfect).value;
  CHECK(v > 0.0);
  CHECK(v < 2e-7);
}

TEST_CASE("bce gradient is zero where the clamp is active") {
  std::vector<double> p = {0.0, 1.0, 0.5}, y = {1.0, 0.0, 1.0};
  auto r = bce_loss<double>(p, y);
  CHECK(r.grad[0] == 0.0);
  CHECK(r.grad[1] == 0.0);
  CHECK(r.grad[2] == doctest::Approx(-1.0 / (0.5 * 3)));
  CHECK(std::isfinite(r.value));
}

TEST_CASE("sdc") {
  CHECK(sdc({1, 2, 3}, {1, 2, 3}) == 1.0);
  CHECK(sdc({1, 2}, {3, 4}) == 0.0);
  CHECK(sdc({1, 2}, {2, 3, 4}) == doctest::Approx(0.4));
}

TEST_CASE("dice values") {
  LossConfig one;
  std::vector<double> y(50, 0.0);
  for (int i = 0; i < 10; ++i) y[i * 5] = 1.0;
  CHECK(dice_loss<double>(y, y, 1, one).value == doctest::Approx(1.0 - 20.0 / 21.0));
  CHECK(dice_loss<double>(y, y, 1, one).value == doctest::Approx(0.04762).epsilon(1e-4));

  std::vector<double> inv(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) inv[i] = 1.0 - y[i];
  CHECK(dice_loss<double>(inv, y, 1, one).value == doctest::Approx(1.0));

  LossConfig tiny;
  tiny.dice_epsilon = 1e-7;
  std::vector<double> p = {0.8, 0.2, 0.6, 0.1}, t = {1, 0, 1, 0};
  CHECK(dice_loss<double>(p, t, 1, tiny).value == doctest::Approx(1.0 - 2.8 / 3.7).epsilon(1e-6));
  CHECK(dice_loss<double>(p, t, 1, tiny).value == doctest::Approx(0.24324).epsilon(1e-4));
}

TEST_CASE("dice averages per-sample losses") {
  LossConfig cfg;
  auto p = random_probs(40, 3);
  auto y = random_binary(40, 4);
  const double batch = dice_loss<double>(p, y, 2, cfg).value;
  const double a = dice_loss<double>(Span(p).subspan(0, 20), Span(y).subspan(0, 20), 1, cfg).value;
  const double b = dice_loss<double>(Span(p).subspan(20), Span(y).subspan(20), 1, cfg).value;
  CHECK(batch == doctest::Approx((a + b) / 2).epsilon(1e-12));
  CHECK_THROWS(dice_loss<double>(p, y, 3, cfg));
}

TEST_CASE("bce-dice values") {
  LossConfig one;
  std::vector<double> half(100, 0.5), zero(100, 0.0);
  CHECK(bce_dice_loss<double>(half, zero, 1, one).value == doctest::Approx(std::log(2.0) + 1.0));
  CHECK(bce_dice_loss<double>(half, zero, 1, one).value == doctest::Approx(1.6931).epsilon(1e-4));

  LossConfig tiny;
  tiny.dice_epsilon = 1e-7;
  std::vector<double> perfect = {1, 0, 0, 1, 1, 0};
  CHECK(bce_dice_loss<double>(perfect, perfect, 1, tiny).value < 1e-6);
}

TEST_CASE("bce-dice gradient is the sum of the parts") {
  LossConfig cfg;
  auto p = random_probs(60, 5);
  auto y = random_binary(60, 6);
  auto both = bce_dice_loss<double>(p, y, 3, cfg);
  auto b = bce_loss<double>(p, y, cfg);
  auto d = dice_loss<double>(p, y, 3, cfg);
  for (std::size_t i = 0; i < p.size(); ++i) CHECK(both.grad[i] == doctest::Approx(b.grad[i] + d.grad[i]).epsilon(1e-14));
}

TEST_CASE("loss gradients match central differences") {
  for (double eps : {1.0, 1e-7}) {
    LossConfig cfg;
    cfg.dice_epsilon = eps;
    auto p = random_probs(24, 7);
    auto y = random_binary(24, 8);
    for (LossKind k : {LossKind::Bce, LossKind::Dice, LossKind::BceDice}) {
      auto analytic = compute_loss<double>(k, p, y, 2, cfg).grad;
      auto numeric = numeric_grad([&](const std::vector<double>& x) { return compute_loss<double>(k, x, y, 2, cfg).value; }, p);
      for (std::size_t i = 0; i < p.size(); ++i) {
        const double den = std::max({std::abs(analytic[i]), std::abs(numeric[i]), 1e-8});
        CHECK(std::abs(analytic[i] - numeric[i]) / den < 1e-6);
      }
    }
  }
}

TEST_CASE("dice with tiny epsilon on binary grids is one minus F1") {
  LossConfig cfg;
  cfg.dice_epsilon = 1e-7;
  Rng rng(9);
  for (int trial = 0; trial < 200; ++trial) {
    auto p = random_binary(60, rng(), 0.3);
    auto y = random_binary(60, rng(), 0.3);
    double tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < p.size(); ++i) {
      tp += p[i] * y[i];
      fp += p[i] * (1 - y[i]);
      fn += (1 - p[i]) * y[i];
    }
    if (tp + fp + fn == 0) continue;
    const double f1 = 2 * tp / (2 * tp + fp + fn);
    CHECK(std::abs(dice_loss<double>(p, y, 1, cfg).value - (1.0 - f1)) < 1e-6);
  }
}

TEST_CASE("loss names") {
  CHECK(parse_loss("bce") == LossKind::Bce);
  CHECK(parse_loss("bce_dice") == LossKind::BceDice);
  CHECK(parse_loss("bce+dice") == LossKind::BceDice);
  CHECK(loss_name(LossKind::Dice) == "dice");
  CHECK_THROWS(parse_loss("focal"));
}

TEST_CASE("float and double agree") {
  LossConfig cfg;
  auto p = random_probs(30, 10);
  auto y = random_binary(30, 11);
  std::vector<float> pf(p.begin(), p.end()), yf(y.begin(), y.end());
  CHECK(compute_loss<float>(LossKind::BceDice, pf, yf, 1, cfg).value ==
        doctest::Approx(compute_loss<double>(LossKind::BceDice, p, y, 1, cfg).value).epsilon(1e-5));
}
