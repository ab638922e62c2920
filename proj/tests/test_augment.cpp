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

#include <algorithm>
#include <cmath>
#include <set>

#include "sedlab/augment.hpp"

using namespace sedlab;

namespace {

Sample random_sample(std::uint64_t seed, std::size_t channels = 4, std::size_t frames = 64, std::size_t bins = 32,
                     std::size_t label_frames = 8) {
  Sample s;
  s.features = FeatureTensor(channels, frames, bins);
  s.labels = LabelGrid(label_frames, 3);
  Rng rng(seed);
  std::normal_distribution<float> g;
  for (auto& v : s.features.values) v = g(rng);
  for (auto& v : s.labels.values) v = (rng() % 4 == 0) ? 1.0f : 0.0f;
  return s;
}

std::size_t changed_cells(const FeatureTensor& a, const FeatureTensor& b, std::size_t channel) {
  std::size_t n = 0;
  for (std::size_t t = 0; t < a.frames; ++t)
    for (std::size_t f = 0; f < a.bins; ++f) n += a.at(channel, t, f) != b.at(channel, t, f);
  return n;
}

bool same(const Sample& a, const Sample& b) {
  return a.features.values == b.features.values && a.labels.values == b.labels.values;
}

}  // namespace

TEST_CASE("mixup with forced weights") {
  AugmentConfig cfg;
  Sample a = random_sample(1), b = random_sample(2);
  CHECK(same(mixup_with_weight(a, b, 1.0, cfg), a));
  CHECK(same(mixup_with_weight(a, b, 0.5, cfg), a));

  Sample la = a, lb = b;
  la.labels = LabelGrid(1, 2);
  la.labels.values = {1.0f, 0.0f};
  lb.labels = LabelGrid(1, 2);
  lb.labels.values = {0.0f, 1.0f};
  auto m = mixup_with_weight(la, lb, 0.9, cfg);
  CHECK(m.labels.values[0] == doctest::Approx(0.9));
  CHECK(m.labels.values[1] == doctest::Approx(0.1));
  CHECK(m.features.values[7] == doctest::Approx(0.9f * a.features.values[7] + 0.1f * b.features.values[7]));
}

TEST_CASE("mixup skip band is exact over its closed interval") {
  AugmentConfig cfg;
  Sample a = random_sample(3), b = random_sample(4);
  for (int i = 0; i <= 400; ++i) {
    const double lam = 0.3 + 0.4 * i / 400.0;
    CHECK(same(mixup_with_weight(a, b, lam, cfg), a));
  }
  CHECK_FALSE(same(mixup_with_weight(a, b, 0.29, cfg), a));
  CHECK_FALSE(same(mixup_with_weight(a, b, 0.71, cfg), a));
}

TEST_CASE("mixup weights follow Beta(0.5, 0.5)") {
  AugmentConfig cfg;
  Rng rng(5);
  double mean = 0.0, in_band = 0.0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    double w = draw_mixup_weight(cfg, rng);
    REQUIRE(w >= 0.0);
    REQUIRE(w <= 1.0);
    mean += w / n;
    in_band += (w >= 0.3 && w <= 0.7) ? 1.0 / n : 0.0;
  }
  CHECK(mean == doctest::Approx(0.5).epsilon(0.02));
  // P(0.3 <= X <= 0.7) for the arcsine law: (2/pi)(asin(sqrt .7) - asin(sqrt .3)).
  const double p = 2.0 / kPi * (std::asin(std::sqrt(0.7)) - std::asin(std::sqrt(0.3)));
  CHECK(in_band == doctest::Approx(p).epsilon(0.05));
}

TEST_CASE("frequency shift semantics") {
  Sample s = random_sample(6);
  CHECK(same(freq_shift_by(s, 0), s));
  auto up = freq_shift_by(s, 10);
  for (std::size_t c = 0; c < 4; ++c)
    for (std::size_t t = 0; t < 64; ++t) {
      for (std::size_t f = 0; f < 10; ++f) CHECK(up.features.at(c, t, f) == 0.0f);
      for (std::size_t f = 10; f < 32; ++f) CHECK(up.features.at(c, t, f) == s.features.at(c, t, f - 10));
    }
  auto down = freq_shift_by(s, -3);
  CHECK(down.features.at(1, 5, 0) == s.features.at(1, 5, 3));
  CHECK(down.features.at(1, 5, 31) == 0.0f);
  AugmentConfig cfg;
  Rng rng(1);
  for (int i = 0; i < 20; ++i) CHECK(freq_shift(s, cfg, rng).labels == s.labels);
}

TEST_CASE("channel permutations") {
  Sample s = random_sample(7);
  CHECK(same(permute_channels(s, {0, 1, 2, 3}), s));
  CHECK(same(permute_channels(permute_channels(s, {1, 0, 2, 3}), {1, 0, 2, 3}), s));
  std::set<std::array<int, 4>> all;
  for (int i = 0; i < 24; ++i) all.insert(nth_permutation(i));
  CHECK(all.size() == 24);
  Rng rng(2);
  for (int i = 0; i < 10; ++i) {
    auto p = channel_swap(s, rng);
    CHECK(p.labels == s.labels);
    auto sorted = [](std::vector<float> v) {
      std::sort(v.begin(), v.end());
      return v;
    };
    CHECK(sorted(p.features.values) == sorted(s.features.values));
  }
  CHECK_THROWS(permute_channels(random_sample(1, 1), {0, 1, 2, 3}));
}

TEST_CASE("spec augment with empty stripes is the identity") {
  Sample s = random_sample(8);
  CHECK(same(spec_augment(s, Rect{3, 0, 0, 0}, Rect{0, 0, 5, 0}), s));
  auto m = spec_augment(s, Rect{3, 2, 0, 0}, Rect{0, 0, 5, 1});
  CHECK(m.features.at(0, 3, 0) == 0.0f);
  CHECK(m.features.at(2, 10, 5) == 0.0f);
  CHECK(m.features.at(2, 10, 6) == s.features.at(2, 10, 6));
}

TEST_CASE("single cutout covers 2 to 30 percent of the plane") {
  AugmentConfig cfg;
  Sample s = random_sample(9, 1, 100, 64);
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    Rng rng(seed);
    auto m = single_cutout(s, cfg, rng);
    const double frac = static_cast<double>(changed_cells(s.features, m.features, 0)) / (100.0 * 64.0);
    CHECK(frac >= 0.02 - 0.005);
    CHECK(frac <= 0.30 + 0.005);
    CHECK(m.labels == s.labels);
  }
}

TEST_CASE("multiple cutouts change at most 8 patches of 8x8 per channel") {
  AugmentConfig cfg;
  Sample s = random_sample(10);
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    Rng rng(seed);
    auto m = multi_cutout(s, cfg, rng);
    for (std::size_t c = 0; c < 4; ++c) CHECK(changed_cells(s.features, m.features, c) <= 8u * 64u);
  }
}

TEST_CASE("cutout fills stay within the range of the input") {
  AugmentConfig cfg;
  Sample s = random_sample(11);
  auto [lo, hi] = std::minmax_element(s.features.values.begin(), s.features.values.end());
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    Rng rng(seed);
    auto m = cutout_composite(s, cfg, rng);
    bool inside = true;
    for (float v : m.features.values) inside &= v >= *lo && v <= *hi;
    CHECK(inside);
    CHECK(m.labels == s.labels);
  }
}

TEST_CASE("pipeline with everything disabled is the identity") {
  std::vector<Sample> batch = {random_sample(1), random_sample(2), random_sample(3)};
  auto out = apply_pipeline(batch, AugmentConfig{}, 42);
  for (std::size_t i = 0; i < batch.size(); ++i) CHECK(same(out[i], batch[i]));
}

TEST_CASE("pipeline is deterministic for a batch seed") {
  AugmentConfig cfg;
  cfg.mixup = cfg.cutout = cfg.freq_shift = cfg.channel_swap = true;
  std::vector<Sample> batch;
  for (std::uint64_t i = 0; i < 6; ++i) batch.push_back(random_sample(i));
  auto a = apply_pipeline(batch, cfg, 1234);
  auto b = apply_pipeline(batch, cfg, 1234);
  auto c = apply_pipeline(batch, cfg, 1235);
  bool differs = false;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    CHECK(same(a[i], b[i]));
    differs |= !same(a[i], c[i]);
  }
  CHECK(differs);
}

TEST_CASE("pipeline with forced gates equals the manual composition") {
  AugmentConfig cfg;
  cfg.cutout = cfg.freq_shift = cfg.channel_swap = true;
  cfg.p_other = 1.0;
  std::vector<Sample> batch = {random_sample(20), random_sample(21), random_sample(22)};
  auto out = apply_pipeline(batch, cfg, 77);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    SampleStreams st = sample_streams(77, i);
    Rng co = st.cutout(), fs = st.freq_shift(), cs = st.channel_swap();
    Sample manual = channel_swap(freq_shift(cutout_composite(batch[i], cfg, co), cfg, fs), cs);
    CHECK(same(out[i], manual));
  }
}

TEST_CASE("gate rates") {
  AugmentConfig cfg;
  Rng rng(3);
  const int n = 10000;
  int mu = 0, co = 0, fs = 0, cs = 0;
  for (int i = 0; i < n; ++i) {
    auto g = draw_gates(cfg, rng);
    mu += g.mixup;
    co += g.cutout;
    fs += g.freq_shift;
    cs += g.channel_swap;
  }
  CHECK(std::abs(mu / double(n) - 0.8) < 0.02);
  CHECK(std::abs(co / double(n) - 0.5) < 0.02);
  CHECK(std::abs(fs / double(n) - 0.5) < 0.02);
  CHECK(std::abs(cs / double(n) - 0.5) < 0.02);
}

TEST_CASE("channel swap is skipped for single-channel input") {
  AugmentConfig cfg;
  cfg.channel_swap = true;
  cfg.p_other = 1.0;
  std::vector<Sample> batch = {random_sample(1, 1), random_sample(2, 1)};
  auto out = apply_pipeline(batch, cfg, 5);
  CHECK(same(out[0], batch[0]));
}
