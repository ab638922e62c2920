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

#include "sedlab/augment.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace sedlab {

namespace {

double uniform01(Rng& rng) { return std::uniform_real_distribution<double>(0.0, 1.0)(rng); }

std::size_t uniform_index(Rng& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

void check_min_size(const Sample& s, std::size_t n) {
  if (s.features.frames < n || s.features.bins < n) {
    throw std::invalid_argument("cutout needs at least 8 frames and 8 bins");
  }
}

float draw_support_value(const FeatureTensor& x, Rng& rng) {
  auto [lo, hi] = std::minmax_element(x.values.begin(), x.values.end());
  return static_cast<float>(*lo + uniform01(rng) * (*hi - *lo));
}

}  // namespace

void AugmentConfig::validate() const {
  for (double p : {p_mixup, p_other}) {
    if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("augmentation probability outside [0,1]");
  }
  for (double f : {cutout_area_min, cutout_area_max, specaug_time_frac, specaug_freq_frac}) {
    if (!(f > 0.0 && f < 1.0)) throw std::invalid_argument("augmentation fraction outside (0,1)");
  }
  if (cutout_area_min > cutout_area_max) throw std::invalid_argument("cutout area range inverted");
}

SampleStreams sample_streams(std::uint64_t batch_seed, std::size_t sample_index) {
  return {derive_seed(batch_seed, sample_index)};
}

Gates draw_gates(const AugmentConfig& cfg, Rng& rng) {
  Gates g;
  g.mixup = uniform01(rng) < cfg.p_mixup;
  g.cutout = uniform01(rng) < cfg.p_other;
  g.freq_shift = uniform01(rng) < cfg.p_other;
  g.channel_swap = uniform01(rng) < cfg.p_other;
  return g;
}

double draw_mixup_weight(const AugmentConfig& cfg, Rng& rng) {
  std::gamma_distribution<double> ga(cfg.mixup_alpha, 1.0), gb(cfg.mixup_beta, 1.0);
  double x = ga(rng), y = gb(rng);
  return x / (x + y);
}

Sample mixup_with_weight(const Sample& a, const Sample& b, double lambda, const AugmentConfig& cfg) {
  if (!a.features.same_shape(b.features) || !a.labels.same_shape(b.labels)) {
    throw std::invalid_argument("mixup: sample shapes differ");
  }
  if (lambda >= cfg.mixup_skip_lo && lambda <= cfg.mixup_skip_hi) return a;
  Sample out = a;
  const float la = static_cast<float>(lambda), lb = static_cast<float>(1.0 - lambda);
  for (std::size_t i = 0; i < out.features.values.size(); ++i) {
    out.features.values[i] = la * a.features.values[i] + lb * b.features.values[i];
  }
  for (std::size_t i = 0; i < out.labels.values.size(); ++i) {
    out.labels.values[i] = std::clamp(la * a.labels.values[i] + lb * b.labels.values[i], 0.0f, 1.0f);
  }
  return out;
}

Sample mixup(const Sample& a, const Sample& b, const AugmentConfig& cfg, Rng& rng) {
  return mixup_with_weight(a, b, draw_mixup_weight(cfg, rng), cfg);
}

Sample freq_shift_by(const Sample& s, int k) {
  Sample out = s;
  const auto& x = s.features;
  const long F = static_cast<long>(x.bins);
  for (std::size_t c = 0; c < x.channels; ++c)
    for (std::size_t t = 0; t < x.frames; ++t)
      for (long f = 0; f < F; ++f) {
        long src = f - k;
        out.features.at(c, t, static_cast<std::size_t>(f)) =
            (src >= 0 && src < F) ? x.at(c, t, static_cast<std::size_t>(src)) : 0.0f;
      }
  return out;
}

Sample freq_shift(const Sample& s, const AugmentConfig& cfg, Rng& rng) {
  int k = std::uniform_int_distribution<int>(-cfg.fs_max_bins, cfg.fs_max_bins)(rng);
  return freq_shift_by(s, k);
}

std::array<int, 4> nth_permutation(int index) {
  if (index < 0 || index >= 24) throw std::out_of_range("permutation index");
  std::array<int, 4> p = {0, 1, 2, 3};
  for (int i = 0; i < index; ++i) std::next_permutation(p.begin(), p.end());
  return p;
}

Sample permute_channels(const Sample& s, const std::array<int, 4>& perm) {
  if (s.features.channels != 4) throw std::invalid_argument("channel swap needs 4 channels");
  Sample out = s;
  const std::size_t plane = s.features.frames * s.features.bins;
  for (std::size_t c = 0; c < 4; ++c) {
    auto src = s.features.values.begin() + static_cast<std::ptrdiff_t>(static_cast<std::size_t>(perm[c]) * plane);
    std::copy_n(src, plane, out.features.values.begin() + static_cast<std::ptrdiff_t>(c * plane));
  }
  return out;
}

Sample channel_swap(const Sample& s, Rng& rng) {
  return permute_channels(s, nth_permutation(std::uniform_int_distribution<int>(0, 23)(rng)));
}

namespace {

void fill_rect_inplace(FeatureTensor& x, const Rect& r, float value) {
  const std::size_t t_end = std::min(x.frames, r.t0 + r.t_len);
  const std::size_t f_end = std::min(x.bins, r.f0 + r.f_len);
  for (std::size_t c = 0; c < x.channels; ++c)
    for (std::size_t t = r.t0; t < t_end; ++t)
      for (std::size_t f = r.f0; f < f_end; ++f) x.at(c, t, f) = value;
}

}  // namespace

Sample fill_rect(const Sample& s, const Rect& r, float value) {
  Sample out = s;
  fill_rect_inplace(out.features, r, value);
  return out;
}

Sample single_cutout(const Sample& s, const AugmentConfig& cfg, Rng& rng) {
  check_min_size(s, 8);
  const auto& x = s.features;
  double area = cfg.cutout_area_min + uniform01(rng) * (cfg.cutout_area_max - cfg.cutout_area_min);
  // Same aspect ratio as the whole spectrogram.
  double side = std::sqrt(area);
  Rect r;
  r.t_len = std::clamp<std::size_t>(static_cast<std::size_t>(std::lround(side * static_cast<double>(x.frames))), 1, x.frames);
  r.f_len = std::clamp<std::size_t>(static_cast<std::size_t>(std::lround(side * static_cast<double>(x.bins))), 1, x.bins);
  r.t0 = uniform_index(rng, 0, x.frames - r.t_len);
  r.f0 = uniform_index(rng, 0, x.bins - r.f_len);
  return fill_rect(s, r, draw_support_value(x, rng));
}

Sample multi_cutout(const Sample& s, const AugmentConfig& cfg, Rng& rng) {
  check_min_size(s, static_cast<std::size_t>(cfg.multi_cutout_size));
  const auto n = static_cast<std::size_t>(cfg.multi_cutout_size);
  // Fill values come from the support of the original input.
  Sample out = s;
  for (int p = 0; p < cfg.multi_cutout_count; ++p) {
    Rect r{uniform_index(rng, 0, s.features.frames - n), n, uniform_index(rng, 0, s.features.bins - n), n};
    fill_rect_inplace(out.features, r, draw_support_value(s.features, rng));
  }
  return out;
}

Sample spec_augment(const Sample& s, const Rect& time_stripe, const Rect& freq_stripe) {
  Sample out = s;
  fill_rect_inplace(out.features, {time_stripe.t0, time_stripe.t_len, 0, s.features.bins}, 0.0f);
  fill_rect_inplace(out.features, {0, s.features.frames, freq_stripe.f0, freq_stripe.f_len}, 0.0f);
  return out;
}

Sample spec_augment(const Sample& s, const AugmentConfig& cfg, Rng& rng) {
  check_min_size(s, 8);
  const auto& x = s.features;
  auto max_t = static_cast<std::size_t>(std::floor(cfg.specaug_time_frac * static_cast<double>(x.frames)));
  auto max_f = static_cast<std::size_t>(std::floor(cfg.specaug_freq_frac * static_cast<double>(x.bins)));
  Rect ts, fs;
  ts.t_len = uniform_index(rng, 0, max_t);
  ts.t0 = uniform_index(rng, 0, x.frames - ts.t_len);
  fs.f_len = uniform_index(rng, 0, max_f);
  fs.f0 = uniform_index(rng, 0, x.bins - fs.f_len);
  return spec_augment(s, ts, fs);
}

Sample cutout_composite(const Sample& s, const AugmentConfig& cfg, Rng& rng) {
  check_min_size(s, 8);
  switch (std::uniform_int_distribution<int>(0, 2)(rng)) {
    case 0:
      return single_cutout(s, cfg, rng);
    case 1:
      return multi_cutout(s, cfg, rng);
    default:
      return spec_augment(s, cfg, rng);
  }
}

std::vector<Sample> apply_pipeline(const std::vector<Sample>& batch, const AugmentConfig& cfg,
                                   std::uint64_t batch_seed) {
  if (!cfg.any()) return batch;
  if (cfg.mixup && batch.size() < 2) throw std::invalid_argument("mixup needs a batch of at least 2");
  std::vector<Sample> out(batch.size());

#pragma omp parallel for schedule(static)
  for (std::size_t i = 0; i < batch.size(); ++i) {
    SampleStreams streams = sample_streams(batch_seed, i);
    Rng gate_rng = streams.gates();
    Gates g = draw_gates(cfg, gate_rng);
    Sample s = batch[i];
    if (cfg.mixup && g.mixup) {
      Rng rng = streams.mixup();
      std::size_t j = uniform_index(rng, 0, batch.size() - 2);
      if (j >= i) ++j;
      s = mixup(s, batch[j], cfg, rng);
    }
    if (cfg.cutout && g.cutout) {
      Rng rng = streams.cutout();
      s = cutout_composite(s, cfg, rng);
    }
    if (cfg.freq_shift && g.freq_shift) {
      Rng rng = streams.freq_shift();
      s = freq_shift(s, cfg, rng);
    }
    if (cfg.channel_swap && g.channel_swap && s.features.channels == 4) {
      Rng rng = streams.channel_swap();
      s = channel_swap(s, rng);
    }
    out[i] = std::move(s);
  }
  return out;
}

}  // namespace sedlab
