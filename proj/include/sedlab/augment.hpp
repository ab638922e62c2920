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

#include <array>
#include <cstdint>
#include <vector>

#include "sedlab/common.hpp"
#include "sedlab/features.hpp"
#include "sedlab/label_grid.hpp"

namespace sedlab {

struct AugmentConfig {
  bool mixup = false;        // MU
  bool cutout = false;       // CO
  bool freq_shift = false;   // FS
  bool channel_swap = false; // CS
  double p_mixup = 0.8;
  double p_other = 0.5;
  double mixup_alpha = 0.5;
  double mixup_beta = 0.5;
  double mixup_skip_lo = 0.3;
  double mixup_skip_hi = 0.7;
  int fs_max_bins = 10;
  double cutout_area_min = 0.02;
  double cutout_area_max = 0.30;
  int multi_cutout_count = 8;
  int multi_cutout_size = 8;
  double specaug_time_frac = 0.15;
  double specaug_freq_frac = 0.20;

  void validate() const;
  bool any() const { return mixup || cutout || freq_shift || channel_swap; }
};

/// One training pair: normalized features and (possibly soft) labels.
struct Sample {
  FeatureTensor features;
  LabelGrid labels;
};

struct Gates {
  bool mixup = false;
  bool cutout = false;
  bool freq_shift = false;
  bool channel_swap = false;
};

/// Per-sample random streams. Each operation reads only its own stream, so
/// enabling or disabling one augmentation never shifts the draws of another.
struct SampleStreams {
  std::uint64_t base;
  Rng gates() const { return Rng(derive_seed(base, 0)); }
  Rng mixup() const { return Rng(derive_seed(base, 1)); }
  Rng cutout() const { return Rng(derive_seed(base, 2)); }
  Rng freq_shift() const { return Rng(derive_seed(base, 3)); }
  Rng channel_swap() const { return Rng(derive_seed(base, 4)); }
};

SampleStreams sample_streams(std::uint64_t batch_seed, std::size_t sample_index);

/// Draws all four gates (in MU, CO, FS, CS order) regardless of flags.
Gates draw_gates(const AugmentConfig& cfg, Rng& rng);

double draw_mixup_weight(const AugmentConfig& cfg, Rng& rng);
Sample mixup_with_weight(const Sample& a, const Sample& b, double lambda, const AugmentConfig& cfg);
Sample mixup(const Sample& a, const Sample& b, const AugmentConfig& cfg, Rng& rng);

/// Shifts every channel along the mel axis by k bins (positive = up);
/// vacated bins are zero.
Sample freq_shift_by(const Sample& s, int k);
Sample freq_shift(const Sample& s, const AugmentConfig& cfg, Rng& rng);

/// Output channel i takes input channel perm[i].
Sample permute_channels(const Sample& s, const std::array<int, 4>& perm);
std::array<int, 4> nth_permutation(int index);
Sample channel_swap(const Sample& s, Rng& rng);

struct Rect {
  std::size_t t0 = 0, t_len = 0, f0 = 0, f_len = 0;
};

Sample fill_rect(const Sample& s, const Rect& r, float value);
Sample single_cutout(const Sample& s, const AugmentConfig& cfg, Rng& rng);
Sample multi_cutout(const Sample& s, const AugmentConfig& cfg, Rng& rng);
Sample spec_augment(const Sample& s, const Rect& time_stripe, const Rect& freq_stripe);
Sample spec_augment(const Sample& s, const AugmentConfig& cfg, Rng& rng);

/// Picks single cutout, multiple cutouts or SpecAugment uniformly.
Sample cutout_composite(const Sample& s, const AugmentConfig& cfg, Rng& rng);

/// Applies MU -> CO -> FS -> CS per sample with independent gates. Mixup
/// partners are drawn uniformly from the other samples of the input batch.
std::vector<Sample> apply_pipeline(const std::vector<Sample>& batch, const AugmentConfig& cfg,
                                   std::uint64_t batch_seed);

}  // namespace sedlab
