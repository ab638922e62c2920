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

#include <complex>
#include <cstddef>
#include <filesystem>
#include <span>
#include <vector>

#include "sedlab/scene.hpp"

namespace sedlab {

struct StftConfig {
  int fft_size = 1024;
  int hop = 300;
  int sample_rate = kDefaultSampleRate;
  bool centered = true;

  void validate() const;
  int bins() const { return fft_size / 2 + 1; }
  double frame_rate() const { return static_cast<double>(sample_rate) / hop; }
};

struct MelConfig {
  int n_mels = 128;
  double f_min = 50.0;
  double f_max = 12000.0;
  double log_floor = 1e-10;
};

/// Frames x bins, row-major.
struct Spectrogram {
  std::size_t frames = 0;
  std::size_t bins = 0;
  std::vector<std::complex<double>> values;

  std::complex<double> at(std::size_t t, std::size_t k) const { return values[t * bins + k]; }
};

/// C x T x F, channel-major then frame-major.
struct FeatureTensor {
  std::size_t channels = 0;
  std::size_t frames = 0;
  std::size_t bins = 0;
  std::vector<float> values;
  double frame_rate = 80.0;
  bool normalized = false;

  FeatureTensor() = default;
  FeatureTensor(std::size_t c, std::size_t t, std::size_t f, float fill = 0.0f)
      : channels(c), frames(t), bins(f), values(c * t * f, fill) {}

  std::size_t index(std::size_t c, std::size_t t, std::size_t f) const {
    return (c * frames + t) * bins + f;
  }
  float& at(std::size_t c, std::size_t t, std::size_t f) { return values[index(c, t, f)]; }
  float at(std::size_t c, std::size_t t, std::size_t f) const { return values[index(c, t, f)]; }
  bool same_shape(const FeatureTensor& o) const {
    return channels == o.channels && frames == o.frames && bins == o.bins;
  }
  /// Frames [begin, begin + count) of every channel.
  FeatureTensor slice(std::size_t begin, std::size_t count) const;

  friend bool operator==(const FeatureTensor&, const FeatureTensor&) = default;
};

double hz_to_mel(double hz);
double mel_to_hz(double mel);

/// Periodic Hann window, w[n] = 0.5 (1 - cos(2 pi n / R)).
std::vector<double> hann_window(int size);

/// Centered STFT with reflection padding of R/2 on both sides, producing
/// floor(N / hop) + 1 frames. Unnormalized DFT: X[k] = sum_n w[n] x[n]
/// exp(-j 2 pi k n / R), so the full-spectrum energy of a frame is R times
/// the windowed-signal energy.
Spectrogram stft(std::span<const float> audio, const StftConfig& cfg);

/// Triangular HTK-mel filterbank, n_mels x (R/2 + 1), row-major. Filter k
/// rises from centre k-1 to centre k and falls to centre k+1, with n_mels + 2
/// points spaced uniformly in mel between f_min and f_max. Peak weight 1.
struct MelFilterbank {
  std::size_t n_mels = 0;
  std::size_t bins = 0;
  std::vector<double> weights;
  /// Nonzero support [first, last) of each row.
  std::vector<std::pair<std::size_t, std::size_t>> support;
  std::vector<double> centers_hz;

  double at(std::size_t m, std::size_t k) const { return weights[m * bins + k]; }
};

MelFilterbank mel_filterbank(const MelConfig& mel, const StftConfig& stft_cfg);

/// Natural-log mel energies of the power spectrogram, per channel.
FeatureTensor logmel(const MultichannelAudio& audio, const StftConfig& stft_cfg,
                     const MelConfig& mel_cfg);

/// Projects a power spectrogram (frames x bins) through the filterbank and
/// takes ln(x + floor). Exposed for the monotonicity property.
std::vector<float> logmel_from_power(std::span<const double> power, std::size_t frames,
                                     const MelFilterbank& fb, double log_floor);

/// Per-(channel, mel bin) z-score statistics over a training split.
struct NormStats {
  std::size_t channels = 0;
  std::size_t bins = 0;
  std::vector<double> mean;
  std::vector<double> std;

  bool fitted() const { return channels > 0 && bins > 0; }
  friend bool operator==(const NormStats&, const NormStats&) = default;
};

inline constexpr double kNormStdFloor = 1e-8;

/// Mean and (population) standard deviation per (channel, bin) over every
/// frame of every tensor. Two passes, tensors then frames in order.
NormStats fit_norm_stats(std::span<const FeatureTensor> tensors);
NormStats fit_norm_stats(const std::vector<const FeatureTensor*>& tensors);
FeatureTensor apply_norm(const FeatureTensor& x, const NormStats& stats);
FeatureTensor unapply_norm(const FeatureTensor& x, const NormStats& stats);

/// 16-byte header ("SEDLNORM", u32 C, u32 F) then f64 means, f64 stds, LE.
void save_norm_stats(const std::filesystem::path& path, const NormStats& stats);
NormStats load_norm_stats(const std::filesystem::path& path);

}  // namespace sedlab
