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
#include <complex>
#include <cstdint>
#include <limits>
#include <vector>

#include "sedlab/common.hpp"
#include "sedlab/label_grid.hpp"

namespace sedlab {

using Vec3 = std::array<double, 3>;

/// Direction of arrival, radians. Azimuth in (-pi, pi], elevation in
/// [-pi/2, pi/2].
struct Direction {
  double azimuth = 0.0;
  double elevation = 0.0;
};

/// Signal family used to synthesize an event. One family per class keeps
/// the classes separable on a log-mel spectrogram.
enum class AtomKind { Harmonic, UpChirp, DownChirp, NoiseBand, AmTone };

struct AtomSpec {
  AtomKind kind = AtomKind::Harmonic;
  double freq_a = 440.0;  // fundamental / start / centre / carrier, Hz
  double freq_b = 0.0;    // chirp end or band width or AM rate
  int partials = 1;
  /// Random +-3% frequency jitter per event instance.
  bool jitter = true;
};

/// Default atom family for each of the 12 classes.
const AtomSpec& class_atom(int class_id);

struct EventSpec {
  int class_id = 0;
  /// Onset and duration are kept in integer milliseconds so that the label
  /// CSV (3 decimals) reproduces the label grid exactly.
  std::int64_t onset_ms = 0;
  std::int64_t duration_ms = 0;
  AtomSpec atom;
  double gain = 0.1;
  /// One direction per 100 ms, length ceil(duration / 0.1 s).
  std::vector<Direction> trajectory;

  double onset_s() const { return onset_ms / 1000.0; }
  double duration_s() const { return duration_ms / 1000.0; }
  std::int64_t offset_ms() const { return onset_ms + duration_ms; }
};

struct SceneSpec {
  std::int64_t duration_ms = 0;
  std::vector<EventSpec> events;
  double noise_snr_db = std::numeric_limits<double>::infinity();
  std::uint64_t seed = 0;
  int n_classes = kDefaultClasses;
};

enum class ArrayKind { FOA, MIC };

struct ArrayFormat {
  ArrayKind kind = ArrayKind::FOA;
  std::array<Vec3, 4> capsule_dirs{};
  double radius = 0.042;
  double speed_of_sound = 343.0;

  static ArrayFormat foa();
  /// Tetrahedral capsules at (45,35), (-45,-35), (135,-35), (-135,35) deg.
  static ArrayFormat tetrahedral_mic(double radius = 0.042, double speed_of_sound = 343.0);

  int channels() const { return 4; }
};

/// C x N samples, channel-major.
struct MultichannelAudio {
  int sample_rate = kDefaultSampleRate;
  std::size_t channels = 0;
  std::size_t frames = 0;
  std::vector<float> samples;

  MultichannelAudio() = default;
  MultichannelAudio(std::size_t c, std::size_t n, int fs = kDefaultSampleRate)
      : sample_rate(fs), channels(c), frames(n), samples(c * n, 0.0f) {}

  float* channel(std::size_t c) { return samples.data() + c * frames; }
  const float* channel(std::size_t c) const { return samples.data() + c * frames; }
};

struct RenderResult {
  MultichannelAudio audio;
  LabelGrid labels;
  /// Set when any sample exceeded full scale; samples are not clipped.
  bool clipped = false;
};

struct RenderOptions {
  int sample_rate = kDefaultSampleRate;
  bool add_noise = true;
};

/// Ambisonic (W, Y, Z, X) gains of a plane wave from `dir`.
std::array<double, 4> foa_response(double azimuth, double elevation);

/// Far-field phase term of one capsule at STFT bin `bin`:
/// exp(-j 2 pi bin d / (R v / fs)).
std::complex<double> mic_phase(int bin, double path_diff, int fft_size, int sample_rate,
                               double speed_of_sound = 343.0);

/// Path length difference of a capsule relative to the array centre.
/// Negative when the capsule faces the source (the wave arrives earlier).
double path_difference(const Vec3& capsule_dir, const Vec3& doa, double radius);

Vec3 direction_to_unit(const Direction& d);

/// Unwindowed, unit-peak event waveform before gain and spatialization.
std::vector<float> synthesize_atom(const AtomSpec& atom, std::size_t n_samples, int sample_rate,
                                   std::uint64_t seed);

/// Fractional delay by a 32-tap Kaiser-windowed sinc. `delay` may be
/// negative; samples outside the input are treated as zero.
std::vector<float> fractional_delay(const std::vector<float>& x, double delay_samples);

/// Activity grid at 100 ms frames: a frame is active for a class when it
/// overlaps [onset, onset + duration) of any event of that class.
LabelGrid scene_labels(const SceneSpec& spec);

void validate(const SceneSpec& spec);

RenderResult render_scene(const SceneSpec& spec, const ArrayFormat& fmt,
                          const RenderOptions& opts = {});

/// Omnidirectional (FOA) or first capsule (MIC) channel.
MultichannelAudio mono_select(const MultichannelAudio& audio, ArrayKind kind);

}  // namespace sedlab
