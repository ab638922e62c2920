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

#include "sedlab/scene.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace sedlab {

namespace {

constexpr int kDelayTaps = 32;
constexpr double kKaiserBeta = 8.0;
constexpr double kCrossfadeSeconds = 0.010;
constexpr double kFadeSeconds = 0.020;

Vec3 unit_from_degrees(double az_deg, double el_deg) {
  return direction_to_unit({az_deg * kPi / 180.0, el_deg * kPi / 180.0});
}

double dot(const Vec3& a, const Vec3& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }

double sinc(double x) {
  if (std::abs(x) < 1e-12) return 1.0;
  return std::sin(kPi * x) / (kPi * x);
}

double kaiser(double x, double half_width) {
  double r = x / half_width;
  if (std::abs(r) >= 1.0) return 0.0;
  return std::cyl_bessel_i(0.0, kKaiserBeta * std::sqrt(1.0 - r * r)) /
         std::cyl_bessel_i(0.0, kKaiserBeta);
}

// Taps for y[n] = sum_j taps[j] * x[n - base - j + 15], base = floor(delay).
struct DelayKernel {
  long base = 0;
  std::array<double, kDelayTaps> taps{};
};

DelayKernel make_delay_kernel(double delay) {
  DelayKernel k;
  k.base = static_cast<long>(std::floor(delay));
  double frac = delay - static_cast<double>(k.base);
  const double half = kDelayTaps / 2.0;
  for (int j = 0; j < kDelayTaps; ++j) {
    // Tap j reads x[n - base - (j - 15)], at distance (j - 15) - frac from n - delay.
    double off = static_cast<double>(j - (kDelayTaps / 2 - 1)) - frac;
    k.taps[static_cast<std::size_t>(j)] = sinc(off) * kaiser(off, half);
  }
  return k;
}

double delayed_sample(const std::vector<float>& x, long n, const DelayKernel& k) {
  double acc = 0.0;
  const long n_in = static_cast<long>(x.size());
  for (int j = 0; j < kDelayTaps; ++j) {
    long m = n - k.base - (j - (kDelayTaps / 2 - 1));
    if (m < 0 || m >= n_in) continue;
    acc += k.taps[static_cast<std::size_t>(j)] * x[static_cast<std::size_t>(m)];
  }
  return acc;
}

void biquad_bandpass(std::vector<double>& x, double centre, double bandwidth, int fs) {
  double w0 = 2.0 * kPi * centre / fs;
  double q = std::max(centre / std::max(bandwidth, 1.0), 0.3);
  double alpha = std::sin(w0) / (2.0 * q);
  double a0 = 1.0 + alpha;
  double b0 = alpha / a0, b2 = -alpha / a0;
  double a1 = -2.0 * std::cos(w0) / a0, a2 = (1.0 - alpha) / a0;
  double x1 = 0, x2 = 0, y1 = 0, y2 = 0;
  for (double& v : x) {
    double y = b0 * v + b2 * x2 - a1 * y1 - a2 * y2;
    x2 = x1;
    x1 = v;
    y2 = y1;
    y1 = y;
    v = y;
  }
}

std::int64_t samples_for_ms(std::int64_t ms, int fs) { return ms * fs / 1000; }

}  // namespace

const AtomSpec& class_atom(int class_id) {
  static const std::array<AtomSpec, kDefaultClasses> atoms = {{
      {AtomKind::Harmonic, 220.0, 0.0, 8},
      {AtomKind::Harmonic, 520.0, 0.0, 5},
      {AtomKind::Harmonic, 1150.0, 0.0, 3},
      {AtomKind::UpChirp, 400.0, 3200.0, 1},
      {AtomKind::DownChirp, 6000.0, 900.0, 1},
      {AtomKind::NoiseBand, 350.0, 200.0, 1},
      {AtomKind::NoiseBand, 1500.0, 600.0, 1},
      {AtomKind::NoiseBand, 4200.0, 1500.0, 1},
      {AtomKind::NoiseBand, 9000.0, 2500.0, 1},
      {AtomKind::AmTone, 800.0, 8.0, 1},
      {AtomKind::AmTone, 2500.0, 3.0, 1},
      {AtomKind::AmTone, 6500.0, 14.0, 1},
  }};
  if (class_id < 0 || class_id >= kDefaultClasses) {
    throw std::out_of_range("class_atom: class id " + std::to_string(class_id));
  }
  return atoms[static_cast<std::size_t>(class_id)];
}

ArrayFormat ArrayFormat::foa() {
  ArrayFormat f;
  f.kind = ArrayKind::FOA;
  return f;
}

ArrayFormat ArrayFormat::tetrahedral_mic(double radius, double speed_of_sound) {
  if (!(radius > 0.0)) throw std::invalid_argument("array radius must be positive");
  ArrayFormat f;
  f.kind = ArrayKind::MIC;
  f.radius = radius;
  f.speed_of_sound = speed_of_sound;
  f.capsule_dirs = {unit_from_degrees(45, 35), unit_from_degrees(-45, -35),
                    unit_from_degrees(135, -35), unit_from_degrees(-135, 35)};
  return f;
}

std::array<double, 4> foa_response(double azimuth, double elevation) {
  if (!std::isfinite(azimuth) || !std::isfinite(elevation)) {
    throw std::invalid_argument("foa_response: non-finite angle");
  }
  double ce = std::cos(elevation);
  return {1.0, std::sin(azimuth) * ce, std::sin(elevation), std::cos(azimuth) * ce};
}

std::complex<double> mic_phase(int bin, double path_diff, int fft_size, int sample_rate,
                               double speed_of_sound) {
  if (fft_size <= 0 || sample_rate <= 0 || !(speed_of_sound > 0.0)) {
    throw std::invalid_argument("mic_phase: fft size, sample rate and v must be positive");
  }
  if (bin < 0 || bin > fft_size / 2) throw std::invalid_argument("mic_phase: bin out of range");
  double angle = -2.0 * kPi * bin * path_diff * sample_rate /
                 (static_cast<double>(fft_size) * speed_of_sound);
  return std::polar(1.0, angle);
}

double path_difference(const Vec3& capsule_dir, const Vec3& doa, double radius) {
  if (std::abs(std::sqrt(dot(capsule_dir, capsule_dir)) - 1.0) > 1e-6 ||
      std::abs(std::sqrt(dot(doa, doa)) - 1.0) > 1e-6) {
    throw std::invalid_argument("path_difference: inputs must be unit vectors");
  }
  return -radius * dot(capsule_dir, doa);
}

Vec3 direction_to_unit(const Direction& d) {
  double ce = std::cos(d.elevation);
  return {ce * std::cos(d.azimuth), ce * std::sin(d.azimuth), std::sin(d.elevation)};
}

std::vector<float> synthesize_atom(const AtomSpec& atom, std::size_t n, int fs,
                                   std::uint64_t seed) {
  Rng rng(seed);
  std::uniform_real_distribution<double> phase_dist(0.0, 2.0 * kPi);
  std::uniform_real_distribution<double> detune_dist(0.97, 1.03);
  const double detune = atom.jitter ? detune_dist(rng) : 1.0;
  const double nyq = 0.45 * fs;
  std::vector<double> x(n, 0.0);

  switch (atom.kind) {
    case AtomKind::Harmonic: {
      double f0 = atom.freq_a * detune;
      for (int k = 1; k <= atom.partials; ++k) {
        double f = f0 * k;
        if (f >= nyq) break;
        double ph = phase_dist(rng);
        double amp = 1.0 / k;
        double w = 2.0 * kPi * f / fs;
        for (std::size_t i = 0; i < n; ++i) x[i] += amp * std::sin(w * static_cast<double>(i) + ph);
      }
      break;
    }
    case AtomKind::UpChirp:
    case AtomKind::DownChirp: {
      // Repeating exponential sweeps, 0.5 s each, phase-continuous.
      const double period = 0.5 * fs;
      double f_start = atom.freq_a * detune, f_end = atom.freq_b * detune;
      double ratio = std::log(f_end / f_start);
      double ph = phase_dist(rng);
      for (std::size_t i = 0; i < n; ++i) {
        double pos = std::fmod(static_cast<double>(i), period) / period;
        double f = f_start * std::exp(ratio * pos);
        ph += 2.0 * kPi * f / fs;
        x[i] = std::sin(ph);
      }
      break;
    }
    case AtomKind::NoiseBand: {
      std::normal_distribution<double> g(0.0, 1.0);
      for (auto& v : x) v = g(rng);
      biquad_bandpass(x, atom.freq_a * detune, atom.freq_b, fs);
      biquad_bandpass(x, atom.freq_a * detune, atom.freq_b, fs);
      break;
    }
    case AtomKind::AmTone: {
      double fc = atom.freq_a * detune;
      double fm = atom.freq_b;
      double ph = phase_dist(rng);
      for (std::size_t i = 0; i < n; ++i) {
        double t = static_cast<double>(i) / fs;
        x[i] = std::sin(2.0 * kPi * fc * t + ph) * (0.55 + 0.45 * std::sin(2.0 * kPi * fm * t));
      }
      break;
    }
  }

  double peak = 0.0;
  for (double v : x) peak = std::max(peak, std::abs(v));
  if (peak > 0.0) {
    for (double& v : x) v /= peak;
  }
  std::size_t fade = std::min<std::size_t>(static_cast<std::size_t>(kFadeSeconds * fs), n / 2);
  for (std::size_t i = 0; i < fade; ++i) {
    double g = 0.5 * (1.0 - std::cos(kPi * static_cast<double>(i) / static_cast<double>(fade)));
    x[i] *= g;
    x[n - 1 - i] *= g;
  }
  return {x.begin(), x.end()};
}

std::vector<float> fractional_delay(const std::vector<float>& x, double delay) {
  DelayKernel k = make_delay_kernel(delay);
  std::vector<float> y(x.size());
  for (std::size_t n = 0; n < x.size(); ++n) {
    y[n] = static_cast<float>(delayed_sample(x, static_cast<long>(n), k));
  }
  return y;
}

void validate(const SceneSpec& spec) {
  if (spec.duration_ms <= 0) throw std::invalid_argument("scene duration must be positive");
  for (const auto& e : spec.events) {
    if (e.class_id < 0 || e.class_id >= spec.n_classes) {
      throw std::invalid_argument("event class out of range");
    }
    if (e.onset_ms < 0 || e.duration_ms <= 0) {
      throw std::invalid_argument("event needs onset >= 0 and duration > 0");
    }
    if (e.offset_ms() > spec.duration_ms) {
      throw std::invalid_argument("event extends past the end of the scene");
    }
    auto expected = static_cast<std::size_t>((e.duration_ms + 99) / 100);
    if (e.trajectory.size() != expected) {
      throw std::invalid_argument("trajectory must hold one direction per 100 ms");
    }
    for (const auto& d : e.trajectory) {
      if (!(d.azimuth > -kPi && d.azimuth <= kPi) ||
          !(d.elevation >= -kPi / 2 && d.elevation <= kPi / 2)) {
        throw std::invalid_argument("trajectory angle outside its domain");
      }
    }
  }
}

LabelGrid scene_labels(const SceneSpec& spec) {
  auto n_frames = static_cast<std::size_t>((spec.duration_ms + 99) / 100);
  LabelGrid grid(n_frames, static_cast<std::size_t>(spec.n_classes));
  for (const auto& e : spec.events) {
    auto first = static_cast<std::size_t>(e.onset_ms / 100);
    auto last = static_cast<std::size_t>((e.offset_ms() + 99) / 100);
    last = std::min(last, n_frames);
    for (std::size_t t = first; t < last; ++t) grid.at(t, static_cast<std::size_t>(e.class_id)) = 1.0f;
  }
  return grid;
}

RenderResult render_scene(const SceneSpec& spec, const ArrayFormat& fmt,
                          const RenderOptions& opts) {
  validate(spec);
  const int fs = opts.sample_rate;
  const auto n_total = static_cast<std::size_t>(samples_for_ms(spec.duration_ms, fs));
  const std::size_t seg_len = static_cast<std::size_t>(fs / 10);
  const std::size_t xfade = static_cast<std::size_t>(kCrossfadeSeconds * fs);

  RenderResult out;
  out.audio = MultichannelAudio(4, n_total, fs);
  std::vector<std::vector<double>> mix(4, std::vector<double>(n_total, 0.0));

  for (std::size_t ei = 0; ei < spec.events.size(); ++ei) {
    const EventSpec& e = spec.events[ei];
    const auto start = static_cast<std::size_t>(samples_for_ms(e.onset_ms, fs));
    const auto len = static_cast<std::size_t>(samples_for_ms(e.duration_ms, fs));
    std::vector<float> atom = synthesize_atom(e.atom, len, fs, derive_seed(spec.seed, ei + 1));
    for (auto& v : atom) v = static_cast<float>(v * e.gain);

    auto segment_of = [&](std::size_t i) {
      return std::min(i / seg_len, e.trajectory.size() - 1);
    };
    // Weight of the current segment's response at sample i; the previous
    // segment's response fades out linearly over the first 10 ms.
    auto blend = [&](std::size_t i) {
      std::size_t s = segment_of(i);
      std::size_t into = i - s * seg_len;
      if (s == 0 || into >= xfade) return 1.0;
      return static_cast<double>(into) / static_cast<double>(xfade);
    };

    if (fmt.kind == ArrayKind::FOA) {
      std::vector<std::array<double, 4>> gains;
      gains.reserve(e.trajectory.size());
      for (const auto& d : e.trajectory) gains.push_back(foa_response(d.azimuth, d.elevation));
      for (std::size_t i = 0; i < len; ++i) {
        std::size_t s = segment_of(i);
        double a = blend(i);
        for (std::size_t c = 0; c < 4; ++c) {
          double g = gains[s][c];
          if (a < 1.0) g = a * g + (1.0 - a) * gains[s - 1][c];
          mix[c][start + i] += g * atom[i];
        }
      }
    } else {
      for (std::size_t c = 0; c < 4; ++c) {
        std::vector<DelayKernel> kernels;
        kernels.reserve(e.trajectory.size());
        for (const auto& d : e.trajectory) {
          double pd = path_difference(fmt.capsule_dirs[c], direction_to_unit(d), fmt.radius);
          kernels.push_back(make_delay_kernel(pd * fs / fmt.speed_of_sound));
        }
        // The delayed event may ring a few samples past its support.
        const long pad = kDelayTaps;
        for (long i = -pad; i < static_cast<long>(len) + pad; ++i) {
          long n = static_cast<long>(start) + i;
          if (n < 0 || n >= static_cast<long>(n_total)) continue;
          std::size_t ic = static_cast<std::size_t>(std::clamp<long>(i, 0, static_cast<long>(len) - 1));
          std::size_t s = segment_of(ic);
          double a = blend(ic);
          double v = delayed_sample(atom, i, kernels[s]);
          if (a < 1.0) v = a * v + (1.0 - a) * delayed_sample(atom, i, kernels[s - 1]);
          mix[c][static_cast<std::size_t>(n)] += v;
        }
      }
    }
  }

  if (opts.add_noise && std::isfinite(spec.noise_snr_db) && n_total > 0) {
    double power = 0.0;
    for (const auto& ch : mix)
      for (double v : ch) power += v * v;
    power /= static_cast<double>(4 * n_total);
    double sigma = std::sqrt(power / std::pow(10.0, spec.noise_snr_db / 10.0));
    Rng rng(derive_seed(spec.seed, 0));
    std::normal_distribution<double> g(0.0, 1.0);
    for (std::size_t c = 0; c < 4; ++c) {
      // Ambisonic diffuse noise: full level on W, half amplitude on X/Y/Z.
      double s = (fmt.kind == ArrayKind::FOA && c > 0) ? 0.5 * sigma : sigma;
      for (auto& v : mix[c]) v += s * g(rng);
    }
  }

  for (std::size_t c = 0; c < 4; ++c) {
    float* dst = out.audio.channel(c);
    for (std::size_t i = 0; i < n_total; ++i) {
      dst[i] = static_cast<float>(mix[c][i]);
      if (std::abs(dst[i]) > 1.0f) out.clipped = true;
    }
  }
  out.labels = scene_labels(spec);
  return out;
}

MultichannelAudio mono_select(const MultichannelAudio& audio, ArrayKind) {
  if (audio.channels != 4) throw std::invalid_argument("mono_select expects 4 channels");
  // W for FOA and capsule 0 for MIC are both channel 0.
  MultichannelAudio out(1, audio.frames, audio.sample_rate);
  std::copy(audio.channel(0), audio.channel(0) + audio.frames, out.channel(0));
  return out;
}

}  // namespace sedlab
