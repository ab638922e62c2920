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

#include "sedlab/features.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <memory>
#include <mutex>
#include <stdexcept>

namespace sedlab {

namespace {

// FFTW planning is not thread-safe; execution with new-array execute is.
std::mutex& planner_mutex() {
  static std::mutex mu;
  return mu;
}

class RealFft {
 public:
  explicit RealFft(int n) : n_(n) {
    in_ = fftw_alloc_real(static_cast<std::size_t>(n));
    out_ = fftw_alloc_complex(static_cast<std::size_t>(n / 2 + 1));
    std::lock_guard<std::mutex> lock(planner_mutex());
    plan_ = fftw_plan_dft_r2c_1d(n, in_, out_, FFTW_ESTIMATE);
  }
  ~RealFft() {
    {
      std::lock_guard<std::mutex> lock(planner_mutex());
      fftw_destroy_plan(plan_);
    }
    fftw_free(in_);
    fftw_free(out_);
  }
  RealFft(const RealFft&) = delete;
  RealFft& operator=(const RealFft&) = delete;

  double* input() { return in_; }
  void run(std::complex<double>* dst) {
    fftw_execute(plan_);
    for (int k = 0; k <= n_ / 2; ++k) dst[k] = {out_[k][0], out_[k][1]};
  }

 private:
  int n_;
  double* in_;
  fftw_complex* out_;
  fftw_plan plan_;
};

std::size_t reflect_index(long i, std::size_t n) {
  if (n == 1) return 0;
  const long period = 2 * (static_cast<long>(n) - 1);
  i %= period;
  if (i < 0) i += period;
  if (i >= static_cast<long>(n)) i = period - i;
  return static_cast<std::size_t>(i);
}

constexpr char kNormMagic[8] = {'S', 'E', 'D', 'L', 'N', 'O', 'R', 'M'};

}  // namespace

void StftConfig::validate() const {
  if (fft_size <= 0 || (fft_size & (fft_size - 1)) != 0) {
    throw std::invalid_argument("fft_size must be a power of two");
  }
  if (hop <= 0 || hop >= fft_size) throw std::invalid_argument("hop must be in (0, fft_size)");
  if (sample_rate <= 0) throw std::invalid_argument("sample_rate must be positive");
}

FeatureTensor FeatureTensor::slice(std::size_t begin, std::size_t count) const {
  if (begin + count > frames) throw std::out_of_range("FeatureTensor::slice");
  FeatureTensor out(channels, count, bins);
  out.frame_rate = frame_rate;
  out.normalized = normalized;
  for (std::size_t c = 0; c < channels; ++c) {
    std::copy_n(values.begin() + static_cast<std::ptrdiff_t>(index(c, begin, 0)), count * bins,
                out.values.begin() + static_cast<std::ptrdiff_t>(out.index(c, 0, 0)));
  }
  return out;
}

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

std::vector<double> hann_window(int size) {
  std::vector<double> w(static_cast<std::size_t>(size));
  for (int n = 0; n < size; ++n) w[static_cast<std::size_t>(n)] = 0.5 * (1.0 - std::cos(2.0 * kPi * n / size));
  return w;
}

Spectrogram stft(std::span<const float> audio, const StftConfig& cfg) {
  cfg.validate();
  if (audio.empty()) throw std::invalid_argument("stft: empty input");
  const std::size_t n = audio.size();
  const std::size_t R = static_cast<std::size_t>(cfg.fft_size);
  const std::size_t hop = static_cast<std::size_t>(cfg.hop);
  const long pad = cfg.centered ? static_cast<long>(R / 2) : 0;
  const std::size_t frames = cfg.centered ? n / hop + 1 : (n >= R ? (n - R) / hop + 1 : 0);

  Spectrogram spec;
  spec.frames = frames;
  spec.bins = R / 2 + 1;
  spec.values.resize(frames * spec.bins);
  const std::vector<double> window = hann_window(cfg.fft_size);
  RealFft fft(cfg.fft_size);
  double* buf = fft.input();
  for (std::size_t t = 0; t < frames; ++t) {
    const long start = static_cast<long>(t * hop) - pad;
    for (std::size_t i = 0; i < R; ++i) {
      long src = start + static_cast<long>(i);
      std::size_t idx = (src >= 0 && src < static_cast<long>(n)) ? static_cast<std::size_t>(src)
                                                                 : reflect_index(src, n);
      buf[i] = window[i] * static_cast<double>(audio[idx]);
    }
    fft.run(spec.values.data() + t * spec.bins);
  }
  return spec;
}

MelFilterbank mel_filterbank(const MelConfig& mel, const StftConfig& stft_cfg) {
  stft_cfg.validate();
  if (mel.n_mels < 1) throw std::invalid_argument("n_mels must be >= 1");
  if (!(mel.f_min >= 0.0 && mel.f_min < mel.f_max && mel.f_max <= stft_cfg.sample_rate / 2.0)) {
    throw std::invalid_argument("mel band must satisfy 0 <= f_min < f_max <= fs/2");
  }
  MelFilterbank fb;
  fb.n_mels = static_cast<std::size_t>(mel.n_mels);
  fb.bins = static_cast<std::size_t>(stft_cfg.bins());
  fb.weights.assign(fb.n_mels * fb.bins, 0.0);
  fb.support.resize(fb.n_mels);

  const double lo = hz_to_mel(mel.f_min), hi = hz_to_mel(mel.f_max);
  std::vector<double> pts(fb.n_mels + 2);
  for (std::size_t i = 0; i < pts.size(); ++i) {
    pts[i] = mel_to_hz(lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(fb.n_mels + 1));
  }
  const double bin_hz = static_cast<double>(stft_cfg.sample_rate) / stft_cfg.fft_size;
  for (std::size_t m = 0; m < fb.n_mels; ++m) {
    const double left = pts[m], centre = pts[m + 1], right = pts[m + 2];
    fb.centers_hz.push_back(centre);
    std::size_t first = fb.bins, last = 0;
    for (std::size_t k = 0; k < fb.bins; ++k) {
      double f = static_cast<double>(k) * bin_hz;
      double w = 0.0;
      if (f > left && f <= centre) {
        w = (f - left) / (centre - left);
      } else if (f > centre && f < right) {
        w = (right - f) / (right - centre);
      }
      if (w > 0.0) {
        fb.weights[m * fb.bins + k] = w;
        first = std::min(first, k);
        last = k + 1;
      }
    }
    if (last == 0) {
      throw std::invalid_argument("mel filter " + std::to_string(m) +
                                  " has no FFT bins; too many mel bands for this resolution");
    }
    fb.support[m] = {first, last};
  }
  return fb;
}

std::vector<float> logmel_from_power(std::span<const double> power, std::size_t frames,
                                     const MelFilterbank& fb, double log_floor) {
  std::vector<float> out(frames * fb.n_mels);
  for (std::size_t t = 0; t < frames; ++t) {
    const double* p = power.data() + t * fb.bins;
    for (std::size_t m = 0; m < fb.n_mels; ++m) {
      double acc = 0.0;
      const double* w = fb.weights.data() + m * fb.bins;
      for (std::size_t k = fb.support[m].first; k < fb.support[m].second; ++k) acc += w[k] * p[k];
      out[t * fb.n_mels + m] = static_cast<float>(std::log(acc + log_floor));
    }
  }
  return out;
}

FeatureTensor logmel(const MultichannelAudio& audio, const StftConfig& stft_cfg,
                     const MelConfig& mel_cfg) {
  const MelFilterbank fb = mel_filterbank(mel_cfg, stft_cfg);
  if (audio.frames == 0 || audio.channels == 0) throw std::invalid_argument("logmel: empty audio");
  const std::size_t frames = stft_cfg.centered ? audio.frames / static_cast<std::size_t>(stft_cfg.hop) + 1 : 0;
  FeatureTensor out(audio.channels, frames, fb.n_mels);
  out.frame_rate = stft_cfg.frame_rate();

#pragma omp parallel for schedule(static)
  for (std::size_t c = 0; c < audio.channels; ++c) {
    Spectrogram s = stft({audio.channel(c), audio.frames}, stft_cfg);
    std::vector<double> power(s.values.size());
    for (std::size_t i = 0; i < power.size(); ++i) power[i] = std::norm(s.values[i]);
    std::vector<float> lm = logmel_from_power(power, s.frames, fb, mel_cfg.log_floor);
    std::copy(lm.begin(), lm.end(), out.values.begin() + static_cast<std::ptrdiff_t>(out.index(c, 0, 0)));
  }
  return out;
}

NormStats fit_norm_stats(const std::vector<const FeatureTensor*>& tensors) {
  if (tensors.empty()) throw std::invalid_argument("fit_norm_stats needs at least one tensor");
  NormStats st;
  st.channels = tensors[0]->channels;
  st.bins = tensors[0]->bins;
  const std::size_t cf = st.channels * st.bins;
  st.mean.assign(cf, 0.0);
  st.std.assign(cf, 0.0);
  std::size_t count = 0;
  for (const FeatureTensor* xp : tensors) {
    const FeatureTensor& x = *xp;
    if (x.channels != st.channels || x.bins != st.bins) {
      throw std::invalid_argument("fit_norm_stats: inconsistent tensor shapes");
    }
    count += x.frames;
    for (std::size_t c = 0; c < x.channels; ++c)
      for (std::size_t t = 0; t < x.frames; ++t)
        for (std::size_t f = 0; f < x.bins; ++f) st.mean[c * st.bins + f] += x.at(c, t, f);
  }
  if (count == 0) throw std::invalid_argument("fit_norm_stats: no frames");
  for (auto& m : st.mean) m /= static_cast<double>(count);
  for (const FeatureTensor* xp : tensors) {
    const FeatureTensor& x = *xp;
    for (std::size_t c = 0; c < x.channels; ++c)
      for (std::size_t t = 0; t < x.frames; ++t)
        for (std::size_t f = 0; f < x.bins; ++f) {
          double d = x.at(c, t, f) - st.mean[c * st.bins + f];
          st.std[c * st.bins + f] += d * d;
        }
  }
  for (auto& s : st.std) s = std::max(std::sqrt(s / static_cast<double>(count)), kNormStdFloor);
  return st;
}

NormStats fit_norm_stats(std::span<const FeatureTensor> tensors) {
  std::vector<const FeatureTensor*> ptrs;
  for (const auto& x : tensors) ptrs.push_back(&x);
  return fit_norm_stats(ptrs);
}

namespace {

void check_stats(const FeatureTensor& x, const NormStats& stats) {
  if (!stats.fitted()) throw std::logic_error("normalization statistics have not been fitted");
  if (x.channels != stats.channels || x.bins != stats.bins) {
    throw std::invalid_argument("normalization statistics do not match tensor shape");
  }
}

}  // namespace

FeatureTensor apply_norm(const FeatureTensor& x, const NormStats& stats) {
  check_stats(x, stats);
  FeatureTensor out = x;
  for (std::size_t c = 0; c < x.channels; ++c)
    for (std::size_t t = 0; t < x.frames; ++t)
      for (std::size_t f = 0; f < x.bins; ++f) {
        std::size_t k = c * stats.bins + f;
        out.at(c, t, f) = static_cast<float>((x.at(c, t, f) - stats.mean[k]) / stats.std[k]);
      }
  out.normalized = true;
  return out;
}

FeatureTensor unapply_norm(const FeatureTensor& x, const NormStats& stats) {
  check_stats(x, stats);
  FeatureTensor out = x;
  for (std::size_t c = 0; c < x.channels; ++c)
    for (std::size_t t = 0; t < x.frames; ++t)
      for (std::size_t f = 0; f < x.bins; ++f) {
        std::size_t k = c * stats.bins + f;
        out.at(c, t, f) = static_cast<float>(x.at(c, t, f) * stats.std[k] + stats.mean[k]);
      }
  out.normalized = false;
  return out;
}

void save_norm_stats(const std::filesystem::path& path, const NormStats& stats) {
  if (!stats.fitted()) throw std::logic_error("cannot save unfitted normalization statistics");
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot open " + path.string() + " for writing");
  os.write(kNormMagic, 8);
  auto c = static_cast<std::uint32_t>(stats.channels), f = static_cast<std::uint32_t>(stats.bins);
  os.write(reinterpret_cast<const char*>(&c), 4);
  os.write(reinterpret_cast<const char*>(&f), 4);
  os.write(reinterpret_cast<const char*>(stats.mean.data()),
           static_cast<std::streamsize>(stats.mean.size() * sizeof(double)));
  os.write(reinterpret_cast<const char*>(stats.std.data()),
           static_cast<std::streamsize>(stats.std.size() * sizeof(double)));
  if (!os) throw DataError("failed writing " + path.string());
}

NormStats load_norm_stats(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open " + path.string());
  char magic[8];
  std::uint32_t c = 0, f = 0;
  is.read(magic, 8);
  is.read(reinterpret_cast<char*>(&c), 4);
  is.read(reinterpret_cast<char*>(&f), 4);
  if (!is || std::memcmp(magic, kNormMagic, 8) != 0) throw DataError(path.string() + ": not a norm stats file");
  NormStats st;
  st.channels = c;
  st.bins = f;
  st.mean.resize(static_cast<std::size_t>(c) * f);
  st.std.resize(static_cast<std::size_t>(c) * f);
  is.read(reinterpret_cast<char*>(st.mean.data()), static_cast<std::streamsize>(st.mean.size() * sizeof(double)));
  is.read(reinterpret_cast<char*>(st.std.data()), static_cast<std::streamsize>(st.std.size() * sizeof(double)));
  if (!is) throw DataError(path.string() + ": truncated norm stats");
  return st;
}

}  // namespace sedlab
