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

#include "sedlab/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <mutex>
#include <sstream>

#include "sedlab/wav.hpp"

namespace sedlab {

namespace fs = std::filesystem;

namespace {

const char* const kSplits[] = {"train", "val", "test", "pretrain"};

double wrap_azimuth(double a) {
  while (a > kPi) a -= 2.0 * kPi;
  while (a <= -kPi) a += 2.0 * kPi;
  return a;
}

std::int64_t parse_ms(const std::string& field) {
  std::size_t used = 0;
  double v = std::stod(field, &used);
  if (used != field.size() || !std::isfinite(v)) throw DataError("bad time value '" + field + "'");
  return std::llround(v * 1000.0);
}

}  // namespace

std::string format_name(ArrayKind kind) { return kind == ArrayKind::FOA ? "foa" : "mic"; }

ArrayKind parse_format(const std::string& s) {
  if (s == "foa" || s == "FOA") return ArrayKind::FOA;
  if (s == "mic" || s == "MIC") return ArrayKind::MIC;
  throw std::invalid_argument("unknown format '" + s + "'");
}

SceneSpec sample_scene(const DatasetConfig& cfg, std::uint64_t seed) {
  if (cfg.event_mean_s <= cfg.event_median_s) {
    throw std::invalid_argument("log-normal event lengths need mean > median");
  }
  Rng rng(seed);
  SceneSpec spec;
  spec.seed = seed;
  spec.n_classes = cfg.n_classes;
  spec.duration_ms = std::llround(cfg.scene_duration_s * 1000.0);
  std::uniform_real_distribution<double> snr(cfg.snr_db_min, cfg.snr_db_max);
  spec.noise_snr_db = snr(rng);

  const double mu = std::log(cfg.event_median_s);
  const double sigma = std::sqrt(2.0 * std::log(cfg.event_mean_s / cfg.event_median_s));
  std::lognormal_distribution<double> length(mu, sigma);
  std::uniform_int_distribution<int> klass(0, cfg.n_classes - 1);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  const auto n_frames = static_cast<std::size_t>((spec.duration_ms + 99) / 100);
  std::vector<int> occupancy(n_frames, 0);
  std::vector<std::vector<bool>> class_busy(static_cast<std::size_t>(cfg.n_classes),
                                            std::vector<bool>(n_frames, false));
  const double target_ms = cfg.event_density * static_cast<double>(spec.duration_ms);
  double placed_ms = 0.0;

  for (int attempt = 0; attempt < 400 && placed_ms < target_ms; ++attempt) {
    const int c = klass(rng);
    double dur_s = std::clamp(length(rng), cfg.event_min_s, cfg.scene_duration_s);
    std::int64_t dur_ms = std::llround(dur_s * 1000.0);
    std::int64_t latest = spec.duration_ms - dur_ms;
    std::int64_t onset_ms = std::llround(unit(rng) * static_cast<double>(latest));
    // Consume the remaining per-attempt draws even on rejection so the
    // stream layout does not depend on acceptance.
    double az0 = wrap_azimuth((unit(rng) * 2.0 - 1.0) * kPi);
    double el0 = (unit(rng) * 2.0 - 1.0) * kPi / 3.0;
    bool moving = unit(rng) < cfg.moving_fraction;
    double speed = (unit(rng) * 2.0 - 1.0) * 40.0 * kPi / 180.0;
    double gain = cfg.gain_min + unit(rng) * (cfg.gain_max - cfg.gain_min);

    auto first = static_cast<std::size_t>(onset_ms / 100);
    auto last = std::min(n_frames, static_cast<std::size_t>((onset_ms + dur_ms + 99) / 100));
    bool ok = true;
    for (std::size_t t = first; t < last && ok; ++t) {
      if (occupancy[t] + 1 > cfg.max_polyphony || class_busy[static_cast<std::size_t>(c)][t]) ok = false;
    }
    if (!ok) continue;
    for (std::size_t t = first; t < last; ++t) {
      ++occupancy[t];
      class_busy[static_cast<std::size_t>(c)][t] = true;
    }

    EventSpec e;
    e.class_id = c;
    e.onset_ms = onset_ms;
    e.duration_ms = dur_ms;
    e.atom = class_atom(c % kDefaultClasses);
    e.gain = gain;
    auto steps = static_cast<std::size_t>((dur_ms + 99) / 100);
    e.trajectory.reserve(steps);
    for (std::size_t k = 0; k < steps; ++k) {
      double az = moving ? wrap_azimuth(az0 + speed * 0.1 * static_cast<double>(k)) : az0;
      e.trajectory.push_back({az, el0});
    }
    spec.events.push_back(std::move(e));
    placed_ms += static_cast<double>(dur_ms);
  }
  std::sort(spec.events.begin(), spec.events.end(),
            [](const EventSpec& a, const EventSpec& b) {
              return a.onset_ms != b.onset_ms ? a.onset_ms < b.onset_ms : a.class_id < b.class_id;
            });
  return spec;
}

std::vector<LabelEvent> events_of(const SceneSpec& spec) {
  std::vector<LabelEvent> out;
  for (const auto& e : spec.events) out.push_back({e.onset_ms, e.offset_ms(), e.class_id});
  return out;
}

LabelGrid label_grid_from_events(const std::vector<LabelEvent>& events, std::int64_t duration_ms,
                                 int n_classes) {
  SceneSpec spec;
  spec.duration_ms = duration_ms;
  spec.n_classes = n_classes;
  for (const auto& ev : events) {
    if (ev.class_id < 0 || ev.class_id >= n_classes) throw DataError("label class out of range");
    if (ev.offset_ms <= ev.onset_ms) throw DataError("label offset must follow onset");
    EventSpec e;
    e.class_id = ev.class_id;
    e.onset_ms = ev.onset_ms;
    e.duration_ms = ev.offset_ms - ev.onset_ms;
    spec.events.push_back(e);
  }
  return scene_labels(spec);
}

void write_label_csv(const fs::path& path, const std::vector<LabelEvent>& events) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot open " + path.string() + " for writing");
  os << "onset_s,offset_s,class_id\n";
  char buf[96];
  for (const auto& e : events) {
    std::snprintf(buf, sizeof buf, "%.3f,%.3f,%d\n", e.onset_ms / 1000.0, e.offset_ms / 1000.0,
                  e.class_id);
    os << buf;
  }
  if (!os) throw DataError("failed writing " + path.string());
}

std::vector<LabelEvent> read_label_csv(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open " + path.string());
  std::string line;
  if (!std::getline(is, line) || line != "onset_s,offset_s,class_id") {
    throw DataError(path.string() + ": missing label header");
  }
  std::vector<LabelEvent> out;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string on, off, cls;
    if (!std::getline(ss, on, ',') || !std::getline(ss, off, ',') || !std::getline(ss, cls)) {
      throw DataError(path.string() + ": malformed row '" + line + "'");
    }
    try {
      out.push_back({parse_ms(on), parse_ms(off), std::stoi(cls)});
    } catch (const std::logic_error&) {
      throw DataError(path.string() + ": malformed row '" + line + "'");
    }
  }
  return out;
}

void write_manifest(const fs::path& path, const std::vector<SceneEntry>& entries) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot open " + path.string() + " for writing");
  for (const auto& e : entries) os << e.split << ' ' << e.id << ' ' << e.duration_ms << '\n';
  if (!os) throw DataError("failed writing " + path.string());
}

std::vector<SceneEntry> read_manifest(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot open manifest " + path.string());
  std::vector<SceneEntry> out;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    SceneEntry e;
    if (!(ss >> e.split >> e.id >> e.duration_ms)) {
      throw DataError("malformed manifest line '" + line + "'");
    }
    out.push_back(e);
  }
  return out;
}

std::vector<SceneEntry> generate_dataset(const DatasetConfig& cfg, const fs::path& out_dir) {
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw DataError("cannot create " + out_dir.string() + ": " + ec.message());

  struct Job {
    SceneEntry entry;
    std::uint64_t seed;
  };
  std::vector<Job> jobs;
  const int counts[] = {cfg.n_train, cfg.n_val, cfg.n_test, cfg.n_pretrain};
  for (std::size_t s = 0; s < 4; ++s) {
    if (counts[s] < 0) throw std::invalid_argument("negative split size");
    fs::create_directories(out_dir / kSplits[s], ec);
    if (ec) throw DataError("cannot create split directory: " + ec.message());
    for (int i = 0; i < counts[s]; ++i) {
      char id[32];
      std::snprintf(id, sizeof id, "scene_%05d", i);
      jobs.push_back({{kSplits[s], id, std::llround(cfg.scene_duration_s * 1000.0)},
                      derive_seed(cfg.seed, s, static_cast<std::uint64_t>(i))});
    }
  }

  const ArrayFormat foa = ArrayFormat::foa();
  const ArrayFormat mic = ArrayFormat::tetrahedral_mic();
  std::exception_ptr failure;
  std::mutex failure_mu;

#pragma omp parallel for schedule(dynamic, 1)
  for (std::size_t j = 0; j < jobs.size(); ++j) {
    try {
      const Job& job = jobs[j];
      SceneSpec spec = sample_scene(cfg, job.seed);
      fs::path base = out_dir / job.entry.split / job.entry.id;
      write_label_csv(base.string() + ".csv", events_of(spec));
      write_wav(base.string() + "_foa.wav", render_scene(spec, foa).audio);
      // Pretraining scenes are only consumed as single-channel omni audio.
      if (job.entry.split != "pretrain") write_wav(base.string() + "_mic.wav", render_scene(spec, mic).audio);
    } catch (...) {
      std::lock_guard<std::mutex> lock(failure_mu);
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);

  std::vector<SceneEntry> entries;
  for (const auto& j : jobs) entries.push_back(j.entry);
  write_manifest(out_dir / "manifest.txt", entries);
  return entries;
}

Dataset::Dataset(fs::path root, int n_classes)
    : root_(std::move(root)), n_classes_(n_classes), entries_(read_manifest(root_ / "manifest.txt")) {}

std::vector<SceneEntry> Dataset::split(const std::string& name) const {
  std::vector<SceneEntry> out;
  for (const auto& e : entries_)
    if (e.split == name) out.push_back(e);
  return out;
}

fs::path Dataset::wav_path(const SceneEntry& e, ArrayKind kind) const {
  return root_ / e.split / (e.id + "_" + format_name(kind) + ".wav");
}

fs::path Dataset::label_path(const SceneEntry& e) const {
  return root_ / e.split / (e.id + ".csv");
}

MultichannelAudio Dataset::load_audio(const SceneEntry& e, ArrayKind kind) const {
  return read_wav(wav_path(e, kind));
}

LabelGrid Dataset::load_labels(const SceneEntry& e) const {
  return label_grid_from_events(read_label_csv(label_path(e)), e.duration_ms, n_classes_);
}

}  // namespace sedlab
