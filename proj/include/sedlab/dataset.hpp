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

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "sedlab/label_grid.hpp"
#include "sedlab/scene.hpp"

namespace sedlab {

/// Synthetic corpus layout and event statistics. Defaults are desk scale;
/// the split counts can be raised to 400/100/100 scenes of 60 s.
struct DatasetConfig {
  int n_train = 60;
  int n_val = 15;
  int n_test = 15;
  /// Extra single-channel scenes used only for transfer pretraining.
  int n_pretrain = 60;
  double scene_duration_s = 20.0;
  int n_classes = kDefaultClasses;
  int max_polyphony = 3;
  /// Target mean number of simultaneously active events.
  double event_density = 0.8;
  /// Log-normal event lengths, parameterized by median and mean.
  double event_median_s = 3.2;
  double event_mean_s = 8.3;
  double event_min_s = 0.5;
  double snr_db_min = 10.0;
  double snr_db_max = 30.0;
  double gain_min = 0.1;
  double gain_max = 0.3;
  double moving_fraction = 0.5;
  std::uint64_t seed = 1;
};

struct LabelEvent {
  std::int64_t onset_ms = 0;
  std::int64_t offset_ms = 0;
  int class_id = 0;
  friend bool operator==(const LabelEvent&, const LabelEvent&) = default;
};

struct SceneEntry {
  std::string split;
  std::string id;
  std::int64_t duration_ms = 0;
};

/// Draws a random scene description. Deterministic in `seed`.
SceneSpec sample_scene(const DatasetConfig& cfg, std::uint64_t seed);

/// Renders and writes every split. Scenes are rendered in parallel; each
/// scene seed is derived from (cfg.seed, split, index) so the output does
/// not depend on the thread count.
std::vector<SceneEntry> generate_dataset(const DatasetConfig& cfg,
                                         const std::filesystem::path& out_dir);

std::vector<LabelEvent> events_of(const SceneSpec& spec);
LabelGrid label_grid_from_events(const std::vector<LabelEvent>& events, std::int64_t duration_ms,
                                 int n_classes);

void write_label_csv(const std::filesystem::path& path, const std::vector<LabelEvent>& events);
std::vector<LabelEvent> read_label_csv(const std::filesystem::path& path);

void write_manifest(const std::filesystem::path& path, const std::vector<SceneEntry>& entries);
std::vector<SceneEntry> read_manifest(const std::filesystem::path& path);

/// Read-only view over a generated dataset directory.
class Dataset {
 public:
  explicit Dataset(std::filesystem::path root, int n_classes = kDefaultClasses);

  const std::filesystem::path& root() const { return root_; }
  int n_classes() const { return n_classes_; }
  std::vector<SceneEntry> split(const std::string& name) const;
  const std::vector<SceneEntry>& entries() const { return entries_; }

  std::filesystem::path wav_path(const SceneEntry& e, ArrayKind kind) const;
  std::filesystem::path label_path(const SceneEntry& e) const;

  MultichannelAudio load_audio(const SceneEntry& e, ArrayKind kind) const;
  LabelGrid load_labels(const SceneEntry& e) const;

 private:
  std::filesystem::path root_;
  int n_classes_;
  std::vector<SceneEntry> entries_;
};

std::string format_name(ArrayKind kind);
ArrayKind parse_format(const std::string& s);

}  // namespace sedlab
