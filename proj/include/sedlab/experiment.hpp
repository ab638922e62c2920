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
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "sedlab/augment.hpp"
#include "sedlab/crnn.hpp"
#include "sedlab/dataset.hpp"
#include "sedlab/features.hpp"
#include "sedlab/losses.hpp"
#include "sedlab/metrics.hpp"
#include "sedlab/optim.hpp"

namespace sedlab {

enum class ChannelMode { Mono, All };
enum class TransferMode { Scratch, MonoPretrained };

std::string channel_mode_name(ChannelMode m);
ChannelMode parse_channel_mode(const std::string& s);
std::string transfer_name(TransferMode t);
TransferMode parse_transfer(const std::string& s);

/// Everything that determines a training run. Unset augmentation flags take
/// the per-format defaults (FOA: all four; MIC: all but mixup).
struct ExperimentConfig {
  std::string dataset;
  ArrayKind format = ArrayKind::FOA;
  ChannelMode channels = ChannelMode::All;
  std::optional<bool> mu, co, fs, cs;
  LossKind loss = LossKind::BceDice;
  TransferMode transfer = TransferMode::Scratch;
  double chunk_s = 4.0;
  double chunk_hop_s = 0.5;
  int epochs = 30;
  int batch = 32;
  std::uint64_t seed = 1;
  /// Backbone and recurrent layer, e.g. "b16x2x2.32x2x2.64x1x2-g32".
  std::string model = "b16x2x2.32x2x2.64x1x2-g32";
  double dice_epsilon = 1.0;
  /// Epochs of mono pretraining for transfer runs; 0 uses `epochs`.
  int pretrain_epochs = 0;
  /// Use only the first N training chunks (0 = all).
  int max_train_chunks = 0;
  /// Precomputed normalization statistics; empty fits them on the train split.
  std::string norm;
  /// OpenMP threads for this run (0 = runtime default). Not part of the hash.
  int threads = 0;

  /// Applies per-format augmentation defaults and checks every field.
  ExperimentConfig resolved() const;
  void validate() const;
  AugmentConfig augment() const;
  CrnnConfig model_config(std::size_t input_channels, std::size_t n_classes) const;
  std::size_t input_channels() const { return channels == ChannelMode::Mono ? 1 : 4; }

  /// Resolved fields in a fixed order, as text.
  std::vector<std::pair<std::string, std::string>> to_kv() const;
  /// Sets one field from text; throws std::invalid_argument on unknown keys
  /// or malformed values.
  void set(const std::string& key, const std::string& value);
  static std::vector<std::string> keys();
  /// Hash of the resolved configuration (excluding `threads`).
  std::uint64_t hash() const;
  std::string hash_hex() const;
};

/// Flat `key=value` text; blank lines and `#` comments are skipped.
std::vector<std::pair<std::string, std::string>> parse_kv_text(const std::string& text);
std::vector<std::pair<std::string, std::string>> read_kv_file(const std::filesystem::path& path);
/// Writes `key=value` lines plus `hash=<hex>` to `dir/config.lock`.
void write_config_lock(const std::filesystem::path& dir, const ExperimentConfig& cfg);

std::string format_double(double v);

// ---------------------------------------------------------------- chunking

/// Feature frames per 100 ms label frame at the default STFT hop.
inline constexpr std::size_t kFeatureFramesPerLabel = 8;

/// Converts seconds to a whole number of 100 ms label frames; throws when
/// the value is not a multiple of 0.1 s.
std::size_t seconds_to_label_frames(double seconds);

/// Window starts (label frames) of a sliding window; an incomplete final
/// window is dropped. Empty when the recording is shorter than the chunk.
std::vector<std::size_t> chunk_starts(std::size_t total_frames, std::size_t chunk_frames,
                                      std::size_t hop_frames);
/// floor((total - chunk) / hop) + 1, or 0 when total < chunk.
std::size_t chunk_count(std::size_t total_frames, std::size_t chunk_frames, std::size_t hop_frames);

/// Cuts a recording into training chunks. Frame j of the chunk starting at
/// t0 seconds is label frame 10 t0 + j and feature frames 8 (10 t0 + j) ...
/// Throws DataError when the recording is shorter than one chunk.
std::vector<Sample> chunk(const FeatureTensor& features, const LabelGrid& labels, double chunk_s,
                          double hop_s = 0.5);

// ---------------------------------------------------------------- data

struct SceneData {
  std::string id;
  FeatureTensor features;  // log-mel, not normalized
  LabelGrid labels;
};

struct SplitData {
  std::string split;
  std::vector<SceneData> scenes;
};

/// Log-mel features of one split in the given format and channel mode.
/// Mono takes channel 0 of the rendered array.
SplitData load_split(const Dataset& ds, const std::string& split, ArrayKind format, ChannelMode channels);

/// Keeps extracted splits in memory across runs of one process.
class FeatureCache {
 public:
  const SplitData& get(const std::filesystem::path& dataset, const std::string& split, ArrayKind format,
                       ChannelMode channels);

 private:
  std::mutex mu_;
  std::map<std::string, std::unique_ptr<SplitData>> entries_;
};

NormStats fit_split_norm(const SplitData& data);

struct ChunkRef {
  std::size_t scene = 0;
  std::size_t start = 0;  // label frame
};

std::vector<ChunkRef> make_chunk_refs(const SplitData& data, std::size_t chunk_frames, std::size_t hop_frames);

/// Normalized features and labels of one window.
Sample extract_chunk(const SplitData& data, const ChunkRef& ref, std::size_t chunk_frames, const NormStats& norm);

// ---------------------------------------------------------------- training

/// Per-label-frame probabilities of a whole recording, from non-overlapping
/// chunks; the last chunk is aligned to the end of the recording and only
/// contributes frames not already covered. Recordings shorter than one
/// chunk are processed whole.
LabelGrid predict_scene(Crnn<float>& model, const SceneData& scene, const NormStats& norm,
                        std::size_t chunk_frames, std::size_t batch = 32);

/// Segment metrics at threshold 0.3, micro-averaged over scenes.
MetricsReport evaluate(Crnn<float>& model, const SplitData& data, const NormStats& norm, std::size_t chunk_frames,
                       std::size_t batch = 32);

/// Metrics over individual chunks (each chunk scored as its own clip).
MetricsReport evaluate_chunks(Crnn<float>& model, const SplitData& data, const std::vector<ChunkRef>& chunks,
                              std::size_t chunk_frames, const NormStats& norm, std::size_t batch = 32);

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double lr = 0.0;
  int skipped_batches = 0;
  MetricsReport val;
};

struct RunRecord {
  std::uint64_t config_hash = 0;
  std::vector<EpochRecord> epochs;
  int best_epoch = -1;
  MetricsReport test;
  /// Chunk-level metrics of the final model on its own training chunks.
  MetricsReport train_fit;
  double wall_s = 0.0;
};

struct RunOptions {
  /// Run directory for config.lock, checkpoints and CSVs; empty writes nothing.
  std::filesystem::path out_dir;
  /// Shared cache for pretrained backbones; empty disables it.
  std::filesystem::path pretrain_cache;
  FeatureCache* features = nullptr;
  std::ostream* log = nullptr;
  /// Skip validation/test evaluation (capacity checks).
  bool skip_eval = false;
  /// Compute RunRecord::train_fit after training.
  bool eval_train_fit = false;
};

/// Per-step training settings shared by fine-tuning and pretraining.
struct TrainSettings {
  AugmentConfig augment;
  LossKind loss = LossKind::BceDice;
  LossConfig loss_cfg;
  std::size_t batch = 32;
};

struct EpochStats {
  double loss = 0.0;  // mean batch loss
  double last_lr = 0.0;
  int skipped = 0;    // batches dropped for non-finite gradients
};

/// One epoch of shuffled, augmented mini-batch training with the learning
/// rate taken from lr_schedule at each step. Non-finite losses or
/// predictions throw NumericError.
EpochStats train_epoch(Crnn<float>& model, Adam<float>& adam, const SplitData& data,
                       const std::vector<ChunkRef>& chunks, std::size_t chunk_frames, const NormStats& norm,
                       const TrainSettings& settings, int epoch, int total_epochs, std::uint64_t seed);

/// Trains a single-channel backbone on the pretrain split (W channel of the
/// FOA rendering) without augmentation.
Crnn<float> pretrain_mono(const ExperimentConfig& cfg, const RunOptions& opts);

/// Full run: fit normalization on train, train for cfg.epochs with the
/// learning-rate schedule, keep the checkpoint with the lowest validation
/// SEDE (earlier epoch on ties), and evaluate the test split once from it.
RunRecord train_run(const ExperimentConfig& cfg, const RunOptions& opts = {});

// ---------------------------------------------------------------- results

/// `format,mu,co,fs,cs,loss,transfer,chunk_s,channels,seed,er,f1,sede`
std::string results_header();
std::string results_row(const ExperimentConfig& cfg, const MetricsReport& m);

struct ResultRow {
  std::string format, mu, co, fs, cs, loss, transfer, chunk_s, channels, seed;
  double er = 0.0, f1 = 0.0, sede = 0.0;
  bool ok = true;  // false when the cell failed (metrics are "nan")

  std::string key() const;  // every config column except format
  std::string to_csv() const;
};

ResultRow parse_result_row(const std::string& line);
std::vector<ResultRow> read_results(const std::filesystem::path& path);
void write_results(const std::filesystem::path& path, const std::vector<ResultRow>& rows);

/// Writes `text` to a temporary sibling and renames it into place.
void write_file_atomic(const std::filesystem::path& path, const std::string& text);

}  // namespace sedlab
