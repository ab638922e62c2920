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

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <omp.h>
#include <sstream>

#include "sedlab/checkpoint.hpp"
#include "sedlab/common.hpp"
#include "sedlab/experiment.hpp"

namespace sedlab {

namespace fs = std::filesystem;

// ---------------------------------------------------------------- data

SplitData load_split(const Dataset& ds, const std::string& split, ArrayKind format, ChannelMode channels) {
  const auto entries = ds.split(split);
  SplitData out;
  out.split = split;
  out.scenes.resize(entries.size());
  const long n = static_cast<long>(entries.size());
  std::string error;
#pragma omp parallel for schedule(dynamic)
  for (long i = 0; i < n; ++i) {
    try {
      const auto& e = entries[static_cast<std::size_t>(i)];
      MultichannelAudio audio = ds.load_audio(e, format);
      if (audio.sample_rate != kDefaultSampleRate) {
        throw DataError(e.id + ": expected " + std::to_string(kDefaultSampleRate) + " Hz audio");
      }
      if (channels == ChannelMode::Mono) audio = mono_select(audio, format);
      SceneData& sd = out.scenes[static_cast<std::size_t>(i)];
      sd.id = e.id;
      sd.features = logmel(audio, StftConfig{}, MelConfig{});
      sd.labels = ds.load_labels(e);
    } catch (const std::exception& ex) {
#pragma omp critical(sedlab_load_split)
      if (error.empty()) error = ex.what();
    }
  }
  if (!error.empty()) throw DataError(error);
  return out;
}

const SplitData& FeatureCache::get(const fs::path& dataset, const std::string& split, ArrayKind format,
                                   ChannelMode channels) {
  const std::string key =
      fs::weakly_canonical(dataset).string() + "|" + split + "|" + format_name(format) + "|" + channel_mode_name(channels);
  std::lock_guard<std::mutex> lock(mu_);
  auto it = entries_.find(key);
  if (it == entries_.end()) {
    auto data = std::make_unique<SplitData>(load_split(Dataset(dataset), split, format, channels));
    it = entries_.emplace(key, std::move(data)).first;
  }
  return *it->second;
}

NormStats fit_split_norm(const SplitData& data) {
  if (data.scenes.empty()) throw DataError("cannot fit normalization on empty split '" + data.split + "'");
  std::vector<const FeatureTensor*> ptrs;
  for (const auto& s : data.scenes) ptrs.push_back(&s.features);
  return fit_norm_stats(ptrs);
}

std::vector<ChunkRef> make_chunk_refs(const SplitData& data, std::size_t chunk_frames, std::size_t hop_frames) {
  std::vector<ChunkRef> out;
  for (std::size_t i = 0; i < data.scenes.size(); ++i) {
    for (std::size_t start : chunk_starts(data.scenes[i].labels.frames, chunk_frames, hop_frames)) {
      out.push_back({i, start});
    }
  }
  return out;
}

namespace {

void normalized_window(const FeatureTensor& src, std::size_t first_frame, std::size_t frames, const NormStats& norm,
                       float* dst) {
  if (norm.channels != src.channels || norm.bins != src.bins) {
    throw DataError("normalization statistics (" + std::to_string(norm.channels) + " x " +
                    std::to_string(norm.bins) + ") do not match features (" + std::to_string(src.channels) +
                    " x " + std::to_string(src.bins) + ")");
  }
  if (first_frame + frames > src.frames) throw DataError("window exceeds the feature frames");
  const std::size_t F = src.bins;
  std::vector<float> mean(F), inv(F);
  for (std::size_t c = 0; c < src.channels; ++c) {
    for (std::size_t f = 0; f < F; ++f) {
      mean[f] = static_cast<float>(norm.mean[c * F + f]);
      inv[f] = static_cast<float>(1.0 / norm.std[c * F + f]);
    }
    for (std::size_t t = 0; t < frames; ++t) {
      const float* s = &src.values[src.index(c, first_frame + t, 0)];
      float* d = dst + (c * frames + t) * F;
      for (std::size_t f = 0; f < F; ++f) d[f] = (s[f] - mean[f]) * inv[f];
    }
  }
}

Tensor<float> batch_tensor(const std::vector<Sample>& samples) {
  const auto& f0 = samples.front().features;
  Tensor<float> x({samples.size(), f0.channels, f0.frames, f0.bins});
  const std::size_t per = f0.values.size();
  for (std::size_t i = 0; i < samples.size(); ++i) {
    std::copy(samples[i].features.values.begin(), samples[i].features.values.end(), x.data.begin() + i * per);
  }
  return x;
}

Tensor<float> label_tensor(const std::vector<Sample>& samples) {
  const auto& l0 = samples.front().labels;
  Tensor<float> y({samples.size(), l0.frames, l0.classes});
  const std::size_t per = l0.values.size();
  for (std::size_t i = 0; i < samples.size(); ++i) {
    std::copy(samples[i].labels.values.begin(), samples[i].labels.values.end(), y.data.begin() + i * per);
  }
  return y;
}

void require_finite(const Tensor<float>& t, const std::string& what) {
  if (!t.all_finite()) throw NumericError("non-finite values in " + what);
}

}  // namespace

Sample extract_chunk(const SplitData& data, const ChunkRef& ref, std::size_t chunk_frames, const NormStats& norm) {
  const SceneData& sc = data.scenes.at(ref.scene);
  Sample s;
  s.features = FeatureTensor(sc.features.channels, chunk_frames * kFeatureFramesPerLabel, sc.features.bins);
  s.features.frame_rate = sc.features.frame_rate;
  s.features.normalized = true;
  normalized_window(sc.features, ref.start * kFeatureFramesPerLabel, chunk_frames * kFeatureFramesPerLabel, norm,
                    s.features.values.data());
  s.labels = sc.labels.slice(ref.start, chunk_frames);
  return s;
}

// ---------------------------------------------------------------- inference

namespace {

/// Runs the model over windows [start, start + frames) of one scene.
std::vector<LabelGrid> predict_windows(Crnn<float>& model, const SceneData& sc, const std::vector<std::size_t>& starts,
                                       std::size_t frames, const NormStats& norm, std::size_t batch) {
  std::vector<LabelGrid> out;
  const std::size_t C = sc.features.channels, F = sc.features.bins, Tf = frames * kFeatureFramesPerLabel;
  for (std::size_t b0 = 0; b0 < starts.size(); b0 += batch) {
    const std::size_t nb = std::min(batch, starts.size() - b0);
    Tensor<float> x({nb, C, Tf, F});
    for (std::size_t i = 0; i < nb; ++i) {
      normalized_window(sc.features, starts[b0 + i] * kFeatureFramesPerLabel, Tf, norm, x.ptr() + i * C * Tf * F);
    }
    Tensor<float> p = model.forward(x, false);
    require_finite(p, "predictions");
    const std::size_t L = p.dim(2);
    for (std::size_t i = 0; i < nb; ++i) {
      LabelGrid g(frames, L);
      std::copy(p.data.begin() + static_cast<std::ptrdiff_t>(i * frames * L),
                p.data.begin() + static_cast<std::ptrdiff_t>((i + 1) * frames * L), g.values.begin());
      out.push_back(std::move(g));
    }
  }
  return out;
}

}  // namespace

LabelGrid predict_scene(Crnn<float>& model, const SceneData& scene, const NormStats& norm, std::size_t chunk_frames,
                        std::size_t batch) {
  const std::size_t total = scene.labels.frames;
  if (total == 0) throw DataError("scene " + scene.id + " has no frames");
  if (scene.features.frames < total * kFeatureFramesPerLabel) {
    throw DataError("scene " + scene.id + ": feature frames do not cover the label grid");
  }
  const std::size_t cf = std::min(chunk_frames, total);
  std::vector<std::size_t> starts;
  for (std::size_t s = 0; s + cf <= total; s += cf) starts.push_back(s);
  if (starts.back() + cf < total) starts.push_back(total - cf);
  const auto windows = predict_windows(model, scene, starts, cf, norm, std::max<std::size_t>(batch, 1));
  LabelGrid out(total, windows.front().classes);
  std::size_t covered = 0;
  for (std::size_t w = 0; w < windows.size(); ++w) {
    for (std::size_t t = 0; t < cf; ++t) {
      const std::size_t gt = starts[w] + t;
      if (gt < covered) continue;
      for (std::size_t l = 0; l < out.classes; ++l) out.at(gt, l) = windows[w].at(t, l);
    }
    covered = starts[w] + cf;
  }
  return out;
}

MetricsReport evaluate(Crnn<float>& model, const SplitData& data, const NormStats& norm, std::size_t chunk_frames,
                       std::size_t batch) {
  if (data.scenes.empty()) throw DataError("cannot evaluate empty split '" + data.split + "'");
  MetricsAccumulator acc;
  for (const auto& sc : data.scenes) {
    acc.add(binarize(predict_scene(model, sc, norm, chunk_frames, batch)), sc.labels);
  }
  return acc.report();
}

MetricsReport evaluate_chunks(Crnn<float>& model, const SplitData& data, const std::vector<ChunkRef>& chunks,
                              std::size_t chunk_frames, const NormStats& norm, std::size_t batch) {
  MetricsAccumulator acc;
  for (const auto& ref : chunks) {
    const SceneData& sc = data.scenes.at(ref.scene);
    auto pred = predict_windows(model, sc, {ref.start}, chunk_frames, norm, batch);
    acc.add(binarize(pred.front()), sc.labels.slice(ref.start, chunk_frames));
  }
  return acc.report();
}

// ---------------------------------------------------------------- training

EpochStats train_epoch(Crnn<float>& model, Adam<float>& adam, const SplitData& data,
                       const std::vector<ChunkRef>& chunks, std::size_t chunk_frames, const NormStats& norm,
                       const TrainSettings& settings, int epoch, int total_epochs, std::uint64_t seed) {
  if (chunks.empty()) throw DataError("no training chunks");
  const std::size_t batch = std::max<std::size_t>(settings.batch, 1);
  std::vector<std::size_t> order(chunks.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng shuffle_rng(derive_seed(seed, 1, static_cast<std::uint64_t>(epoch)));
  std::shuffle(order.begin(), order.end(), shuffle_rng);

  const std::size_t n_batches = (chunks.size() + batch - 1) / batch;
  const double total_steps = static_cast<double>(n_batches) * total_epochs;
  EpochStats stats;
  double loss_sum = 0.0;
  for (std::size_t b = 0; b < n_batches; ++b) {
    const std::size_t begin = b * batch, end = std::min(chunks.size(), begin + batch);
    std::vector<Sample> samples;
    samples.reserve(end - begin);
    for (std::size_t i = begin; i < end; ++i) samples.push_back(extract_chunk(data, chunks[order[i]], chunk_frames, norm));
    if (settings.augment.any()) {
      samples = apply_pipeline(samples, settings.augment, derive_seed(seed, 2 + static_cast<std::uint64_t>(epoch), b));
    }
    Tensor<float> x = batch_tensor(samples);
    Tensor<float> y = label_tensor(samples);

    model.zero_grad();
    Tensor<float> p = model.forward(x, true);
    require_finite(p, "predictions at epoch " + std::to_string(epoch + 1) + ", batch " + std::to_string(b + 1));
    auto loss = compute_loss<float>(settings.loss, p.data, y.data, samples.size(), settings.loss_cfg);
    if (!std::isfinite(loss.value)) {
      throw NumericError("non-finite loss at epoch " + std::to_string(epoch + 1) + ", batch " + std::to_string(b + 1));
    }
    Tensor<float> dp(p.shape);
    dp.data = std::move(loss.grad);
    model.backward(dp);

    const double progress = (static_cast<double>(epoch) * n_batches + static_cast<double>(b)) / total_steps;
    stats.last_lr = lr_schedule(progress);
    if (!adam.step(stats.last_lr)) ++stats.skipped;
    loss_sum += loss.value;
  }
  stats.loss = loss_sum / static_cast<double>(n_batches);
  return stats;
}

namespace {

const SplitData& get_split(const RunOptions& opts, std::vector<std::unique_ptr<SplitData>>& owned,
                           const std::string& dataset, const std::string& split, ArrayKind format,
                           ChannelMode channels) {
  if (opts.features) return opts.features->get(dataset, split, format, channels);
  owned.push_back(std::make_unique<SplitData>(load_split(Dataset(dataset), split, format, channels)));
  return *owned.back();
}

void log_line(const RunOptions& opts, const std::string& line) {
  if (opts.log) *opts.log << line << std::endl;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace

Crnn<float> pretrain_mono(const ExperimentConfig& cfg_in, const RunOptions& opts) {
  const ExperimentConfig cfg = cfg_in.resolved();
  const int epochs = cfg.pretrain_epochs > 0 ? cfg.pretrain_epochs : cfg.epochs;
  Crnn<float> model(cfg.model_config(1, kDefaultClasses));

  std::ostringstream key;
  key << "pretrain|" << fs::weakly_canonical(cfg.dataset).string() << "|" << cfg.model << "|" << epochs << "|"
      << format_double(cfg.chunk_s) << "|" << format_double(cfg.chunk_hop_s) << "|" << cfg.batch << "|" << cfg.seed
      << "|" << loss_name(cfg.loss) << "|" << format_double(cfg.dice_epsilon);
  const std::uint64_t hash = fnv1a(key.str());
  fs::path cached;
  if (!opts.pretrain_cache.empty()) {
    cached = opts.pretrain_cache / ("pretrain_" + hex64(hash) + ".ckpt");
    if (fs::exists(cached)) {
      restore_checkpoint(load_checkpoint(cached), model);
      log_line(opts, "pretrain: reusing " + cached.string());
      return model;
    }
  }

  std::vector<std::unique_ptr<SplitData>> owned;
  const SplitData& data = get_split(opts, owned, cfg.dataset, "pretrain", ArrayKind::FOA, ChannelMode::Mono);
  if (data.scenes.empty()) throw DataError("transfer needs a non-empty pretrain split");
  const NormStats norm = fit_split_norm(data);
  const std::size_t cf = seconds_to_label_frames(cfg.chunk_s), hf = seconds_to_label_frames(cfg.chunk_hop_s);
  const auto chunks = make_chunk_refs(data, cf, hf);
  if (chunks.empty()) throw DataError("pretrain scenes are shorter than one chunk");

  const std::uint64_t seed = derive_seed(cfg.seed, 3);
  model.init(derive_seed(seed, 0));
  Adam<float> adam(model.params());
  TrainSettings settings;
  settings.loss = cfg.loss;
  settings.loss_cfg.dice_epsilon = cfg.dice_epsilon;
  settings.batch = static_cast<std::size_t>(cfg.batch);
  for (int e = 0; e < epochs; ++e) {
    auto st = train_epoch(model, adam, data, chunks, cf, norm, settings, e, epochs, seed);
    char buf[128];
    std::snprintf(buf, sizeof(buf), "pretrain epoch %d/%d loss %.5f", e + 1, epochs, st.loss);
    log_line(opts, buf);
  }
  if (!cached.empty()) {
    fs::create_directories(opts.pretrain_cache);
    save_checkpoint(cached, make_checkpoint(model, nullptr, hash, ""));
  }
  return model;
}

RunRecord train_run(const ExperimentConfig& cfg_in, const RunOptions& opts) {
  const auto t0 = std::chrono::steady_clock::now();
  const ExperimentConfig cfg = cfg_in.resolved();
  if (cfg.dataset.empty()) throw std::invalid_argument("dataset is not set");
  if (cfg.threads > 0) omp_set_num_threads(cfg.threads);

  RunRecord rec;
  rec.config_hash = cfg.hash();
  std::vector<std::unique_ptr<SplitData>> owned;
  const SplitData& train = get_split(opts, owned, cfg.dataset, "train", cfg.format, cfg.channels);
  if (train.scenes.empty()) throw DataError("dataset has no training scenes");

  NormStats norm;
  if (!cfg.norm.empty()) {
    norm = load_norm_stats(cfg.norm);
  } else {
    norm = fit_split_norm(train);
  }
  if (norm.channels != cfg.input_channels()) {
    throw DataError("normalization statistics have " + std::to_string(norm.channels) + " channels, run uses " +
                    std::to_string(cfg.input_channels()));
  }

  const std::size_t cf = seconds_to_label_frames(cfg.chunk_s), hf = seconds_to_label_frames(cfg.chunk_hop_s);
  auto chunks = make_chunk_refs(train, cf, hf);
  if (cfg.max_train_chunks > 0 && chunks.size() > static_cast<std::size_t>(cfg.max_train_chunks)) {
    chunks.resize(static_cast<std::size_t>(cfg.max_train_chunks));
  }
  if (chunks.empty()) throw DataError("training scenes are shorter than one " + format_double(cfg.chunk_s) + " s chunk");

  const SplitData* val = nullptr;
  const SplitData* test = nullptr;
  if (!opts.skip_eval) {
    val = &get_split(opts, owned, cfg.dataset, "val", cfg.format, cfg.channels);
    test = &get_split(opts, owned, cfg.dataset, "test", cfg.format, cfg.channels);
    if (val->scenes.empty()) throw DataError("dataset has no validation scenes");
    if (test->scenes.empty()) throw DataError("dataset has no test scenes");
  }

  Crnn<float> model(cfg.model_config(cfg.input_channels(), static_cast<std::size_t>(train.scenes[0].labels.classes)));
  const std::uint64_t seed = derive_seed(cfg.seed, 4);
  model.init(derive_seed(seed, 0));
  if (cfg.transfer == TransferMode::MonoPretrained) {
    Crnn<float> pre = pretrain_mono(cfg, opts);
    transfer_backbone(pre, model);
  }
  Adam<float> adam(model.params());

  const bool write = !opts.out_dir.empty();
  if (write) {
    fs::create_directories(opts.out_dir);
    write_config_lock(opts.out_dir, cfg);
    save_norm_stats(opts.out_dir / "norm.bin", norm);
  }

  TrainSettings settings;
  settings.augment = cfg.augment();
  settings.loss = cfg.loss;
  settings.loss_cfg.dice_epsilon = cfg.dice_epsilon;
  settings.batch = static_cast<std::size_t>(cfg.batch);

  std::optional<Checkpoint> best;
  double best_sede = 0.0;
  for (int e = 0; e < cfg.epochs; ++e) {
    EpochStats st = train_epoch(model, adam, train, chunks, cf, norm, settings, e, cfg.epochs, seed);
    EpochRecord er;
    er.epoch = e + 1;
    er.train_loss = st.loss;
    er.lr = st.last_lr;
    er.skipped_batches = st.skipped;
    char buf[256];
    if (!opts.skip_eval) {
      er.val = evaluate(model, *val, norm, cf, settings.batch);
      if (!best || er.val.sede < best_sede) {
        best_sede = er.val.sede;
        rec.best_epoch = er.epoch;
        best = make_checkpoint(model, &adam, rec.config_hash, "norm.bin");
        best->meta["epoch"] = std::to_string(er.epoch);
        if (write) save_checkpoint(opts.out_dir / "best.ckpt", *best);
      }
      std::snprintf(buf, sizeof(buf), "epoch %d/%d loss %.5f lr %.3e val er %.4f f1 %.4f sede %.4f%s", er.epoch,
                    cfg.epochs, er.train_loss, er.lr, er.val.er, er.val.f1, er.val.sede,
                    rec.best_epoch == er.epoch ? " *" : "");
    } else {
      std::snprintf(buf, sizeof(buf), "epoch %d/%d loss %.5f lr %.3e", er.epoch, cfg.epochs, er.train_loss, er.lr);
    }
    log_line(opts, buf);
    rec.epochs.push_back(er);
  }

  if (opts.eval_train_fit) rec.train_fit = evaluate_chunks(model, train, chunks, cf, norm, settings.batch);
  if (!opts.skip_eval) {
    restore_checkpoint(*best, model);
    rec.test = evaluate(model, *test, norm, cf, settings.batch);
  } else {
    rec.best_epoch = cfg.epochs;
  }
  rec.wall_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  if (write) {
    std::string epochs_csv = "epoch,train_loss,lr,skipped_batches," + MetricsReport::csv_header() + "\n";
    for (const auto& er : rec.epochs) {
      char buf[96];
      std::snprintf(buf, sizeof(buf), "%d,%.6f,%.6e,%d,", er.epoch, er.train_loss, er.lr, er.skipped_batches);
      epochs_csv += buf + er.val.csv_row() + "\n";
    }
    write_file_atomic(opts.out_dir / "epochs.csv", epochs_csv);
    write_file_atomic(opts.out_dir / "results.csv", results_header() + "\n" + results_row(cfg, rec.test) + "\n");
    write_file_atomic(opts.out_dir / "test_metrics.txt", "best_epoch=" + std::to_string(rec.best_epoch) + "\n" +
                                                             MetricsReport::csv_header() + "\n" + rec.test.csv_row() +
                                                             "\n" + rec.test.text_block());
  }
  return rec;
}

}  // namespace sedlab
