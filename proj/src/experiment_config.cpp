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

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "sedlab/common.hpp"
#include "sedlab/experiment.hpp"

namespace sedlab {

namespace fs = std::filesystem;

std::string channel_mode_name(ChannelMode m) { return m == ChannelMode::Mono ? "mono" : "all"; }

ChannelMode parse_channel_mode(const std::string& s) {
  if (s == "mono") return ChannelMode::Mono;
  if (s == "all") return ChannelMode::All;
  throw std::invalid_argument("unknown channel mode '" + s + "' (expected mono or all)");
}

std::string transfer_name(TransferMode t) { return t == TransferMode::Scratch ? "scratch" : "mono_pretrained"; }

TransferMode parse_transfer(const std::string& s) {
  if (s == "scratch") return TransferMode::Scratch;
  if (s == "mono_pretrained" || s == "transfer") return TransferMode::MonoPretrained;
  throw std::invalid_argument("unknown transfer mode '" + s + "' (expected scratch or mono_pretrained)");
}

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

namespace {

template <typename I>
I parse_int(const std::string& key, const std::string& v) {
  I out{};
  auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec != std::errc() || res.ptr != v.data() + v.size()) {
    throw std::invalid_argument("bad integer for '" + key + "': '" + v + "'");
  }
  return out;
}

double parse_real(const std::string& key, const std::string& v) {
  double out = 0.0;
  auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec != std::errc() || res.ptr != v.data() + v.size() || !std::isfinite(out)) {
    throw std::invalid_argument("bad number for '" + key + "': '" + v + "'");
  }
  return out;
}

std::optional<bool> parse_flag(const std::string& key, const std::string& v) {
  if (v == "auto") return std::nullopt;
  if (v == "1" || v == "true" || v == "on") return true;
  if (v == "0" || v == "false" || v == "off") return false;
  throw std::invalid_argument("bad flag for '" + key + "': '" + v + "' (expected 0, 1 or auto)");
}

std::string flag_text(const std::optional<bool>& f) {
  if (!f) return "auto";
  return *f ? "1" : "0";
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

ExperimentConfig ExperimentConfig::resolved() const {
  ExperimentConfig c = *this;
  const bool foa = format == ArrayKind::FOA;
  if (!c.mu) c.mu = foa;
  if (!c.co) c.co = true;
  if (!c.fs) c.fs = true;
  if (!c.cs) c.cs = true;
  c.validate();
  return c;
}

void ExperimentConfig::validate() const {
  if (chunk_s <= 0 || chunk_hop_s <= 0) throw std::invalid_argument("chunk_s and chunk_hop_s must be positive");
  seconds_to_label_frames(chunk_s);
  seconds_to_label_frames(chunk_hop_s);
  if (epochs < 1) throw std::invalid_argument("epochs must be at least 1");
  if (batch < 1) throw std::invalid_argument("batch must be at least 1");
  if (pretrain_epochs < 0 || max_train_chunks < 0 || threads < 0) {
    throw std::invalid_argument("pretrain_epochs, max_train_chunks and threads must be non-negative");
  }
  if (!(dice_epsilon > 0)) throw std::invalid_argument("dice_epsilon must be positive");
  model_config(input_channels(), kDefaultClasses);
}

AugmentConfig ExperimentConfig::augment() const {
  const ExperimentConfig c = resolved();
  AugmentConfig a;
  a.mixup = *c.mu;
  a.cutout = *c.co;
  a.freq_shift = *c.fs;
  a.channel_swap = *c.cs;
  return a;
}

CrnnConfig ExperimentConfig::model_config(std::size_t input_ch, std::size_t n_classes) const {
  return CrnnConfig::parse("c" + std::to_string(input_ch) + "-m128-" + model + "-l" + std::to_string(n_classes) +
                           "-f" + std::to_string(kFeatureFramesPerLabel));
}

std::vector<std::string> ExperimentConfig::keys() {
  std::vector<std::string> out;
  for (const auto& [k, v] : ExperimentConfig{}.to_kv()) out.push_back(k);
  return out;
}

std::vector<std::pair<std::string, std::string>> ExperimentConfig::to_kv() const {
  return {
      {"dataset", dataset},
      {"format", format_name(format)},
      {"channels", channel_mode_name(channels)},
      {"mu", flag_text(mu)},
      {"co", flag_text(co)},
      {"fs", flag_text(fs)},
      {"cs", flag_text(cs)},
      {"loss", loss_name(loss)},
      {"transfer", transfer_name(transfer)},
      {"chunk_s", format_double(chunk_s)},
      {"chunk_hop_s", format_double(chunk_hop_s)},
      {"epochs", std::to_string(epochs)},
      {"batch", std::to_string(batch)},
      {"seed", std::to_string(seed)},
      {"model", model},
      {"dice_epsilon", format_double(dice_epsilon)},
      {"pretrain_epochs", std::to_string(pretrain_epochs)},
      {"max_train_chunks", std::to_string(max_train_chunks)},
      {"norm", norm},
      {"threads", std::to_string(threads)},
  };
}

void ExperimentConfig::set(const std::string& key, const std::string& value) {
  if (key == "dataset") {
    dataset = value;
  } else if (key == "format") {
    format = parse_format(value);
  } else if (key == "channels") {
    channels = parse_channel_mode(value);
  } else if (key == "mu") {
    mu = parse_flag(key, value);
  } else if (key == "co") {
    co = parse_flag(key, value);
  } else if (key == "fs") {
    fs = parse_flag(key, value);
  } else if (key == "cs") {
    cs = parse_flag(key, value);
  } else if (key == "loss") {
    loss = parse_loss(value);
    if (loss == LossKind::Dice) throw std::invalid_argument("loss must be bce or bce_dice");
  } else if (key == "transfer") {
    transfer = parse_transfer(value);
  } else if (key == "chunk_s") {
    chunk_s = parse_real(key, value);
  } else if (key == "chunk_hop_s") {
    chunk_hop_s = parse_real(key, value);
  } else if (key == "epochs") {
    epochs = parse_int<int>(key, value);
  } else if (key == "batch") {
    batch = parse_int<int>(key, value);
  } else if (key == "seed") {
    seed = parse_int<std::uint64_t>(key, value);
  } else if (key == "model") {
    model = value;
  } else if (key == "dice_epsilon") {
    dice_epsilon = parse_real(key, value);
  } else if (key == "pretrain_epochs") {
    pretrain_epochs = parse_int<int>(key, value);
  } else if (key == "max_train_chunks") {
    max_train_chunks = parse_int<int>(key, value);
  } else if (key == "norm") {
    norm = value;
  } else if (key == "threads") {
    threads = parse_int<int>(key, value);
  } else {
    throw std::invalid_argument("unknown config key '" + key + "'");
  }
}

std::uint64_t ExperimentConfig::hash() const {
  std::string text;
  for (const auto& [k, v] : resolved().to_kv()) {
    if (k == "threads") continue;
    text += k + "=" + v + "\n";
  }
  return fnv1a(text);
}

std::string ExperimentConfig::hash_hex() const {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(hash()));
  return buf;
}

std::vector<std::pair<std::string, std::string>> parse_kv_text(const std::string& text) {
  std::vector<std::pair<std::string, std::string>> out;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw std::invalid_argument("line " + std::to_string(lineno) + ": expected key=value");
    }
    out.emplace_back(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return out;
}

std::vector<std::pair<std::string, std::string>> read_kv_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return parse_kv_text(ss.str());
  } catch (const std::invalid_argument& e) {
    throw std::invalid_argument(path.string() + ": " + e.what());
  }
}

void write_file_atomic(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + tmp.string());
    out << text;
    if (!out) throw DataError("failed writing " + tmp.string());
  }
  fs::rename(tmp, path);
}

void write_config_lock(const fs::path& dir, const ExperimentConfig& cfg) {
  std::string text;
  const ExperimentConfig r = cfg.resolved();
  for (const auto& [k, v] : r.to_kv()) text += k + "=" + v + "\n";
  text += "hash=" + r.hash_hex() + "\n";
  write_file_atomic(dir / "config.lock", text);
}

// ---------------------------------------------------------------- chunking

std::size_t seconds_to_label_frames(double seconds) {
  const double frames = seconds * kLabelFramesPerSecond;
  const double rounded = std::round(frames);
  if (seconds < 0 || std::abs(frames - rounded) > 1e-6) {
    throw std::invalid_argument("duration " + format_double(seconds) + " s is not a multiple of 0.1 s");
  }
  return static_cast<std::size_t>(rounded);
}

std::size_t chunk_count(std::size_t total, std::size_t chunk_frames, std::size_t hop_frames) {
  if (chunk_frames == 0 || hop_frames == 0) throw std::invalid_argument("chunk and hop must be positive");
  if (total < chunk_frames) return 0;
  return (total - chunk_frames) / hop_frames + 1;
}

std::vector<std::size_t> chunk_starts(std::size_t total, std::size_t chunk_frames, std::size_t hop_frames) {
  std::vector<std::size_t> out;
  const std::size_t n = chunk_count(total, chunk_frames, hop_frames);
  for (std::size_t i = 0; i < n; ++i) out.push_back(i * hop_frames);
  return out;
}

std::vector<Sample> chunk(const FeatureTensor& features, const LabelGrid& labels, double chunk_s, double hop_s) {
  const std::size_t cf = seconds_to_label_frames(chunk_s);
  const std::size_t hf = seconds_to_label_frames(hop_s);
  if (labels.frames < cf) {
    throw DataError("recording of " + format_double(labels.frames * kLabelHopSeconds) + " s is shorter than the " +
                    format_double(chunk_s) + " s chunk");
  }
  if (features.frames < labels.frames * kFeatureFramesPerLabel) {
    throw DataError("feature frames do not cover the label grid");
  }
  std::vector<Sample> out;
  for (std::size_t start : chunk_starts(labels.frames, cf, hf)) {
    out.push_back({features.slice(start * kFeatureFramesPerLabel, cf * kFeatureFramesPerLabel),
                   labels.slice(start, cf)});
  }
  return out;
}

// ---------------------------------------------------------------- results

std::string results_header() { return "format,mu,co,fs,cs,loss,transfer,chunk_s,channels,seed,er,f1,sede"; }

namespace {

std::string metric_text(double v, bool ok) {
  if (!ok) return "nan";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

ResultRow row_of(const ExperimentConfig& cfg) {
  const ExperimentConfig r = cfg.resolved();
  ResultRow row;
  row.format = format_name(r.format);
  row.mu = flag_text(r.mu);
  row.co = flag_text(r.co);
  row.fs = flag_text(r.fs);
  row.cs = flag_text(r.cs);
  row.loss = loss_name(r.loss);
  row.transfer = transfer_name(r.transfer);
  row.chunk_s = format_double(r.chunk_s);
  row.channels = channel_mode_name(r.channels);
  row.seed = std::to_string(r.seed);
  return row;
}

}  // namespace

std::string results_row(const ExperimentConfig& cfg, const MetricsReport& m) {
  ResultRow row = row_of(cfg);
  row.er = m.er;
  row.f1 = m.f1;
  row.sede = m.sede;
  return row.to_csv();
}

std::string ResultRow::key() const {
  return mu + "," + co + "," + fs + "," + cs + "," + loss + "," + transfer + "," + chunk_s + "," + channels + "," +
         seed;
}

std::string ResultRow::to_csv() const {
  return format + "," + key() + "," + metric_text(er, ok) + "," + metric_text(f1, ok) + "," + metric_text(sede, ok);
}

ResultRow parse_result_row(const std::string& line) {
  std::vector<std::string> f;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) f.push_back(trim(cell));
  if (f.size() != 13) throw DataError("results row needs 13 columns: '" + line + "'");
  ResultRow r;
  r.format = f[0];
  r.mu = f[1];
  r.co = f[2];
  r.fs = f[3];
  r.cs = f[4];
  r.loss = f[5];
  r.transfer = f[6];
  r.chunk_s = f[7];
  r.channels = f[8];
  r.seed = f[9];
  if (f[10] == "nan" || f[11] == "nan" || f[12] == "nan") {
    r.ok = false;
    r.er = r.f1 = r.sede = std::nan("");
    return r;
  }
  try {
    r.er = parse_real("er", f[10]);
    r.f1 = parse_real("f1", f[11]);
    r.sede = parse_real("sede", f[12]);
  } catch (const std::invalid_argument& e) {
    throw DataError(e.what());
  }
  return r;
}

std::vector<ResultRow> read_results(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read results " + path.string());
  std::string line;
  if (!std::getline(in, line) || trim(line) != results_header()) {
    throw DataError(path.string() + ": missing results header");
  }
  std::vector<ResultRow> rows;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    rows.push_back(parse_result_row(line));
  }
  return rows;
}

void write_results(const fs::path& path, const std::vector<ResultRow>& rows) {
  std::string text = results_header() + "\n";
  for (const auto& r : rows) text += r.to_csv() + "\n";
  write_file_atomic(path, text);
}

}  // namespace sedlab
