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

// Command-line front end: dataset synthesis, normalization, training,
// evaluation, ablation grids and result tables.

#include <CLI11.hpp>

#include <algorithm>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <sstream>

#include "sedlab/checkpoint.hpp"
#include "sedlab/common.hpp"
#include "sedlab/dataset.hpp"
#include "sedlab/experiment.hpp"
#include "sedlab/grid.hpp"

namespace fs = std::filesystem;
using namespace sedlab;

namespace {

enum ExitCode { kOk = 0, kUsage = 1, kData = 2, kNumeric = 3 };

// ---------------------------------------------------------------- dataset keys

std::vector<std::pair<std::string, std::string>> dataset_kv(const DatasetConfig& c) {
  return {
      {"n_train", std::to_string(c.n_train)},
      {"n_val", std::to_string(c.n_val)},
      {"n_test", std::to_string(c.n_test)},
      {"n_pretrain", std::to_string(c.n_pretrain)},
      {"duration_s", format_double(c.scene_duration_s)},
      {"max_polyphony", std::to_string(c.max_polyphony)},
      {"event_density", format_double(c.event_density)},
      {"event_median_s", format_double(c.event_median_s)},
      {"event_mean_s", format_double(c.event_mean_s)},
      {"event_min_s", format_double(c.event_min_s)},
      {"snr_db_min", format_double(c.snr_db_min)},
      {"snr_db_max", format_double(c.snr_db_max)},
      {"gain_min", format_double(c.gain_min)},
      {"gain_max", format_double(c.gain_max)},
      {"moving_fraction", format_double(c.moving_fraction)},
      {"seed", std::to_string(c.seed)},
  };
}

void dataset_set(DatasetConfig& c, const std::string& key, const std::string& value) {
  auto to_i = [&](int& dst) {
    std::size_t pos = 0;
    dst = std::stoi(value, &pos);
    if (pos != value.size()) throw std::invalid_argument("bad integer for '" + key + "'");
  };
  auto to_d = [&](double& dst) {
    std::size_t pos = 0;
    dst = std::stod(value, &pos);
    if (pos != value.size()) throw std::invalid_argument("bad number for '" + key + "'");
  };
  if (key == "n_train") to_i(c.n_train);
  else if (key == "n_val") to_i(c.n_val);
  else if (key == "n_test") to_i(c.n_test);
  else if (key == "n_pretrain") to_i(c.n_pretrain);
  else if (key == "duration_s") to_d(c.scene_duration_s);
  else if (key == "max_polyphony") to_i(c.max_polyphony);
  else if (key == "event_density") to_d(c.event_density);
  else if (key == "event_median_s") to_d(c.event_median_s);
  else if (key == "event_mean_s") to_d(c.event_mean_s);
  else if (key == "event_min_s") to_d(c.event_min_s);
  else if (key == "snr_db_min") to_d(c.snr_db_min);
  else if (key == "snr_db_max") to_d(c.snr_db_max);
  else if (key == "gain_min") to_d(c.gain_min);
  else if (key == "gain_max") to_d(c.gain_max);
  else if (key == "moving_fraction") to_d(c.moving_fraction);
  else if (key == "seed") c.seed = std::stoull(value);
  else throw std::invalid_argument("unknown dataset key '" + key + "'");
}

// ---------------------------------------------------------------- option plumbing

/// String-valued flags named after config keys; only flags given on the
/// command line are applied, after the --config file.
struct KeyFlags {
  std::map<std::string, std::string> values;

  void add(CLI::App* app, const std::vector<std::string>& keys) {
    for (const auto& k : keys) {
      std::string dashed = k;
      std::replace(dashed.begin(), dashed.end(), '_', '-');
      std::string names = "--" + k;
      if (dashed != k) names += ",--" + dashed;
      app->add_option(names, values[k], "config key '" + k + "'");
    }
  }

  template <typename Setter>
  void apply(CLI::App* app, Setter set) const {
    for (const auto& [k, v] : values) {
      if (app->get_option("--" + k)->count() > 0) set(k, v);
    }
  }
};

template <typename Setter>
void apply_config_file(const std::string& path, Setter set) {
  if (path.empty()) return;
  // A config.lock can be fed back in; its hash line is informational.
  for (const auto& [k, v] : read_kv_file(path))
    if (k != "hash") set(k, v);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

void write_lock(const fs::path& path, const std::vector<std::pair<std::string, std::string>>& kv) {
  std::string text;
  for (const auto& [k, v] : kv) text += k + "=" + v + "\n";
  write_file_atomic(path, text);
}

// ---------------------------------------------------------------- subcommands

int cmd_gen(const std::string& config, CLI::App* app, const KeyFlags& flags, const std::string& out) {
  DatasetConfig dc;
  auto set = [&](const std::string& k, const std::string& v) { dataset_set(dc, k, v); };
  apply_config_file(config, set);
  flags.apply(app, set);
  const auto entries = generate_dataset(dc, out);
  write_lock(fs::path(out) / "config.lock", dataset_kv(dc));
  std::map<std::string, int> counts;
  for (const auto& e : entries) ++counts[e.split];
  std::cout << "wrote " << entries.size() << " scenes to " << out << " (";
  bool first = true;
  for (const auto& [split, n] : counts) {
    std::cout << (first ? "" : ", ") << split << " " << n;
    first = false;
  }
  std::cout << ")\n";
  return kOk;
}

int cmd_fit_norm(const std::string& dataset, const std::string& format, const std::string& channels,
                 const std::string& split, const std::string& out) {
  if (split != "train" && split != "pretrain") {
    throw std::invalid_argument("normalization statistics may only be fitted on the train or pretrain split");
  }
  const ArrayKind fmt = split == "pretrain" ? ArrayKind::FOA : parse_format(format);
  const ChannelMode ch = split == "pretrain" ? ChannelMode::Mono : parse_channel_mode(channels);
  const SplitData data = load_split(Dataset(dataset), split, fmt, ch);
  const NormStats st = fit_split_norm(data);
  save_norm_stats(out, st);
  write_lock(out + ".lock", {{"dataset", dataset},
                             {"split", split},
                             {"format", format_name(fmt)},
                             {"channels", channel_mode_name(ch)}});
  std::cout << "fitted " << st.channels << " x " << st.bins << " statistics on " << data.scenes.size() << " "
            << split << " scenes -> " << out << "\n";
  return kOk;
}

ExperimentConfig experiment_from(const std::string& config, CLI::App* app, const KeyFlags& flags) {
  ExperimentConfig cfg;
  auto set = [&](const std::string& k, const std::string& v) { cfg.set(k, v); };
  apply_config_file(config, set);
  flags.apply(app, set);
  return cfg.resolved();
}

int cmd_train(const ExperimentConfig& cfg, const std::string& out, bool quiet) {
  RunOptions opts;
  opts.out_dir = out;
  opts.pretrain_cache = fs::path(out) / "pretrain";
  opts.log = quiet ? nullptr : &std::cerr;
  const RunRecord rec = train_run(cfg, opts);
  std::cout << results_header() << "\n" << results_row(cfg, rec.test) << "\n";
  if (!quiet) {
    std::cerr << "best epoch " << rec.best_epoch << ", " << rec.wall_s << " s\n" << rec.test.text_block();
  }
  return kOk;
}

int cmd_eval(const std::string& checkpoint, std::string dataset, std::string split, std::string format,
             std::string channels, std::string chunk_s, std::string norm, const std::string& out) {
  const fs::path ckpt_path(checkpoint);
  const fs::path run_dir = ckpt_path.parent_path();
  std::map<std::string, std::string> lock;
  if (fs::exists(run_dir / "config.lock")) {
    for (const auto& [k, v] : read_kv_file(run_dir / "config.lock")) lock[k] = v;
  }
  auto pick = [&](std::string& v, const std::string& key, const std::string& fallback) {
    if (v.empty()) v = lock.count(key) ? lock[key] : fallback;
  };
  pick(dataset, "dataset", "");
  pick(format, "format", "foa");
  pick(channels, "channels", "all");
  pick(chunk_s, "chunk_s", "4");
  if (dataset.empty()) throw std::invalid_argument("--dataset is required (no config.lock next to the checkpoint)");
  if (split != "val" && split != "test" && split != "train") throw std::invalid_argument("unknown split '" + split + "'");

  const Checkpoint ck = load_checkpoint(ckpt_path);
  if (norm.empty()) {
    if (ck.norm_stats.empty()) throw std::invalid_argument("--norm is required for this checkpoint");
    norm = (run_dir / ck.norm_stats).string();
  }
  const NormStats stats = load_norm_stats(norm);
  Crnn<float> model(CrnnConfig::parse(ck.model));
  restore_checkpoint(ck, model);

  const ArrayKind fmt = parse_format(format);
  const ChannelMode ch = parse_channel_mode(channels);
  const SplitData data = load_split(Dataset(dataset), split, fmt, ch);
  ExperimentConfig tmp;
  tmp.chunk_s = std::stod(chunk_s);
  const MetricsReport m = evaluate(model, data, stats, seconds_to_label_frames(tmp.chunk_s));

  std::cout << MetricsReport::csv_header() << "\n" << m.csv_row() << "\n" << m.text_block();
  if (!out.empty()) {
    fs::create_directories(out);
    write_lock(fs::path(out) / "config.lock", {{"checkpoint", checkpoint},
                                               {"dataset", dataset},
                                               {"split", split},
                                               {"format", format_name(fmt)},
                                               {"channels", channel_mode_name(ch)},
                                               {"chunk_s", format_double(tmp.chunk_s)},
                                               {"norm", norm}});
    write_file_atomic(fs::path(out) / "metrics.csv", MetricsReport::csv_header() + "\n" + m.csv_row() + "\n");
  }
  return kOk;
}

int cmd_grid(const ExperimentConfig& base, const std::string& kind, const std::string& formats,
             const std::string& seeds, const std::string& out, bool resume, int workers, std::size_t max_cells) {
  GridSpec spec;
  spec.kind = parse_grid_kind(kind);
  spec.base = base;
  spec.formats.clear();
  for (const auto& f : split_list(formats)) spec.formats.push_back(parse_format(f));
  for (const auto& s : split_list(seeds)) spec.seeds.push_back(std::stoull(s));
  GridOptions opts;
  opts.out_dir = out;
  opts.resume = resume;
  opts.workers = workers;
  opts.max_new_cells = max_cells;
  FeatureCache cache;
  opts.features = &cache;
  opts.log = &std::cerr;
  const GridResult res = run_grid(spec, opts);
  std::cerr << "grid: " << res.trained << " trained, " << res.reused << " reused, " << res.failed << " failed\n";
  if (!res.complete) {
    std::cerr << "grid stopped early; rerun with --resume to finish\n";
    return kOk;
  }
  std::cout << report_markdown(res.rows);
  return res.failed > 0 ? kNumeric : kOk;
}

int cmd_report(std::string results, const std::string& out, const std::string& csv_out) {
  if (fs::is_directory(results)) results = (fs::path(results) / "results.csv").string();
  const auto rows = read_results(results);
  const std::string md = report_markdown(rows);
  std::cout << md;
  if (!out.empty()) write_file_atomic(out, md);
  if (!csv_out.empty()) write_results(csv_out, rows);
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"sedlab: multichannel sound event detection experiments"};
  app.require_subcommand(1);
  std::string config;

  // gen
  auto* gen = app.add_subcommand("gen", "Synthesize a dataset");
  std::string gen_out;
  KeyFlags gen_flags;
  gen->add_option("--out,-o", gen_out, "Output directory")->required();
  gen->add_option("--config", config, "key=value file");
  gen_flags.add(gen, [] {
    std::vector<std::string> keys;
    for (const auto& [k, v] : dataset_kv(DatasetConfig{})) keys.push_back(k);
    return keys;
  }());

  // fit-norm
  auto* fit = app.add_subcommand("fit-norm", "Fit normalization statistics on the training split");
  std::string fit_dataset, fit_format = "foa", fit_channels = "all", fit_split = "train", fit_out;
  fit->add_option("--dataset", fit_dataset)->required();
  fit->add_option("--format", fit_format);
  fit->add_option("--channels", fit_channels);
  fit->add_option("--split", fit_split);
  fit->add_option("--out,-o", fit_out)->required();

  // train
  auto* train = app.add_subcommand("train", "Train one configuration");
  std::string train_out;
  bool quiet = false;
  KeyFlags train_flags;
  train->add_option("--out,-o", train_out, "Run directory")->required();
  train->add_option("--config", config, "key=value file");
  train->add_flag("--quiet,-q", quiet);
  train_flags.add(train, ExperimentConfig::keys());

  // eval
  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint");
  std::string ev_ckpt, ev_dataset, ev_split = "test", ev_format, ev_channels, ev_chunk, ev_norm, ev_out;
  ev->add_option("--checkpoint", ev_ckpt)->required();
  ev->add_option("--dataset", ev_dataset);
  ev->add_option("--split", ev_split);
  ev->add_option("--format", ev_format);
  ev->add_option("--channels", ev_channels);
  ev->add_option("--chunk_s,--chunk-s", ev_chunk);
  ev->add_option("--norm", ev_norm);
  ev->add_option("--out,-o", ev_out);

  // grid
  auto* grid = app.add_subcommand("grid", "Run an ablation grid");
  std::string grid_kind = "single", grid_formats = "foa,mic", grid_seeds, grid_out;
  bool resume = false;
  int workers = 1;
  std::size_t max_cells = 0;
  KeyFlags grid_flags;
  grid->add_option("--grid", grid_kind, "single, aug, loss_transfer, chunk or channels");
  grid->add_option("--formats", grid_formats);
  grid->add_option("--seeds", grid_seeds, "Comma-separated seeds");
  grid->add_option("--out,-o", grid_out)->required();
  grid->add_flag("--resume", resume);
  grid->add_option("--workers", workers);
  grid->add_option("--max-cells", max_cells, "Stop after this many newly trained cells");
  grid->add_option("--config", config, "key=value file");
  grid_flags.add(grid, [] {
    std::vector<std::string> keys;
    for (const auto& k : ExperimentConfig::keys())
      if (k != "format") keys.push_back(k);
    return keys;
  }());

  // report
  auto* rep = app.add_subcommand("report", "Format a results CSV as a Markdown table");
  std::string rep_in, rep_out, rep_csv;
  rep->add_option("--results", rep_in, "results.csv or a grid directory")->required();
  rep->add_option("--out,-o", rep_out, "Markdown output file");
  rep->add_option("--csv", rep_csv, "Re-serialized CSV output file");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*gen) return cmd_gen(config, gen, gen_flags, gen_out);
    if (*fit) return cmd_fit_norm(fit_dataset, fit_format, fit_channels, fit_split, fit_out);
    if (*train) return cmd_train(experiment_from(config, train, train_flags), train_out, quiet);
    if (*ev) return cmd_eval(ev_ckpt, ev_dataset, ev_split, ev_format, ev_channels, ev_chunk, ev_norm, ev_out);
    if (*grid) {
      return cmd_grid(experiment_from(config, grid, grid_flags), grid_kind, grid_formats, grid_seeds, grid_out,
                      resume, workers, max_cells);
    }
    if (*rep) return cmd_report(rep_in, rep_out, rep_csv);
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return kNumeric;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kData;
  } catch (const std::invalid_argument& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kData;
  }
  return kUsage;
}
