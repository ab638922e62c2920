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

#include "sedlab/grid.hpp"

#include <atomic>
#include <bit>
#include <cmath>
#include <cstdio>
#include <algorithm>
#include <cctype>
#include <map>
#include <optional>
#include <mutex>
#include <omp.h>
#include <sstream>
#include <thread>

#include "sedlab/common.hpp"

namespace sedlab {

namespace fs = std::filesystem;

GridKind parse_grid_kind(const std::string& s) {
  if (s == "single") return GridKind::Single;
  if (s == "aug" || s == "augmentation") return GridKind::Augmentation;
  if (s == "loss_transfer" || s == "loss") return GridKind::LossTransfer;
  if (s == "chunk") return GridKind::ChunkSize;
  if (s == "channels") return GridKind::Channels;
  throw std::invalid_argument("unknown grid '" + s + "' (expected single, aug, loss_transfer, chunk or channels)");
}

std::string grid_kind_name(GridKind k) {
  switch (k) {
    case GridKind::Single:
      return "single";
    case GridKind::Augmentation:
      return "aug";
    case GridKind::LossTransfer:
      return "loss_transfer";
    case GridKind::ChunkSize:
      return "chunk";
    case GridKind::Channels:
      return "channels";
  }
  return "?";
}

std::vector<std::array<bool, 4>> augmentation_combinations() {
  // Bit 3 is MU, bit 0 is CS; within a subset size, descending masks list
  // MU combinations first.
  std::vector<std::array<bool, 4>> out;
  for (int k = 0; k <= 4; ++k)
    for (int mask = 15; mask >= 0; --mask) {
      if (std::popcount(static_cast<unsigned>(mask)) != k) continue;
      out.push_back({(mask & 8) != 0, (mask & 4) != 0, (mask & 2) != 0, (mask & 1) != 0});
    }
  return out;
}

std::vector<ExperimentConfig> expand_grid(const GridSpec& spec) {
  std::vector<ExperimentConfig> rows;
  const ExperimentConfig& b = spec.base;
  switch (spec.kind) {
    case GridKind::Single:
      rows.push_back(b);
      break;
    case GridKind::Augmentation:
      for (const auto& combo : augmentation_combinations()) {
        ExperimentConfig c = b;
        c.mu = combo[0];
        c.co = combo[1];
        c.fs = combo[2];
        c.cs = combo[3];
        rows.push_back(c);
      }
      break;
    case GridKind::LossTransfer:
      for (LossKind loss : {LossKind::Bce, LossKind::BceDice})
        for (TransferMode t : {TransferMode::Scratch, TransferMode::MonoPretrained}) {
          ExperimentConfig c = b;
          c.loss = loss;
          c.transfer = t;
          rows.push_back(c);
        }
      break;
    case GridKind::ChunkSize:
      for (double s : {4.0, 8.0, 12.0}) {
        ExperimentConfig c = b;
        c.chunk_s = s;
        rows.push_back(c);
      }
      break;
    case GridKind::Channels:
      for (ChannelMode m : {ChannelMode::Mono, ChannelMode::All}) {
        ExperimentConfig c = b;
        c.channels = m;
        rows.push_back(c);
      }
      break;
  }
  const std::vector<std::uint64_t> seeds = spec.seeds.empty() ? std::vector<std::uint64_t>{b.seed} : spec.seeds;
  if (spec.formats.empty()) throw std::invalid_argument("grid needs at least one format");
  std::vector<ExperimentConfig> cells;
  for (const auto& row : rows)
    for (std::uint64_t seed : seeds)
      for (ArrayKind f : spec.formats) {
        ExperimentConfig c = row;
        c.seed = seed;
        c.format = f;
        cells.push_back(c.resolved());
      }
  return cells;
}

namespace {

ResultRow failed_row(const ExperimentConfig& cfg) {
  ResultRow r = parse_result_row(results_row(cfg, MetricsReport{}));
  r.ok = false;
  r.er = r.f1 = r.sede = std::nan("");
  return r;
}

}  // namespace

GridResult run_grid(const GridSpec& spec, const GridOptions& opts) {
  if (opts.out_dir.empty()) throw std::invalid_argument("grid needs an output directory");
  const auto cells = expand_grid(spec);
  fs::create_directories(opts.out_dir / "cells");
  {
    ExperimentConfig lock = spec.base;
    write_config_lock(opts.out_dir, lock);
    std::string grid_text = "grid=" + grid_kind_name(spec.kind) + "\nformats=";
    for (std::size_t i = 0; i < spec.formats.size(); ++i) grid_text += (i ? "," : "") + format_name(spec.formats[i]);
    grid_text += "\nseeds=";
    for (std::size_t i = 0; i < spec.seeds.size(); ++i) grid_text += (i ? "," : "") + std::to_string(spec.seeds[i]);
    grid_text += "\ncells=" + std::to_string(cells.size()) + "\n";
    write_file_atomic(opts.out_dir / "grid.lock", grid_text);
  }

  GridResult result;
  std::vector<std::optional<ResultRow>> rows(cells.size());
  std::mutex mu;
  std::atomic<std::size_t> next{0}, started{0};
  auto log = [&](const std::string& line) {
    if (!opts.log) return;
    std::lock_guard<std::mutex> lock(mu);
    *opts.log << line << std::endl;
  };

  auto work = [&](bool single_threaded) {
    if (single_threaded) omp_set_num_threads(1);
    for (;;) {
      const std::size_t i = next++;
      if (i >= cells.size()) return;
      const ExperimentConfig& cfg = cells[i];
      const fs::path dir = opts.out_dir / "cells" / cfg.hash_hex();
      const fs::path done = dir / "results.csv";
      if (opts.resume && fs::exists(done)) {
        auto existing = read_results(done);
        if (existing.size() == 1) {
          rows[i] = existing.front();
          std::lock_guard<std::mutex> lock(mu);
          ++result.reused;
          continue;
        }
      }
      if (opts.max_new_cells > 0 && started++ >= opts.max_new_cells) {
        std::lock_guard<std::mutex> lock(mu);
        result.complete = false;
        continue;
      }
      if (fs::exists(dir)) fs::remove_all(dir);
      fs::create_directories(dir);
      log("cell " + std::to_string(i + 1) + "/" + std::to_string(cells.size()) + " " + cfg.hash_hex() + " " +
          format_name(cfg.format) + " " + failed_row(cfg).key());
      RunOptions ro;
      ro.out_dir = dir;
      ro.pretrain_cache = opts.out_dir / "pretrain";
      ro.features = opts.features;
      try {
        RunRecord rec = train_run(cfg, ro);
        rows[i] = parse_result_row(results_row(cfg, rec.test));
        std::lock_guard<std::mutex> lock(mu);
        ++result.trained;
      } catch (const std::exception& e) {
        ResultRow fr = failed_row(cfg);
        write_file_atomic(dir / "error.txt", std::string(e.what()) + "\n");
        write_results(done, {fr});
        rows[i] = fr;
        log("cell " + cfg.hash_hex() + " failed: " + e.what());
        std::lock_guard<std::mutex> lock(mu);
        ++result.trained;
        ++result.failed;
      }
    }
  };

  const int workers = std::max(1, opts.workers);
  if (workers == 1) {
    work(false);
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(work, true);
    for (auto& t : pool) t.join();
  }

  for (const auto& r : rows) {
    if (r) result.rows.push_back(*r);
  }
  if (result.complete) write_results(opts.out_dir / "results.csv", result.rows);
  return result;
}

// ---------------------------------------------------------------- report

namespace {

std::string flag_mark(const std::string& v) {
  if (v == "1") return "✓";
  if (v == "0") return "×";
  return v;
}

std::string fixed3(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.3f", v);
  return buf;
}

}  // namespace

std::string report_markdown(const std::vector<ResultRow>& rows) {
  if (rows.empty()) throw std::invalid_argument("report needs at least one row");
  std::vector<std::string> keys, formats;
  std::map<std::string, const ResultRow*> first_of_key;
  std::map<std::pair<std::string, std::string>, const ResultRow*> cell;
  for (const auto& r : rows) {
    if (!first_of_key.count(r.key())) {
      keys.push_back(r.key());
      first_of_key[r.key()] = &r;
    }
    if (std::find(formats.begin(), formats.end(), r.format) == formats.end()) formats.push_back(r.format);
    cell.emplace(std::make_pair(r.key(), r.format), &r);
  }

  // Best per format: strict comparisons in row order keep the earlier row.
  std::map<std::string, std::string> best_er, best_f1;
  for (const auto& f : formats) {
    const ResultRow* ber = nullptr;
    const ResultRow* bf1 = nullptr;
    for (const auto& k : keys) {
      auto it = cell.find({k, f});
      if (it == cell.end() || !it->second->ok) continue;
      const ResultRow* r = it->second;
      if (!ber || r->er < ber->er) ber = r;
      if (!bf1 || r->f1 > bf1->f1) bf1 = r;
    }
    if (ber) best_er[f] = ber->key();
    if (bf1) best_f1[f] = bf1->key();
  }

  std::ostringstream md;
  md << "| MU | CO | FS | CS | Loss | Transfer | Chunk (s) | Channels | Seed |";
  for (const auto& f : formats) {
    std::string up = f;
    for (auto& ch : up) ch = static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
    md << " " << up << " ER ↓ | " << up << " F1 ↑ |";
  }
  md << "\n|";
  for (int i = 0; i < 9; ++i) md << ":-:|";
  for (std::size_t i = 0; i < formats.size(); ++i) md << "--:|--:|";
  md << "\n";
  for (const auto& k : keys) {
    const ResultRow& r = *first_of_key[k];
    md << "| " << flag_mark(r.mu) << " | " << flag_mark(r.co) << " | " << flag_mark(r.fs) << " | " << flag_mark(r.cs)
       << " | " << r.loss << " | " << r.transfer << " | " << r.chunk_s << " | " << r.channels << " | " << r.seed
       << " |";
    for (const auto& f : formats) {
      auto it = cell.find({k, f});
      if (it == cell.end()) {
        md << " - | - |";
        continue;
      }
      const ResultRow& c = *it->second;
      if (!c.ok) {
        md << " failed | failed |";
        continue;
      }
      const bool ber = best_er[f] == k, bf1 = best_f1[f] == k;
      md << " " << (ber ? "**" : "") << fixed3(c.er) << (ber ? "**" : "") << " |";
      md << " " << (bf1 ? "**" : "") << fixed3(c.f1) << (bf1 ? "**" : "") << " |";
    }
    md << "\n";
  }
  return md.str();
}

}  // namespace sedlab
