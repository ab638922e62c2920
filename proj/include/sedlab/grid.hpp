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
#include <cstdint>
#include <filesystem>
#include <ostream>
#include <string>
#include <vector>

#include "sedlab/experiment.hpp"

namespace sedlab {

enum class GridKind { Single, Augmentation, LossTransfer, ChunkSize, Channels };

GridKind parse_grid_kind(const std::string& s);
std::string grid_kind_name(GridKind k);

struct GridSpec {
  GridKind kind = GridKind::Single;
  std::vector<ArrayKind> formats = {ArrayKind::FOA, ArrayKind::MIC};
  std::vector<std::uint64_t> seeds;  // empty: the base seed only
  ExperimentConfig base;
};

/// The 16 augmentation subsets as (mu, co, fs, cs), in the order none,
/// singles, pairs, triples, all.
std::vector<std::array<bool, 4>> augmentation_combinations();

/// Cells in table order: for each row (grid setting, then seed), one cell
/// per format.
std::vector<ExperimentConfig> expand_grid(const GridSpec& spec);

struct GridOptions {
  std::filesystem::path out_dir;
  /// Reuse finished cells found in out_dir/cells.
  bool resume = false;
  /// Concurrent cells; each cell trains single-threaded when > 1.
  int workers = 1;
  /// Stop after this many newly trained cells (0 = no limit). Finished
  /// cells are kept, so a later resumed run completes the grid.
  std::size_t max_new_cells = 0;
  FeatureCache* features = nullptr;
  std::ostream* log = nullptr;
};

struct GridResult {
  std::vector<ResultRow> rows;
  std::size_t trained = 0;
  std::size_t reused = 0;
  std::size_t failed = 0;
  bool complete = true;
};

/// Runs every cell, each in out_dir/cells/<config hash>, writing the cell's
/// results.csv last. A failing cell is recorded with "nan" metrics and an
/// error.txt, and the grid continues. The combined table is written to
/// out_dir/results.csv when all cells are present.
GridResult run_grid(const GridSpec& spec, const GridOptions& opts);

/// Markdown ablation table: one row per
/// configuration, ER and F1 columns per format, best ER (lowest) and best F1
/// (highest) per format in bold; ties go to the earlier row. Failed cells
/// show "failed" and never win.
std::string report_markdown(const std::vector<ResultRow>& rows);

}  // namespace sedlab
