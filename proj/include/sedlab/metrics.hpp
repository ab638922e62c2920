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
#include <string>
#include <vector>

#include "sedlab/label_grid.hpp"

namespace sedlab {

inline constexpr double kDefaultThreshold = 0.3;
inline constexpr std::size_t kFramesPerSegment = 10;  // 1 s at 100 ms frames

/// 1 where pred > threshold (strict), else 0.
LabelGrid binarize(const LabelGrid& pred, double threshold = kDefaultThreshold);

/// Segment-level counts, summed over segments and clips.
struct SegmentCounts {
  std::int64_t n = 0, s = 0, d = 0, i = 0, tp = 0, fp = 0, fn = 0;

  SegmentCounts& operator+=(const SegmentCounts& o);
  friend bool operator==(const SegmentCounts&, const SegmentCounts&) = default;
};

struct MetricsReport {
  SegmentCounts counts;
  double er = 0.0;
  double f1 = 0.0;
  double sede = 0.0;

  static MetricsReport from_counts(const SegmentCounts& c);
  /// `er,f1,sede,sumN,sumS,sumD,sumI,sumTP,sumFP,sumFN`, 6 decimals.
  std::string csv_row() const;
  static std::string csv_header();
  static MetricsReport parse_csv_row(const std::string& row);
  std::string text_block() const;
};

/// Counts for one clip. Both grids must be binary and of equal shape. A class
/// is active in a segment when any of its frames is active; the trailing
/// partial segment is kept.
SegmentCounts segment_counts(const LabelGrid& pred, const LabelGrid& ref,
                             std::size_t frames_per_segment = kFramesPerSegment);

/// ER = (S + D + I) / N, or I when N = 0. F1 = 2TP / (2TP + FP + FN), 0 when
/// TP = 0.
MetricsReport segment_metrics(const LabelGrid& pred, const LabelGrid& ref,
                              std::size_t frames_per_segment = kFramesPerSegment);

double sede(double er, double f1);

/// Micro-averaging over clips.
class MetricsAccumulator {
 public:
  void add(const LabelGrid& pred_binary, const LabelGrid& ref);
  void add(const SegmentCounts& c) { counts_ += c; }
  MetricsReport report() const { return MetricsReport::from_counts(counts_); }
  const SegmentCounts& counts() const { return counts_; }

 private:
  SegmentCounts counts_;
};

}  // namespace sedlab
