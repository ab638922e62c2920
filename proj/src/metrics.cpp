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

#include "sedlab/metrics.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>
#include <stdexcept>

namespace sedlab {

LabelGrid binarize(const LabelGrid& pred, double threshold) {
  LabelGrid out(pred.frames, pred.classes);
  // Compare in the grid's precision so a stored 0.3f counts as exactly 0.3.
  const float th = static_cast<float>(threshold);
  for (std::size_t i = 0; i < pred.values.size(); ++i) {
    out.values[i] = pred.values[i] > th ? 1.0f : 0.0f;
  }
  return out;
}

SegmentCounts& SegmentCounts::operator+=(const SegmentCounts& o) {
  n += o.n;
  s += o.s;
  d += o.d;
  i += o.i;
  tp += o.tp;
  fp += o.fp;
  fn += o.fn;
  return *this;
}

double sede(double er, double f1) { return 0.5 * er + 0.5 * (1.0 - f1); }

MetricsReport MetricsReport::from_counts(const SegmentCounts& c) {
  MetricsReport r;
  r.counts = c;
  r.er = c.n > 0 ? static_cast<double>(c.s + c.d + c.i) / static_cast<double>(c.n)
                 : static_cast<double>(c.i);
  r.f1 = c.tp > 0 ? 2.0 * static_cast<double>(c.tp) / static_cast<double>(2 * c.tp + c.fp + c.fn) : 0.0;
  r.sede = sedlab::sede(r.er, r.f1);
  return r;
}

std::string MetricsReport::csv_header() { return "er,f1,sede,sumN,sumS,sumD,sumI,sumTP,sumFP,sumFN"; }

std::string MetricsReport::csv_row() const {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%.6f,%.6f,%.6f,%lld,%lld,%lld,%lld,%lld,%lld,%lld", er, f1, sede,
                static_cast<long long>(counts.n), static_cast<long long>(counts.s),
                static_cast<long long>(counts.d), static_cast<long long>(counts.i),
                static_cast<long long>(counts.tp), static_cast<long long>(counts.fp),
                static_cast<long long>(counts.fn));
  return buf;
}

MetricsReport MetricsReport::parse_csv_row(const std::string& row) {
  std::stringstream ss(row);
  std::string f[10];
  for (auto& field : f) {
    if (!std::getline(ss, field, ',')) throw std::invalid_argument("metrics row: too few fields");
  }
  MetricsReport r;
  r.er = std::stod(f[0]);
  r.f1 = std::stod(f[1]);
  r.sede = std::stod(f[2]);
  r.counts = {std::stoll(f[3]), std::stoll(f[4]), std::stoll(f[5]), std::stoll(f[6]),
              std::stoll(f[7]), std::stoll(f[8]), std::stoll(f[9])};
  return r;
}

std::string MetricsReport::text_block() const {
  char buf[512];
  std::snprintf(buf, sizeof buf,
                "ER    %.6f\nF1    %.6f\nSEDE  %.6f\nN %lld  S %lld  D %lld  I %lld\n"
                "TP %lld  FP %lld  FN %lld\n",
                er, f1, sede, static_cast<long long>(counts.n), static_cast<long long>(counts.s),
                static_cast<long long>(counts.d), static_cast<long long>(counts.i),
                static_cast<long long>(counts.tp), static_cast<long long>(counts.fp),
                static_cast<long long>(counts.fn));
  return buf;
}

SegmentCounts segment_counts(const LabelGrid& pred, const LabelGrid& ref,
                             std::size_t frames_per_segment) {
  if (!pred.same_shape(ref)) throw std::invalid_argument("segment_counts: shape mismatch");
  if (frames_per_segment == 0) throw std::invalid_argument("segment length must be positive");
  SegmentCounts total;
  const std::size_t L = ref.classes;
  std::vector<unsigned char> p_act(L), r_act(L);
  for (std::size_t start = 0; start < ref.frames; start += frames_per_segment) {
    const std::size_t end = std::min(ref.frames, start + frames_per_segment);
    std::fill(p_act.begin(), p_act.end(), 0);
    std::fill(r_act.begin(), r_act.end(), 0);
    for (std::size_t t = start; t < end; ++t)
      for (std::size_t l = 0; l < L; ++l) {
        p_act[l] |= pred.at(t, l) > 0.5f;
        r_act[l] |= ref.at(t, l) > 0.5f;
      }
    std::int64_t tp = 0, fp = 0, fn = 0, n = 0;
    for (std::size_t l = 0; l < L; ++l) {
      tp += p_act[l] & r_act[l];
      fp += p_act[l] & (!r_act[l]);
      fn += (!p_act[l]) & r_act[l];
      n += r_act[l];
    }
    total.tp += tp;
    total.fp += fp;
    total.fn += fn;
    total.n += n;
    total.s += std::min(fn, fp);
    total.d += std::max<std::int64_t>(0, fn - fp);
    total.i += std::max<std::int64_t>(0, fp - fn);
  }
  return total;
}

MetricsReport segment_metrics(const LabelGrid& pred, const LabelGrid& ref,
                              std::size_t frames_per_segment) {
  return MetricsReport::from_counts(segment_counts(pred, ref, frames_per_segment));
}

void MetricsAccumulator::add(const LabelGrid& pred_binary, const LabelGrid& ref) {
  counts_ += segment_counts(pred_binary, ref);
}

}  // namespace sedlab
