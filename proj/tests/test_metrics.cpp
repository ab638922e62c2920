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

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "sedlab/common.hpp"
#include "sedlab/metrics.hpp"

using namespace sedlab;

namespace {

LabelGrid random_grid(std::size_t frames, std::size_t classes, Rng& rng, double p) {
  LabelGrid g(frames, classes);
  std::bernoulli_distribution b(p);
  for (auto& v : g.values) v = b(rng) ? 1.0f : 0.0f;
  return g;
}

// Per-segment counter written without shared code: builds segment activity
// maps explicitly, then counts.
struct Brute {
  long n = 0, s = 0, d = 0, i = 0, tp = 0, fp = 0, fn = 0;
};

Brute brute_force(const LabelGrid& pred, const LabelGrid& ref) {
  Brute b;
  const std::size_t segments = (ref.frames + 9) / 10;
  for (std::size_t seg = 0; seg < segments; ++seg) {
    long tp = 0, fp = 0, fn = 0, n = 0;
    for (std::size_t c = 0; c < ref.classes; ++c) {
      bool pa = false, ra = false;
      for (std::size_t t = seg * 10; t < std::min(ref.frames, seg * 10 + 10); ++t) {
        if (pred.values[t * ref.classes + c] == 1.0f) pa = true;
        if (ref.values[t * ref.classes + c] == 1.0f) ra = true;
      }
      if (pa && ra) ++tp;
      if (pa && !ra) ++fp;
      if (!pa && ra) ++fn;
      if (ra) ++n;
    }
    b.tp += tp;
    b.fp += fp;
    b.fn += fn;
    b.n += n;
    b.s += fn < fp ? fn : fp;
    b.d += fn > fp ? fn - fp : 0;
    b.i += fp > fn ? fp - fn : 0;
  }
  return b;
}

}  // namespace

TEST_CASE("binarize uses a strict threshold") {
  LabelGrid g(1, 4);
  g.values = {0.3f, 0.31f, 0.5f, 0.0f};
  auto b = binarize(g);
  CHECK(b.values == std::vector<float>{0.0f, 1.0f, 1.0f, 0.0f});
  LabelGrid half(3, 2, 0.5f);
  auto all = binarize(half);
  CHECK(std::all_of(all.values.begin(), all.values.end(), [](float v) { return v == 1.0f; }));
}

TEST_CASE("perfect and empty predictions") {
  Rng rng(1);
  auto ref = random_grid(30, 4, rng, 0.2);
  auto m = segment_metrics(ref, ref);
  CHECK(m.er == 0.0);
  CHECK(m.f1 == 1.0);
  CHECK(m.sede == 0.0);
  auto z = segment_metrics(LabelGrid(30, 4), ref);
  CHECK(z.f1 == 0.0);
  CHECK(z.er == 1.0);
}

TEST_CASE("hand-counted segment example") {
  // Two segments, two classes.
  LabelGrid ref(20, 2), pred(20, 2);
  ref.at(3, 0) = 1;   // seg 0 class 0
  ref.at(12, 1) = 1;  // seg 1 class 1
  pred.at(9, 0) = 1;  // seg 0 class 0: hit
  pred.at(9, 1) = 1;  // seg 0 class 1: insertion
  pred.at(15, 0) = 1; // seg 1 class 0 with class 1 missed: substitution
  auto c = segment_counts(pred, ref);
  CHECK(c.tp == 1);
  CHECK(c.fp == 2);
  CHECK(c.fn == 1);
  CHECK(c.n == 2);
  CHECK(c.s == 1);
  CHECK(c.d == 0);
  CHECK(c.i == 1);
  auto m = MetricsReport::from_counts(c);
  CHECK(m.er == doctest::Approx(1.0));
  CHECK(m.f1 == doctest::Approx(2.0 / 5.0));
}

TEST_CASE("segment metrics agree with a brute-force counter") {
  Rng rng(2);
  for (int trial = 0; trial < 1000; ++trial) {
    const double p = 0.05 + 0.4 * (trial % 10) / 10.0;
    auto ref = random_grid(20, 3, rng, p);
    auto pred = random_grid(20, 3, rng, p);
    auto c = segment_counts(pred, ref);
    auto b = brute_force(pred, ref);
    CHECK(c.n == b.n);
    CHECK(c.s == b.s);
    CHECK(c.d == b.d);
    CHECK(c.i == b.i);
    CHECK(c.tp == b.tp);
    CHECK(c.fp == b.fp);
    CHECK(c.fn == b.fn);
  }
}

TEST_CASE("a final partial segment counts as a segment") {
  LabelGrid ref(15, 1), pred(15, 1);
  ref.at(13, 0) = 1;
  CHECK(segment_counts(pred, ref).n == 1);
}

TEST_CASE("F1 never decreases when a true positive frame is added") {
  Rng rng(3);
  for (int trial = 0; trial < 300; ++trial) {
    auto ref = random_grid(40, 3, rng, 0.2);
    auto pred = random_grid(40, 3, rng, 0.2);
    const double before = segment_metrics(pred, ref).f1;
    for (std::size_t i = 0; i < ref.values.size(); ++i) {
      if (ref.values[i] == 1.0f && pred.values[i] == 0.0f) {
        pred.values[i] = 1.0f;
        break;
      }
    }
    CHECK(segment_metrics(pred, ref).f1 >= before);
  }
}

TEST_CASE("sede") {
  CHECK(sede(0.0, 1.0) == 0.0);
  CHECK(sede(1.0, 0.0) == 1.0);
  CHECK(sede(0.337, 0.762) == doctest::Approx(0.2875).epsilon(1e-12));
}

TEST_CASE("accumulator micro-averages counts") {
  Rng rng(4);
  MetricsAccumulator acc;
  SegmentCounts sum;
  for (int i = 0; i < 5; ++i) {
    auto ref = random_grid(30, 2, rng, 0.3), pred = random_grid(30, 2, rng, 0.3);
    acc.add(pred, ref);
    sum += segment_counts(pred, ref);
  }
  CHECK(acc.counts() == sum);
  CHECK(acc.report().er == MetricsReport::from_counts(sum).er);
}

TEST_CASE("report CSV row round trip") {
  SegmentCounts c{100, 12, 7, 30, 81, 42, 19};
  auto m = MetricsReport::from_counts(c);
  auto row = m.csv_row();
  CHECK(row.rfind("0.490000,0.726457,", 0) == 0);
  auto back = MetricsReport::parse_csv_row(row);
  CHECK(back.counts == c);
  CHECK(back.er == doctest::Approx(m.er).epsilon(1e-6));
  CHECK(m.text_block().find("SEDE") != std::string::npos);
  CHECK(MetricsReport::csv_header() == "er,f1,sede,sumN,sumS,sumD,sumI,sumTP,sumFP,sumFN");
}

TEST_CASE("shape mismatch throws") {
  CHECK_THROWS(segment_counts(LabelGrid(10, 2), LabelGrid(10, 3)));
}
