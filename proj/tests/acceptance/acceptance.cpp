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

// Acceptance driver: one PASS/FAIL line per criterion. Pass criterion
// numbers as arguments to run a subset.

#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <iterator>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "sedlab/augment.hpp"
#include "sedlab/dataset.hpp"
#include "sedlab/experiment.hpp"
#include "sedlab/gradcheck.hpp"
#include "sedlab/grid.hpp"
#include "sedlab/losses.hpp"
#include "sedlab/metrics.hpp"
#include "sedlab/optim.hpp"
#include "sedlab/scene.hpp"

using namespace sedlab;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
  std::string warning;

  Outcome() = default;
  Outcome(bool p, std::string d) : pass(p), detail(std::move(d)) {}
};

double uniform01(Rng& rng) { return std::uniform_real_distribution<double>(0.0, 1.0)(rng); }

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), f, v);
  return buf;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

fs::path scratch(const std::string& name) {
  fs::path p = fs::temp_directory_path() / "sedlab_acceptance" / name;
  fs::remove_all(p);
  fs::create_directories(p.parent_path());
  return p;
}

// ---------------------------------------------------------------- 1

Outcome gradients() {
  const auto t0 = Clock::now();
  CrnnConfig c;
  c.input_channels = 4;
  c.n_mels = 16;
  c.conv_blocks = {{4, 2, 2}, {6, 2, 2}, {8, 1, 2}};
  c.gru_units = 5;
  c.n_classes = 4;
  c.frames_per_label = 4;
  Crnn<double> model(c);
  model.init(11);
  Tensor<double> x({3, 4, 16, 16});
  Rng rng(12);
  std::normal_distribution<double> g;
  for (auto& v : x.data) v = g(rng);
  Tensor<double> y({3, 4, 4});
  for (auto& v : y.data) v = uniform01(rng) < 0.3 ? 1.0 : 0.0;

  double worst = 0.0;
  std::string where;
  GradCheckOptions opts;
  opts.samples_per_tensor = 100000;  // every entry
  // At 1e-5 central-difference round-off dominates on small input gradients.
  opts.step = 1e-4;
  for (LossKind k : {LossKind::Bce, LossKind::Dice, LossKind::BceDice}) {
    auto r = grad_check(model, x, y, k, {}, opts);
    where += loss_name(k) + "=" + fmt("%.2e", r.max_rel_error) + " ";
    worst = std::max(worst, r.max_rel_error);
  }
  // The check must notice a 1% error in the analytic gradient.
  GradCheckOptions corrupt = opts;
  corrupt.analytic_scale = 1.01;
  const double seen = grad_check(model, x, y, LossKind::BceDice, {}, corrupt).max_rel_error;
  const double secs = seconds_since(t0);
  return {worst < 1e-4 && seen > 1e-3 && secs < 60.0,
          where + "corrupted=" + fmt("%.2e", seen) + fmt(" (%.1f s)", secs)};
}

// ---------------------------------------------------------------- 2

struct Ratios {
  double er, f1;
};

// Counts from first principles: one set of active classes per segment.
Ratios brute_force(const LabelGrid& pred, const LabelGrid& ref) {
  long n = 0, s = 0, d = 0, ins = 0, tp = 0, fp = 0, fn = 0;
  for (std::size_t seg = 0; seg * 10 < ref.frames; ++seg) {
    std::set<std::size_t> p, r;
    for (std::size_t t = seg * 10; t < std::min(ref.frames, seg * 10 + 10); ++t)
      for (std::size_t l = 0; l < ref.classes; ++l) {
        if (pred.at(t, l) > 0.5f) p.insert(l);
        if (ref.at(t, l) > 0.5f) r.insert(l);
      }
    long both = 0;
    for (auto l : p) both += r.count(l);
    const long only_p = static_cast<long>(p.size()) - both, only_r = static_cast<long>(r.size()) - both;
    tp += both;
    fp += only_p;
    fn += only_r;
    s += std::min(only_p, only_r);
    d += std::max(0L, only_r - only_p);
    ins += std::max(0L, only_p - only_r);
    n += static_cast<long>(r.size());
  }
  Ratios out;
  out.er = n > 0 ? double(s + d + ins) / double(n) : double(ins);
  out.f1 = tp > 0 ? 2.0 * tp / double(2 * tp + fp + fn) : 0.0;
  return out;
}

LabelGrid random_binary(std::size_t frames, std::size_t classes, double density, Rng& rng) {
  LabelGrid g(frames, classes);
  for (auto& v : g.values) v = uniform01(rng) < density ? 1.0f : 0.0f;
  return g;
}

Outcome metric_oracle() {
  const auto t0 = Clock::now();
  Rng rng(21);
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const std::size_t frames = 1 + rng() % 80, classes = 1 + rng() % 12;
    const double dp = uniform01(rng) * 0.5, dr = uniform01(rng) * 0.5;
    auto pred = random_binary(frames, classes, dp, rng);
    auto ref = random_binary(frames, classes, dr, rng);
    auto m = segment_metrics(pred, ref);
    auto o = brute_force(pred, ref);
    worst = std::max({worst, std::abs(m.er - o.er), std::abs(m.f1 - o.f1)});
  }
  const double secs = seconds_since(t0);
  return {worst < 1e-12 && secs < 10.0, "max |diff| " + fmt("%.1e", worst) + fmt(" (%.2f s)", secs)};
}

// ---------------------------------------------------------------- 3

Outcome dice_f1() {
  Rng rng(31);
  LossConfig lc;
  lc.dice_epsilon = 1e-7;
  double worst = 0.0;
  for (int i = 0; i < 500; ++i) {
    const std::size_t frames = 1 + rng() % 60, classes = 1 + rng() % 12;
    auto p = random_binary(frames, classes, uniform01(rng), rng);
    auto y = random_binary(frames, classes, uniform01(rng), rng);
    std::vector<double> pd(p.values.begin(), p.values.end()), yd(y.values.begin(), y.values.end());
    const double dice = dice_loss<double>(pd, yd, 1, lc).value;
    double tp = 0, fp = 0, fn = 0;
    for (std::size_t k = 0; k < pd.size(); ++k) {
      tp += pd[k] * yd[k];
      fp += pd[k] * (1 - yd[k]);
      fn += (1 - pd[k]) * yd[k];
    }
    const double f1 = tp > 0 ? 2 * tp / (2 * tp + fp + fn) : 0.0;
    worst = std::max(worst, std::abs(dice - (1.0 - f1)));
  }
  return {worst < 1e-6, "max |Dice - (1 - F1)| " + fmt("%.2e", worst)};
}

// ---------------------------------------------------------------- 4

double xcorr_lag(const float* a, const float* b, std::size_t n, int max_lag) {
  auto corr = [&](int lag) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const long j = static_cast<long>(i) + lag;
      if (j >= 0 && j < static_cast<long>(n)) s += double(a[i]) * b[j];
    }
    return s;
  };
  int best = -max_lag;
  double best_v = -1e300;
  for (int l = -max_lag; l <= max_lag; ++l) {
    const double v = corr(l);
    if (v > best_v) best_v = v, best = l;
  }
  const double ym = corr(best - 1), yp = corr(best + 1), den = ym - 2 * best_v + yp;
  return best + (den != 0.0 ? 0.5 * (ym - yp) / den : 0.0);
}

std::array<double, 3> unit(double az_deg, double el_deg) {
  const double a = az_deg * kPi / 180.0, e = el_deg * kPi / 180.0;
  return {std::cos(e) * std::cos(a), std::cos(e) * std::sin(a), std::sin(e)};
}

EventSpec event_at(std::int64_t dur_ms, const std::vector<Direction>& traj) {
  EventSpec e;
  e.class_id = 0;
  e.onset_ms = 100;
  e.duration_ms = dur_ms;
  e.atom = {AtomKind::NoiseBand, 3000.0, 5600.0, 1, false};
  e.gain = 0.2;
  e.trajectory = traj;
  return e;
}

Outcome array_fidelity() {
  Rng rng(41);
  const double fs = 24000.0, r = 0.042, v = 343.0;
  const std::array<std::array<double, 3>, 4> caps = {unit(45, 35), unit(-45, -35), unit(135, -35), unit(-135, 35)};
  RenderOptions ro;
  ro.add_noise = false;

  double worst_lag = 0.0;
  for (int k = 0; k < 100; ++k) {
    const Direction d{(uniform01(rng) * 2 - 1) * kPi, std::asin(uniform01(rng) * 2 - 1)};
    SceneSpec spec;
    spec.duration_ms = 600;
    spec.seed = 100 + k;
    spec.events.push_back(event_at(400, std::vector<Direction>(4, d)));
    auto out = render_scene(spec, ArrayFormat::tetrahedral_mic(), ro);
    const auto u = unit(d.azimuth * 180.0 / kPi, d.elevation * 180.0 / kPi);
    // Arrival time relative to the array centre is -r (c . u) / v.
    auto arrival = [&](int c) { return -r * (caps[c][0] * u[0] + caps[c][1] * u[1] + caps[c][2] * u[2]) / v * fs; };
    for (int c = 1; c < 4; ++c) {
      const double lag = xcorr_lag(out.audio.channel(0), out.audio.channel(c), out.audio.frames, 12);
      worst_lag = std::max(worst_lag, std::abs(lag - (arrival(c) - arrival(0))));
    }
  }

  // Moving FOA source: a new direction every 100 ms; the first 10 ms of
  // each segment crossfades from the previous one.
  double sq = 0.0;
  long count = 0;
  for (int k = 0; k < 20; ++k) {
    std::vector<Direction> traj;
    for (int s = 0; s < 10; ++s) traj.push_back({(uniform01(rng) * 2 - 1) * kPi, std::asin(uniform01(rng) * 2 - 1)});
    SceneSpec spec;
    spec.duration_ms = 1300;
    spec.seed = 500 + k;
    spec.events.push_back(event_at(1000, traj));
    auto out = render_scene(spec, ArrayFormat::foa(), ro);
    for (int s = 0; s < 10; ++s) {
      const std::size_t a = static_cast<std::size_t>((0.1 + 0.1 * s) * fs) + 240, b = a - 240 + 2400;
      const double az = traj[s].azimuth, el = traj[s].elevation;
      const double expect[4] = {1.0, std::sin(az) * std::cos(el), std::sin(el), std::cos(az) * std::cos(el)};
      double ww = 0.0;
      for (std::size_t i = a; i < b; ++i) ww += double(out.audio.channel(0)[i]) * out.audio.channel(0)[i];
      for (int c = 0; c < 4; ++c) {
        double cw = 0.0;
        for (std::size_t i = a; i < b; ++i) cw += double(out.audio.channel(c)[i]) * out.audio.channel(0)[i];
        sq += std::pow(cw / ww - expect[c], 2);
        ++count;
      }
    }
  }
  const double rms = std::sqrt(sq / count);
  return {worst_lag < 0.5 && rms < 1e-3,
          "max MIC delay error " + fmt("%.3f samples", worst_lag) + ", FOA gain RMS " + fmt("%.2e", rms)};
}

// ---------------------------------------------------------------- 5

Outcome schedule() {
  const bool anchors = lr_schedule(0.0) == 1e-4 && lr_schedule(0.1) == 1e-3 && lr_schedule(0.7) == 1e-3 &&
                       lr_schedule(1.0) == 1e-4;
  const double mid = lr_schedule(0.05), target = std::pow(10.0, -3.5);
  const double rel = std::abs(mid - target) / target;
  // Log-linear: log10(lr) is affine on each segment.
  double dev = 0.0;
  for (int i = 0; i <= 100; ++i) {
    const double p = 0.1 * i / 100.0;
    dev = std::max(dev, std::abs(std::log10(lr_schedule(p)) - (-4.0 + 10.0 * p)));
    const double q = 0.7 + 0.3 * i / 100.0;
    dev = std::max(dev, std::abs(std::log10(lr_schedule(q)) - (-3.0 - (q - 0.7) / 0.3)));
  }
  return {anchors && rel < 1e-12 && dev < 1e-12,
          std::string(anchors ? "anchors exact" : "anchors wrong") + ", lr(0.05) = " + fmt("%.15g", mid) +
              ", max log10 deviation " + fmt("%.1e", dev)};
}

// ---------------------------------------------------------------- 6

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

Outcome trends() {
  const auto t0 = Clock::now();
  const fs::path ds = scratch("default_dataset");
  generate_dataset(DatasetConfig{}, ds);
  const double gen_s = seconds_since(t0);

  Dataset data(ds);
  double pos = 0.0, cells = 0.0;
  for (const std::string split : {"train", "val", "test"}) {
    for (const auto& e : data.split(split)) {
      auto g = data.load_labels(e);
      for (float v : g.values) pos += v;
      cells += double(g.values.size());
    }
  }
  const double rate = pos / cells;

  ExperimentConfig base;
  base.dataset = ds.string();
  base.format = ArrayKind::MIC;
  base.model = "b8x2x4.16x2x4.32x1x2-g16";
  base.epochs = 6;
  base.batch = 16;
  base.chunk_hop_s = 2.0;

  FeatureCache cache;
  RunOptions ro;
  ro.features = &cache;
  ro.pretrain_cache = scratch("pretrain");
  std::vector<double> f1_bce, f1_bd, sede_scratch, sede_mono;
  for (int seed = 1; seed <= 5; ++seed) {
    ExperimentConfig c = base;
    c.seed = seed;
    c.loss = LossKind::Bce;
    f1_bce.push_back(train_run(c, ro).test.f1);
    c.loss = LossKind::BceDice;
    auto scratch_run = train_run(c, ro).test;
    f1_bd.push_back(scratch_run.f1);
    sede_scratch.push_back(scratch_run.sede);
    c.transfer = TransferMode::MonoPretrained;
    sede_mono.push_back(train_run(c, ro).test.sede);
    std::cerr << "  seed " << seed << ": F1 bce " << f1_bce.back() << " bce_dice " << f1_bd.back()
              << "; SEDE scratch " << sede_scratch.back() << " mono_pretrained " << sede_mono.back() << " ("
              << fmt("%.0f s", seconds_since(t0)) << ")\n";
  }
  const double secs = seconds_since(t0);
  const double gap_f1 = median(f1_bd) - median(f1_bce);       // want >= 0
  const double gap_sede = median(sede_scratch) - median(sede_mono);  // want >= 0

  Outcome o;
  o.detail = "positive rate " + fmt("%.3f", rate) + "; median F1 bce_dice " + fmt("%.4f", median(f1_bd)) +
             " vs bce " + fmt("%.4f", median(f1_bce)) + "; median SEDE mono_pretrained " +
             fmt("%.4f", median(sede_mono)) + " vs scratch " + fmt("%.4f", median(sede_scratch)) +
             fmt("; %.0f s", secs) + fmt(" (generation %.0f s)", gen_s);
  bool hard_fail = rate > 0.10 || secs > 1800.0;
  for (auto [gap, name] : {std::pair{gap_f1, "F1 ordering"}, std::pair{gap_sede, "SEDE ordering"}}) {
    if (gap >= 0.0) continue;
    if (gap > -0.01)
      o.warning += std::string(o.warning.empty() ? "" : "; ") + name + " short by " + fmt("%.4f", -gap);
    else
      hard_fail = true;
  }
  o.pass = !hard_fail;
  return o;
}

// ---------------------------------------------------------------- 7

int run_cli(const std::string& args) {
  const std::string cmd = std::string(SEDLAB_CLI) + " " + args + " >/dev/null 2>&1";
  const int st = std::system(cmd.c_str());
  return WIFEXITED(st) ? WEXITSTATUS(st) : -1;
}

std::size_t finished_cells(const fs::path& grid) {
  std::size_t n = 0;
  if (!fs::exists(grid / "cells")) return 0;
  for (const auto& d : fs::directory_iterator(grid / "cells")) n += fs::exists(d.path() / "results.csv");
  return n;
}

Outcome determinism() {
  const fs::path root = scratch("determinism");
  fs::create_directories(root);
  const std::string ds = (root / "ds").string();
  if (run_cli("gen --out " + ds + " --n_train 4 --n_val 2 --n_test 2 --n_pretrain 2 --duration_s 8 --seed 7") != 0)
    return {false, "dataset generation failed"};
  const std::string common = " --dataset " + ds + " --model b4x2x4.8x2x2-g8 --epochs 2 --batch 8 --chunk_hop_s 1";
  if (run_cli("train --quiet --out " + (root / "a").string() + common) != 0 ||
      run_cli("train --quiet --out " + (root / "b").string() + common) != 0)
    return {false, "train failed"};
  const bool same_train = slurp(root / "a" / "results.csv") == slurp(root / "b" / "results.csv") &&
                          slurp(root / "a" / "best.ckpt") == slurp(root / "b" / "best.ckpt");

  const std::string grid = "grid --grid loss_transfer --formats mic --seeds 1" + common;
  if (run_cli(grid + " --out " + (root / "full").string()) != 0) return {false, "uninterrupted grid failed"};

  const fs::path killed = root / "killed";
  const pid_t pid = fork();
  if (pid == 0) {
    const std::string out = killed.string();
    if (!std::freopen("/dev/null", "w", stdout) || !std::freopen("/dev/null", "w", stderr)) _exit(126);
    std::vector<std::string> words;
    std::istringstream is(grid + " --out " + out);
    for (std::string w; is >> w;) words.push_back(w);
    std::vector<char*> argv{const_cast<char*>(SEDLAB_CLI)};
    for (auto& w : words) argv.push_back(w.data());
    argv.push_back(nullptr);
    execv(SEDLAB_CLI, argv.data());
    _exit(127);
  }
  // Kill the run partway through its second cell.
  bool killed_mid = false;
  for (int i = 0; i < 6000; ++i) {
    if (finished_cells(killed) >= 1) {
      std::this_thread::sleep_for(std::chrono::milliseconds(150));
      killed_mid = finished_cells(killed) < 6 && !fs::exists(killed / "results.csv");
      kill(pid, SIGKILL);
      break;
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(10));
  }
  int st = 0;
  waitpid(pid, &st, 0);
  const std::size_t before = finished_cells(killed);
  if (run_cli(grid + " --out " + killed.string() + " --resume") != 0) return {false, "resumed grid failed"};
  const bool same_grid = fs::exists(killed / "results.csv") &&
                         slurp(killed / "results.csv") == slurp(root / "full" / "results.csv");
  return {same_train && same_grid && killed_mid,
          std::string("train rows ") + (same_train ? "identical" : "DIFFER") + "; grid killed after " +
              std::to_string(before) + " of 6 cells, resumed table " + (same_grid ? "identical" : "DIFFERS")};
}

// ---------------------------------------------------------------- 8

Outcome augmentation_stats() {
  AugmentConfig cfg;
  const int n = 10000;
  double rates[4] = {0, 0, 0, 0};
  for (int i = 0; i < n; ++i) {
    Rng g = sample_streams(81, static_cast<std::size_t>(i)).gates();
    const Gates gt = draw_gates(cfg, g);
    rates[0] += gt.mixup;
    rates[1] += gt.cutout;
    rates[2] += gt.freq_shift;
    rates[3] += gt.channel_swap;
  }
  const double want[4] = {0.8, 0.5, 0.5, 0.5};
  bool ok = true;
  std::string detail = "rates";
  for (int k = 0; k < 4; ++k) {
    rates[k] /= n;
    ok &= std::abs(rates[k] - want[k]) <= 0.02;
    detail += fmt(" %.4f", rates[k]);
  }

  Sample a, b;
  a.features = FeatureTensor(2, 10, 16);
  b.features = FeatureTensor(2, 10, 16);
  a.labels = LabelGrid(1, 3);
  b.labels = LabelGrid(1, 3);
  Rng rng(82);
  for (auto& v : a.features.values) v = float(uniform01(rng));
  for (auto& v : b.features.values) v = float(uniform01(rng));
  a.labels.values = {1, 0, 0};
  b.labels.values = {0, 1, 1};
  int skipped = 0, total = 0;
  for (int i = 0; i <= 4000; ++i) {
    const double lam = 0.3 + 0.4 * i / 4000.0;
    auto m = mixup_with_weight(a, b, lam, cfg);
    skipped += m.features.values == a.features.values && m.labels.values == a.labels.values;
    ++total;
  }
  const bool outside = mixup_with_weight(a, b, 0.2999, cfg).features.values != a.features.values &&
                       mixup_with_weight(a, b, 0.7001, cfg).features.values != a.features.values;
  ok &= skipped == total && outside;
  detail += "; skip band " + std::to_string(skipped) + "/" + std::to_string(total) + " forced weights unchanged";
  return {ok, detail};
}

// ---------------------------------------------------------------- 9

Outcome overfit() {
  const auto t0 = Clock::now();
  const fs::path ds = scratch("overfit_ds");
  DatasetConfig dc;
  dc.n_train = 1;
  dc.n_val = dc.n_test = dc.n_pretrain = 0;
  dc.seed = 91;
  generate_dataset(dc, ds);
  ExperimentConfig c;
  c.dataset = ds.string();
  c.format = ArrayKind::MIC;
  c.mu = c.co = c.fs = c.cs = false;
  c.epochs = 200;
  c.batch = 1;  // 800 optimizer steps
  c.chunk_hop_s = 4.0;
  c.max_train_chunks = 4;
  RunOptions ro;
  ro.skip_eval = true;
  ro.eval_train_fit = true;
  auto rec = train_run(c, ro);
  const double secs = seconds_since(t0);
  return {rec.train_fit.f1 > 0.95 && secs < 120.0,
          "train F1 " + fmt("%.4f", rec.train_fit.f1) + ", final loss " + fmt("%.4f", rec.epochs.back().train_loss) +
              fmt(" (%.1f s)", secs)};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"gradient check", gradients},        {"metric oracle", metric_oracle},
      {"Dice equals 1 - F1", dice_f1},       {"array model", array_fidelity},
      {"learning-rate schedule", schedule}, {"loss and transfer trends", trends},
      {"determinism and resume", determinism}, {"augmentation statistics", augmentation_stats},
      {"overfit", overfit},
  };
  std::set<int> wanted;
  for (int i = 1; i < argc; ++i) wanted.insert(std::atoi(argv[i]));
  // Also kept in a file, since ctest hides the output of passing tests.
  std::ofstream report("acceptance_report.txt");
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i + 1);
    if (!wanted.empty() && !wanted.count(id)) continue;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failures += !o.pass;
    const std::string line = "criterion " + std::to_string(id) + " " + (o.pass ? "PASS" : "FAIL") + "  " +
                             criteria[i].first + ": " + o.detail +
                             (o.warning.empty() ? "" : "  [soft warning: " + o.warning + "]");
    std::cout << line << std::endl;
    report << line << std::endl;
  }
  return failures == 0 ? 0 : 1;
}
