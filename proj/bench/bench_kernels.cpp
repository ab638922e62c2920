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

// Serial reference kernels against their OpenMP counterparts, plus one
// training step of the default model.

#include <benchmark/benchmark.h>

#include <random>
#include <span>
#include <vector>

#include "sedlab/crnn.hpp"
#include "sedlab/kernels.hpp"
#include "sedlab/losses.hpp"

namespace k = sedlab::kernels;

namespace {

std::vector<float> random_vec(std::size_t n, unsigned seed) {
  std::mt19937 rng(seed);
  std::uniform_real_distribution<float> d(-1.0f, 1.0f);
  std::vector<float> v(n);
  for (auto& x : v) x = d(rng);
  return v;
}

// Second-layer shape of the default model on a batch of 8 chunks.
k::ConvShape conv_shape() { return {8, 16, 32, 160, 64}; }

std::size_t conv_macs(const k::ConvShape& s) { return s.batch * s.in_ch * s.out_ch * s.height * s.width * 9; }

template <bool Omp>
void BM_ConvForward(benchmark::State& state) {
  const auto s = conv_shape();
  auto in = random_vec(s.batch * s.in_ch * s.height * s.width, 1);
  auto w = random_vec(s.out_ch * s.in_ch * 9, 2);
  std::vector<float> out(s.batch * s.out_ch * s.height * s.width);
  for (auto _ : state) {
    if (Omp)
      k::omp::conv3x3_forward(s, in.data(), w.data(), out.data());
    else
      k::serial::conv3x3_forward(s, in.data(), w.data(), out.data());
    benchmark::DoNotOptimize(out.data());
  }
  state.counters["GMAC/s"] =
      benchmark::Counter(static_cast<double>(conv_macs(s)) * state.iterations() / 1e9, benchmark::Counter::kIsRate);
}

template <bool Omp>
void BM_ConvBackwardInput(benchmark::State& state) {
  const auto s = conv_shape();
  auto dout = random_vec(s.batch * s.out_ch * s.height * s.width, 3);
  auto w = random_vec(s.out_ch * s.in_ch * 9, 2);
  std::vector<float> din(s.batch * s.in_ch * s.height * s.width);
  for (auto _ : state) {
    if (Omp)
      k::omp::conv3x3_backward_input(s, dout.data(), w.data(), din.data());
    else
      k::serial::conv3x3_backward_input(s, dout.data(), w.data(), din.data());
    benchmark::DoNotOptimize(din.data());
  }
  state.counters["GMAC/s"] =
      benchmark::Counter(static_cast<double>(conv_macs(s)) * state.iterations() / 1e9, benchmark::Counter::kIsRate);
}

template <bool Omp>
void BM_ConvBackwardWeight(benchmark::State& state) {
  const auto s = conv_shape();
  auto in = random_vec(s.batch * s.in_ch * s.height * s.width, 1);
  auto dout = random_vec(s.batch * s.out_ch * s.height * s.width, 3);
  std::vector<float> dw(s.out_ch * s.in_ch * 9);
  for (auto _ : state) {
    if (Omp)
      k::omp::conv3x3_backward_weight(s, in.data(), dout.data(), dw.data());
    else
      k::serial::conv3x3_backward_weight(s, in.data(), dout.data(), dw.data());
    benchmark::DoNotOptimize(dw.data());
  }
  state.counters["GMAC/s"] =
      benchmark::Counter(static_cast<double>(conv_macs(s)) * state.iterations() / 1e9, benchmark::Counter::kIsRate);
}

enum class Gemm { NN, TN, NT };

template <bool Omp, Gemm G>
void BM_Gemm(benchmark::State& state) {
  // Recurrent input projection: (B*T) x 3H from (B*T) x C.
  const std::size_t m = 8 * 40, n = 96, kk = 64;
  auto a = random_vec(m * kk, 4);
  auto b = random_vec(kk * n, 5);
  std::vector<float> c(m * n);
  for (auto _ : state) {
    switch (G) {
      case Gemm::NN:
        Omp ? k::omp::gemm_nn(m, n, kk, a.data(), b.data(), c.data(), false)
            : k::serial::gemm_nn(m, n, kk, a.data(), b.data(), c.data(), false);
        break;
      case Gemm::TN:
        Omp ? k::omp::gemm_tn(m, n, kk, a.data(), b.data(), c.data(), false)
            : k::serial::gemm_tn(m, n, kk, a.data(), b.data(), c.data(), false);
        break;
      case Gemm::NT:
        Omp ? k::omp::gemm_nt(m, n, kk, a.data(), b.data(), c.data(), false)
            : k::serial::gemm_nt(m, n, kk, a.data(), b.data(), c.data(), false);
        break;
    }
    benchmark::DoNotOptimize(c.data());
  }
}

void BM_TrainStep(benchmark::State& state) {
  sedlab::CrnnConfig cfg = sedlab::CrnnConfig::parse("c4-m128-b16x2x2.32x2x2.64x1x2-g32-l12-f8");
  sedlab::Crnn<float> model(cfg);
  model.init(7);
  const std::size_t batch = static_cast<std::size_t>(state.range(0));
  const std::size_t frames = 320;
  sedlab::Tensor<float> x({batch, 4, frames, 128});
  auto xv = random_vec(x.size(), 8);
  x.data = xv;
  std::vector<float> target(batch * 40 * 12, 0.0f);
  for (std::size_t i = 0; i < target.size(); i += 7) target[i] = 1.0f;
  for (auto _ : state) {
    auto pred = model.forward(x, true);
    std::span<const float> p(pred.ptr(), pred.size());
    auto lg = sedlab::compute_loss<float>(sedlab::LossKind::BceDice, p, std::span<const float>(target), batch, {});
    model.zero_grad();
    sedlab::Tensor<float> dprobs(pred.shape);
    std::copy(lg.grad.begin(), lg.grad.end(), dprobs.data.begin());
    model.backward(dprobs);
    benchmark::DoNotOptimize(lg.value);
  }
}

}  // namespace

BENCHMARK(BM_ConvForward<false>)->Name("conv_forward/serial")->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ConvForward<true>)->Name("conv_forward/omp")->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ConvBackwardInput<false>)->Name("conv_backward_input/serial")->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ConvBackwardInput<true>)->Name("conv_backward_input/omp")->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ConvBackwardWeight<false>)->Name("conv_backward_weight/serial")->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ConvBackwardWeight<true>)->Name("conv_backward_weight/omp")->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Gemm<false, Gemm::NN>)->Name("gemm_nn/serial")->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_Gemm<true, Gemm::NN>)->Name("gemm_nn/omp")->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_Gemm<false, Gemm::TN>)->Name("gemm_tn/serial")->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_Gemm<true, Gemm::TN>)->Name("gemm_tn/omp")->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_Gemm<false, Gemm::NT>)->Name("gemm_nt/serial")->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_Gemm<true, Gemm::NT>)->Name("gemm_nt/omp")->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_TrainStep)->Name("train_step/default_model")->Arg(8)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
