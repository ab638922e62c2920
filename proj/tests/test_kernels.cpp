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

#include <cmath>
#include <random>
#include <vector>

#include "sedlab/kernels.hpp"

namespace k = sedlab::kernels;

namespace {

template <typename T>
std::vector<T> random_vec(std::size_t n, unsigned seed) {
  std::mt19937 rng(seed);
  std::uniform_real_distribution<double> d(-1.0, 1.0);
  std::vector<T> v(n);
  for (auto& x : v) x = static_cast<T>(d(rng));
  return v;
}

template <typename T>
double max_diff(const std::vector<T>& a, const std::vector<T>& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(double(a[i]) - double(b[i])));
  return m;
}

// Direct 3x3 zero-padded convolution, one output at a time.
double conv_at(const k::ConvShape& s, const std::vector<double>& in, const std::vector<double>& w, std::size_t b,
               std::size_t co, std::size_t y, std::size_t x) {
  double acc = 0.0;
  for (std::size_t ci = 0; ci < s.in_ch; ++ci)
    for (int dy = -1; dy <= 1; ++dy)
      for (int dx = -1; dx <= 1; ++dx) {
        long yy = long(y) + dy, xx = long(x) + dx;
        if (yy < 0 || xx < 0 || yy >= long(s.height) || xx >= long(s.width)) continue;
        acc += in[((b * s.in_ch + ci) * s.height + yy) * s.width + xx] *
               w[(co * s.in_ch + ci) * 9 + (dy + 1) * 3 + (dx + 1)];
      }
  return acc;
}

}  // namespace

TEST_CASE("serial convolution matches the direct formula") {
  k::ConvShape s{2, 3, 5, 7, 9};
  auto in = random_vec<double>(s.batch * s.in_ch * s.height * s.width, 1);
  auto w = random_vec<double>(s.out_ch * s.in_ch * 9, 2);
  std::vector<double> out(s.batch * s.out_ch * s.height * s.width);
  k::serial::conv3x3_forward(s, in.data(), w.data(), out.data());
  for (std::size_t b = 0; b < 2; ++b)
    for (std::size_t co = 0; co < 5; ++co)
      for (std::size_t y = 0; y < 7; ++y)
        for (std::size_t x = 0; x < 9; ++x)
          CHECK(out[((b * 5 + co) * 7 + y) * 9 + x] == doctest::Approx(conv_at(s, in, w, b, co, y, x)).epsilon(1e-12));
}

TEST_CASE_TEMPLATE("OpenMP convolution kernels match the serial reference", T, float, double) {
  const double tol = sizeof(T) == 4 ? 1e-4 : 1e-11;
  for (k::ConvShape s : {k::ConvShape{1, 1, 1, 1, 1}, k::ConvShape{2, 3, 5, 7, 9}, k::ConvShape{3, 4, 9, 16, 33},
                         k::ConvShape{2, 16, 8, 10, 40}}) {
    auto in = random_vec<T>(s.batch * s.in_ch * s.height * s.width, 3);
    auto w = random_vec<T>(s.out_ch * s.in_ch * 9, 4);
    auto dout = random_vec<T>(s.batch * s.out_ch * s.height * s.width, 5);
    std::vector<T> a(dout.size()), b(dout.size());
    k::serial::conv3x3_forward(s, in.data(), w.data(), a.data());
    k::omp::conv3x3_forward(s, in.data(), w.data(), b.data());
    CHECK(max_diff(a, b) < tol);

    std::vector<T> da(in.size()), db(in.size());
    k::serial::conv3x3_backward_input(s, dout.data(), w.data(), da.data());
    k::omp::conv3x3_backward_input(s, dout.data(), w.data(), db.data());
    CHECK(max_diff(da, db) < tol);

    std::vector<T> wa(w.size()), wb(w.size());
    k::serial::conv3x3_backward_weight(s, in.data(), dout.data(), wa.data());
    k::omp::conv3x3_backward_weight(s, in.data(), dout.data(), wb.data());
    CHECK(max_diff(wa, wb) < tol * 10);
  }
}

TEST_CASE("convolution backward passes are adjoint to the forward pass") {
  // <conv(x, w), g> = <x, dX(g, w)> = <w, dW(x, g)>
  k::ConvShape s{2, 3, 4, 6, 5};
  auto x = random_vec<double>(s.batch * s.in_ch * s.height * s.width, 6);
  auto w = random_vec<double>(s.out_ch * s.in_ch * 9, 7);
  auto g = random_vec<double>(s.batch * s.out_ch * s.height * s.width, 8);
  std::vector<double> y(g.size()), dx(x.size()), dw(w.size());
  k::omp::conv3x3_forward(s, x.data(), w.data(), y.data());
  k::omp::conv3x3_backward_input(s, g.data(), w.data(), dx.data());
  k::omp::conv3x3_backward_weight(s, x.data(), g.data(), dw.data());
  double lhs = 0, r1 = 0, r2 = 0;
  for (std::size_t i = 0; i < y.size(); ++i) lhs += y[i] * g[i];
  for (std::size_t i = 0; i < x.size(); ++i) r1 += x[i] * dx[i];
  for (std::size_t i = 0; i < w.size(); ++i) r2 += w[i] * dw[i];
  CHECK(r1 == doctest::Approx(lhs).epsilon(1e-12));
  CHECK(r2 == doctest::Approx(lhs).epsilon(1e-12));
}

TEST_CASE_TEMPLATE("OpenMP GEMMs match the serial reference", T, float, double) {
  const double tol = sizeof(T) == 4 ? 1e-4 : 1e-12;
  const std::size_t dims[][3] = {{1, 1, 1}, {7, 5, 3}, {33, 96, 64}, {128, 17, 40}};
  for (const auto& d : dims) {
    const std::size_t m = d[0], n = d[1], kk = d[2];
    auto a = random_vec<T>(m * kk, 9);
    auto b = random_vec<T>(kk * n, 10);
    auto c0 = random_vec<T>(m * n, 11);
    for (bool acc : {false, true}) {
      std::vector<T> cs = c0, co = c0;
      k::serial::gemm_nn(m, n, kk, a.data(), b.data(), cs.data(), acc);
      k::omp::gemm_nn(m, n, kk, a.data(), b.data(), co.data(), acc);
      CHECK(max_diff(cs, co) < tol);
      cs = c0;
      co = c0;
      k::serial::gemm_tn(m, n, kk, a.data(), b.data(), cs.data(), acc);  // a read as kk x m
      k::omp::gemm_tn(m, n, kk, a.data(), b.data(), co.data(), acc);
      CHECK(max_diff(cs, co) < tol);
      cs = c0;
      co = c0;
      k::serial::gemm_nt(m, n, kk, a.data(), b.data(), cs.data(), acc);  // b read as n x kk
      k::omp::gemm_nt(m, n, kk, a.data(), b.data(), co.data(), acc);
      CHECK(max_diff(cs, co) < tol);
    }
  }
}

TEST_CASE("serial gemm_nn matches the textbook triple loop") {
  const std::size_t m = 4, n = 3, kk = 5;
  auto a = random_vec<double>(m * kk, 12);
  auto b = random_vec<double>(kk * n, 13);
  std::vector<double> c(m * n);
  k::serial::gemm_nn(m, n, kk, a.data(), b.data(), c.data(), false);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0;
      for (std::size_t p = 0; p < kk; ++p) s += a[i * kk + p] * b[p * n + j];
      CHECK(c[i * n + j] == doctest::Approx(s));
    }
}
