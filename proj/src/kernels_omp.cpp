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

#include "sedlab/kernels.hpp"

#include <algorithm>
#include <vector>

namespace sedlab::kernels::omp {

namespace {

// row[x] += k[0] * src[x - 1] + k[1] * src[x] + k[2] * src[x + 1], zero-padded.
template <typename T>
inline void row_conv3(T* __restrict row, const T* __restrict src, const T k0, const T k1, const T k2,
                      long W) {
  if (W == 1) {
    row[0] += k1 * src[0];
    return;
  }
  row[0] += k1 * src[0] + k2 * src[1];
#pragma omp simd
  for (long x = 1; x < W - 1; ++x) row[x] += k0 * src[x - 1] + k1 * src[x] + k2 * src[x + 1];
  row[W - 1] += k0 * src[W - 2] + k1 * src[W - 1];
}


// Copies B x C x H x W into a zero-bordered B x C x (H + 2) x (W + 2) buffer.
template <typename T>
std::vector<T> pad_planes(const T* in, std::size_t planes, long H, long W) {
  const long Wp = W + 2, Hp = H + 2;
  std::vector<T> out(planes * static_cast<std::size_t>(Hp * Wp), T(0));
  const long P = static_cast<long>(planes);
#pragma omp parallel for schedule(static)
  for (long p = 0; p < P; ++p)
    for (long y = 0; y < H; ++y)
      std::copy(in + (p * H + y) * W, in + (p * H + y + 1) * W, out.data() + (p * Hp + y + 1) * Wp + 1);
  return out;
}

// Accumulates NB output planes at once so each padded input row is loaded
// once per block rather than once per output channel.
template <typename T, int NB>
void conv_block_rows(const T* pin, std::size_t in_ch, long H, long W, const T* weight, std::size_t co0,
                     T* out, std::size_t plane) {
  const long Wp = W + 2;
  const std::size_t pplane = static_cast<std::size_t>((H + 2) * Wp);
  for (long y = 0; y < H; ++y) {
    T* orow[NB];
    for (int j = 0; j < NB; ++j) {
      orow[j] = out + (co0 + j) * plane + static_cast<std::size_t>(y * W);
      std::fill(orow[j], orow[j] + W, T(0));
    }
    for (std::size_t ci = 0; ci < in_ch; ++ci) {
      for (long ky = 0; ky < 3; ++ky) {
        const T* __restrict src = pin + ci * pplane + static_cast<std::size_t>((y + ky) * Wp);
        T k[NB][3];
        for (int j = 0; j < NB; ++j)
          for (int kx = 0; kx < 3; ++kx) k[j][kx] = weight[((co0 + j) * in_ch + ci) * 9 + ky * 3 + kx];
        for (int j = 0; j < NB; ++j) {
          T* __restrict o = orow[j];
          const T k0 = k[j][0], k1 = k[j][1], k2 = k[j][2];
#pragma omp simd
          for (long x = 0; x < W; ++x) o[x] += k0 * src[x] + k1 * src[x + 1] + k2 * src[x + 2];
        }
      }
    }
  }
}

}  // namespace

template <typename T>
void conv3x3_forward(const ConvShape& s, const T* in, const T* weight, T* out) {
  const long H = static_cast<long>(s.height), W = static_cast<long>(s.width);
  const std::size_t plane = s.height * s.width;
  const std::size_t pplane = static_cast<std::size_t>((H + 2) * (W + 2));
  const std::vector<T> padded = pad_planes(in, s.batch * s.in_ch, H, W);
  constexpr std::size_t kBlock = 4;
  const long B = static_cast<long>(s.batch);
  const long NB = static_cast<long>((s.out_ch + kBlock - 1) / kBlock);
#pragma omp parallel for collapse(2) schedule(static)
  for (long b = 0; b < B; ++b)
    for (long blk = 0; blk < NB; ++blk) {
      const T* pin = padded.data() + static_cast<std::size_t>(b) * s.in_ch * pplane;
      T* o = out + static_cast<std::size_t>(b) * s.out_ch * plane;
      std::size_t co0 = static_cast<std::size_t>(blk) * kBlock;
      const std::size_t n = std::min(kBlock, s.out_ch - co0);
      if (n == kBlock) {
        conv_block_rows<T, 4>(pin, s.in_ch, H, W, weight, co0, o, plane);
      } else {
        for (std::size_t j = 0; j < n; ++j) conv_block_rows<T, 1>(pin, s.in_ch, H, W, weight, co0 + j, o, plane);
      }
    }
}

template <typename T>
void conv3x3_backward_input(const ConvShape& s, const T* dout, const T* weight, T* din) {
  // The input gradient is a forward convolution of dout with the kernel
  // transposed in channels and rotated by 180 degrees.
  std::vector<T> rotated(s.out_ch * s.in_ch * 9);
  for (std::size_t co = 0; co < s.out_ch; ++co)
    for (std::size_t ci = 0; ci < s.in_ch; ++ci)
      for (std::size_t k = 0; k < 9; ++k) rotated[(ci * s.out_ch + co) * 9 + k] = weight[(co * s.in_ch + ci) * 9 + 8 - k];
  conv3x3_forward<T>({s.batch, s.out_ch, s.in_ch, s.height, s.width}, dout, rotated.data(), din);
}

template <typename T>
void conv3x3_backward_weight(const ConvShape& s, const T* in, const T* dout, T* dweight) {
  const long H = static_cast<long>(s.height), W = static_cast<long>(s.width);
  const std::size_t plane = s.height * s.width;
  const long Co = static_cast<long>(s.out_ch), Ci = static_cast<long>(s.in_ch);
#pragma omp parallel
  {
    // Nine lane-wise partial sums, one per tap, reduced at the end.
    std::vector<T> acc(9 * static_cast<std::size_t>(W));
#pragma omp for collapse(2) schedule(static)
    for (long co = 0; co < Co; ++co)
      for (long ci = 0; ci < Ci; ++ci) {
        std::fill(acc.begin(), acc.end(), T(0));
        for (std::size_t b = 0; b < s.batch; ++b) {
          const T* gp = dout + (b * s.out_ch + static_cast<std::size_t>(co)) * plane;
          const T* ip = in + (b * s.in_ch + static_cast<std::size_t>(ci)) * plane;
          for (long y = 0; y < H; ++y) {
            const T* __restrict grow = gp + y * W;
            for (long ky = 0; ky < 3; ++ky) {
              const long iy = y + ky - 1;
              if (iy < 0 || iy >= H) continue;
              const T* __restrict irow = ip + iy * W;
              T* __restrict a0 = acc.data() + (ky * 3) * W;
              T* __restrict a1 = a0 + W;
              T* __restrict a2 = a1 + W;
#pragma omp simd
              for (long x = 1; x < W; ++x) a0[x] += grow[x] * irow[x - 1];
#pragma omp simd
              for (long x = 0; x < W; ++x) a1[x] += grow[x] * irow[x];
#pragma omp simd
              for (long x = 0; x < W - 1; ++x) a2[x] += grow[x] * irow[x + 1];
            }
          }
        }
        T* dw = dweight + (static_cast<std::size_t>(co) * s.in_ch + static_cast<std::size_t>(ci)) * 9;
        for (int k = 0; k < 9; ++k) {
          double sum = 0.0;
          for (long x = 0; x < W; ++x) sum += acc[k * W + x];
          dw[k] = static_cast<T>(sum);
        }
      }
  }
}

template <typename T>
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c, bool accumulate) {
  const long M = static_cast<long>(m);
#pragma omp parallel for schedule(static)
  for (long i = 0; i < M; ++i) {
    T* crow = c + static_cast<std::size_t>(i) * n;
    if (!accumulate) std::fill(crow, crow + n, T(0));
    const T* arow = a + static_cast<std::size_t>(i) * k;
    for (std::size_t p = 0; p < k; ++p) {
      const T av = arow[p];
      const T* brow = b + p * n;
#pragma omp simd
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

template <typename T>
void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c, bool accumulate) {
  const long M = static_cast<long>(m);
#pragma omp parallel for schedule(static)
  for (long i = 0; i < M; ++i) {
    T* crow = c + static_cast<std::size_t>(i) * n;
    if (!accumulate) std::fill(crow, crow + n, T(0));
    for (std::size_t p = 0; p < k; ++p) {
      const T av = a[p * m + static_cast<std::size_t>(i)];
      const T* brow = b + p * n;
#pragma omp simd
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

template <typename T>
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c, bool accumulate) {
  const long M = static_cast<long>(m);
#pragma omp parallel for schedule(static)
  for (long i = 0; i < M; ++i) {
    const T* arow = a + static_cast<std::size_t>(i) * k;
    for (std::size_t j = 0; j < n; ++j) {
      const T* brow = b + j * k;
      T s = 0;
#pragma omp simd reduction(+ : s)
      for (std::size_t p = 0; p < k; ++p) s += arow[p] * brow[p];
      c[static_cast<std::size_t>(i) * n + j] = accumulate ? c[static_cast<std::size_t>(i) * n + j] + s : s;
    }
  }
}

#define SEDLAB_INSTANTIATE(T)                                                                     \
  template void conv3x3_forward<T>(const ConvShape&, const T*, const T*, T*);                     \
  template void conv3x3_backward_input<T>(const ConvShape&, const T*, const T*, T*);              \
  template void conv3x3_backward_weight<T>(const ConvShape&, const T*, const T*, T*);             \
  template void gemm_nn<T>(std::size_t, std::size_t, std::size_t, const T*, const T*, T*, bool); \
  template void gemm_tn<T>(std::size_t, std::size_t, std::size_t, const T*, const T*, T*, bool); \
  template void gemm_nt<T>(std::size_t, std::size_t, std::size_t, const T*, const T*, T*, bool);

SEDLAB_INSTANTIATE(float)
SEDLAB_INSTANTIATE(double)

#undef SEDLAB_INSTANTIATE

}  // namespace sedlab::kernels::omp
