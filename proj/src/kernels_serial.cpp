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

namespace sedlab::kernels::serial {

template <typename T>
void conv3x3_forward(const ConvShape& s, const T* in, const T* weight, T* out) {
  const long H = static_cast<long>(s.height), W = static_cast<long>(s.width);
  for (std::size_t b = 0; b < s.batch; ++b)
    for (std::size_t co = 0; co < s.out_ch; ++co)
      for (long y = 0; y < H; ++y)
        for (long x = 0; x < W; ++x) {
          T acc = 0;
          for (std::size_t ci = 0; ci < s.in_ch; ++ci)
            for (long ky = 0; ky < 3; ++ky)
              for (long kx = 0; kx < 3; ++kx) {
                long iy = y + ky - 1, ix = x + kx - 1;
                if (iy < 0 || iy >= H || ix < 0 || ix >= W) continue;
                acc += weight[((co * s.in_ch + ci) * 3 + static_cast<std::size_t>(ky)) * 3 + static_cast<std::size_t>(kx)] *
                       in[((b * s.in_ch + ci) * static_cast<std::size_t>(H) + static_cast<std::size_t>(iy)) * static_cast<std::size_t>(W) + static_cast<std::size_t>(ix)];
              }
          out[((b * s.out_ch + co) * static_cast<std::size_t>(H) + static_cast<std::size_t>(y)) * static_cast<std::size_t>(W) + static_cast<std::size_t>(x)] = acc;
        }
}

template <typename T>
void conv3x3_backward_input(const ConvShape& s, const T* dout, const T* weight, T* din) {
  const long H = static_cast<long>(s.height), W = static_cast<long>(s.width);
  const std::size_t plane = s.height * s.width;
  for (std::size_t i = 0; i < s.batch * s.in_ch * plane; ++i) din[i] = 0;
  for (std::size_t b = 0; b < s.batch; ++b)
    for (std::size_t co = 0; co < s.out_ch; ++co)
      for (long y = 0; y < H; ++y)
        for (long x = 0; x < W; ++x) {
          T g = dout[(b * s.out_ch + co) * plane + static_cast<std::size_t>(y * W + x)];
          for (std::size_t ci = 0; ci < s.in_ch; ++ci)
            for (long ky = 0; ky < 3; ++ky)
              for (long kx = 0; kx < 3; ++kx) {
                long iy = y + ky - 1, ix = x + kx - 1;
                if (iy < 0 || iy >= H || ix < 0 || ix >= W) continue;
                din[(b * s.in_ch + ci) * plane + static_cast<std::size_t>(iy * W + ix)] +=
                    g * weight[((co * s.in_ch + ci) * 3 + static_cast<std::size_t>(ky)) * 3 + static_cast<std::size_t>(kx)];
              }
        }
}

template <typename T>
void conv3x3_backward_weight(const ConvShape& s, const T* in, const T* dout, T* dweight) {
  const long H = static_cast<long>(s.height), W = static_cast<long>(s.width);
  const std::size_t plane = s.height * s.width;
  for (std::size_t i = 0; i < s.out_ch * s.in_ch * 9; ++i) dweight[i] = 0;
  for (std::size_t b = 0; b < s.batch; ++b)
    for (std::size_t co = 0; co < s.out_ch; ++co)
      for (long y = 0; y < H; ++y)
        for (long x = 0; x < W; ++x) {
          T g = dout[(b * s.out_ch + co) * plane + static_cast<std::size_t>(y * W + x)];
          for (std::size_t ci = 0; ci < s.in_ch; ++ci)
            for (long ky = 0; ky < 3; ++ky)
              for (long kx = 0; kx < 3; ++kx) {
                long iy = y + ky - 1, ix = x + kx - 1;
                if (iy < 0 || iy >= H || ix < 0 || ix >= W) continue;
                dweight[((co * s.in_ch + ci) * 3 + static_cast<std::size_t>(ky)) * 3 + static_cast<std::size_t>(kx)] +=
                    g * in[(b * s.in_ch + ci) * plane + static_cast<std::size_t>(iy * W + ix)];
              }
        }
}

template <typename T>
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c, bool accumulate) {
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      T acc = accumulate ? c[i * n + j] : T(0);
      for (std::size_t p = 0; p < k; ++p) acc += a[i * k + p] * b[p * n + j];
      c[i * n + j] = acc;
    }
}

template <typename T>
void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c, bool accumulate) {
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      T acc = accumulate ? c[i * n + j] : T(0);
      for (std::size_t p = 0; p < k; ++p) acc += a[p * m + i] * b[p * n + j];
      c[i * n + j] = acc;
    }
}

template <typename T>
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c, bool accumulate) {
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      T acc = accumulate ? c[i * n + j] : T(0);
      for (std::size_t p = 0; p < k; ++p) acc += a[i * k + p] * b[j * k + p];
      c[i * n + j] = acc;
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

}  // namespace sedlab::kernels::serial
