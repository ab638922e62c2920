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

#include <cstddef>

// Compute kernels for the CRNN. Each kernel has a plain serial reference
// (namespace serial) and an OpenMP version (namespace omp). The OpenMP
// versions partition work so that every output element is accumulated by
// exactly one thread in a fixed order; results do not depend on the thread
// count. The reference versions are kept for tests and the benchmark.

namespace sedlab::kernels {

/// Dimensions of a 3x3, stride-1, zero-padded convolution.
struct ConvShape {
  std::size_t batch, in_ch, out_ch, height, width;
};

namespace serial {

template <typename T>
void conv3x3_forward(const ConvShape& s, const T* in, const T* weight, T* out);
template <typename T>
void conv3x3_backward_input(const ConvShape& s, const T* dout, const T* weight, T* din);
template <typename T>
void conv3x3_backward_weight(const ConvShape& s, const T* in, const T* dout, T* dweight);

/// C[m x n] (+)= A[m x k] B[k x n]
template <typename T>
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c, bool accumulate);
/// C[m x n] (+)= A[k x m]^T B[k x n]
template <typename T>
void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c, bool accumulate);
/// C[m x n] (+)= A[m x k] B[n x k]^T
template <typename T>
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c, bool accumulate);

}  // namespace serial

namespace omp {

template <typename T>
void conv3x3_forward(const ConvShape& s, const T* in, const T* weight, T* out);
template <typename T>
void conv3x3_backward_input(const ConvShape& s, const T* dout, const T* weight, T* din);
template <typename T>
void conv3x3_backward_weight(const ConvShape& s, const T* in, const T* dout, T* dweight);

template <typename T>
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c, bool accumulate);
template <typename T>
void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c, bool accumulate);
template <typename T>
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c, bool accumulate);

}  // namespace omp

}  // namespace sedlab::kernels
