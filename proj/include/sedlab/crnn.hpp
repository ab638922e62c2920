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

#include "sedlab/tensor.hpp"

namespace sedlab {

struct ConvBlockConfig {
  std::size_t out_channels = 16;
  std::size_t pool_t = 2;
  std::size_t pool_f = 2;
};

struct CrnnConfig {
  std::size_t input_channels = 4;
  std::size_t n_mels = 128;
  std::vector<ConvBlockConfig> conv_blocks = {{16, 2, 2}, {32, 2, 2}, {64, 1, 2}};
  std::size_t gru_units = 32;
  std::size_t n_classes = 12;
  /// Feature frames per 100 ms label frame (80 fps / 10 fps).
  std::size_t frames_per_label = 8;
  double bn_momentum = 0.9;
  double bn_eps = 1e-5;

  std::size_t time_pool() const;
  std::size_t freq_pool() const;
  /// Post-backbone frames averaged into one label frame.
  std::size_t head_group() const;
  void validate() const;
  /// Stable one-line description, e.g. "c4-m128-b16x2x2.32x2x2-g32-l12".
  std::string describe() const;
  static CrnnConfig parse(const std::string& description);
};

/// conv3x3 (no bias) -> batch norm -> ReLU -> average pool.
template <typename T>
class ConvBlock {
 public:
  ConvBlock(std::size_t in_channels, const ConvBlockConfig& cfg, double momentum, double eps,
            const std::string& prefix);

  /// x: B x Cin x T x F. Training mode normalizes with batch statistics and
  /// updates the running statistics.
  Tensor<T> forward(Tensor<T> x, bool training);
  /// Accumulates parameter gradients and returns dL/dx. Valid only after a
  /// training-mode forward.
  Tensor<T> backward(const Tensor<T>& dout);

  std::vector<Param<T>*> params() { return {&weight, &gamma, &beta}; }

  std::size_t in_channels() const { return in_ch_; }
  std::size_t out_channels() const { return cfg_.out_channels; }

  Param<T> weight;  // Cout x Cin x 3 x 3
  Param<T> gamma;
  Param<T> beta;
  Tensor<T> running_mean;
  Tensor<T> running_var;
  /// Test hook: skip normalization entirely (conv -> ReLU -> pool).
  bool bypass_bn = false;

 private:
  std::size_t in_ch_;
  ConvBlockConfig cfg_;
  double momentum_, eps_;
  // Block input and normalized conv output (raw conv output when BN is
  // bypassed), kept for backward.
  Tensor<T> input_, xhat_;
  std::vector<double> inv_std_;
  bool cached_ = false;
};

/// Mean over the remaining frequency bins: B x C x T x F -> B x T x C.
template <typename T>
Tensor<T> freq_pool_forward(const Tensor<T>& x);
template <typename T>
Tensor<T> freq_pool_backward(const Tensor<T>& dseq, const std::vector<std::size_t>& input_shape);

/// Single-layer bidirectional GRU, B x T x D -> B x T x 2H. Gate order in
/// the packed matrices is (reset, update, candidate):
///   r = sig(x Wr + br + h Ur + cr), z = sig(x Wz + bz + h Uz + cz)
///   n = tanh(x Wn + bn + r * (h Un + cn)), h' = (1 - z) * n + z * h
template <typename T>
class BiGru {
 public:
  BiGru(std::size_t input_size, std::size_t hidden, const std::string& prefix);

  Tensor<T> forward(const Tensor<T>& seq);
  Tensor<T> backward(const Tensor<T>& dout);
  std::vector<Param<T>*> params();

  std::size_t hidden() const { return hidden_; }

  struct Direction {
    Param<T> w_x;  // D x 3H
    Param<T> w_h;  // H x 3H
    Param<T> b_x;  // 3H
    Param<T> b_h;  // 3H
    // Per-time caches, indexed by real time: T x B x H.
    std::vector<T> r, z, n, ghn, h_prev;
  };
  Direction fwd, bwd;

 private:
  void run_direction(Direction& d, bool reverse, const Tensor<T>& seq, Tensor<T>& out, std::size_t offset);
  void back_direction(Direction& d, bool reverse, const Tensor<T>& dout, std::size_t offset,
                      Tensor<T>& dseq);

  std::size_t input_size_, hidden_;
  Tensor<T> input_;
};

/// Per-frame affine map and sigmoid, then mean of `group` consecutive frame
/// probabilities: B x T x K -> B x (T / group) x L.
template <typename T>
class Head {
 public:
  Head(std::size_t in_features, std::size_t classes, std::size_t group, const std::string& prefix);

  Tensor<T> forward(const Tensor<T>& seq);
  Tensor<T> backward(const Tensor<T>& dout);
  std::vector<Param<T>*> params() { return {&weight, &bias}; }

  Param<T> weight;  // K x L
  Param<T> bias;    // L

 private:
  std::size_t in_, classes_, group_;
  Tensor<T> input_;
  std::vector<T> probs_;
};

template <typename T>
class Crnn {
 public:
  explicit Crnn(const CrnnConfig& cfg);

  /// x: B x C x T x n_mels -> probabilities B x (T / frames_per_label) x L.
  Tensor<T> forward(const Tensor<T>& x, bool training);
  /// Accumulates into every parameter gradient; returns dL/dx.
  Tensor<T> backward(const Tensor<T>& dprobs);

  /// Kaiming-uniform conv and FC weights, orthogonal GRU recurrent blocks.
  void init(std::uint64_t seed);
  void zero_grad();

  std::vector<Param<T>*> params();
  /// Non-trainable state (BN running statistics), with stable names.
  std::vector<std::pair<std::string, Tensor<T>*>> buffers();

  const CrnnConfig& config() const { return cfg_; }
  std::vector<ConvBlock<T>>& blocks() { return blocks_; }
  BiGru<T>& gru() { return gru_; }
  Head<T>& head() { return head_; }

 private:
  CrnnConfig cfg_;
  std::vector<ConvBlock<T>> blocks_;
  BiGru<T> gru_;
  Head<T> head_;
  std::vector<std::size_t> pooled_shape_;
};

/// Adapts a pretrained first-layer kernel K x Cpre x 3 x 3 to `channels`
/// inputs: input slices are tiled cyclically and scaled by Cpre / channels.
/// Cpre must be 1, 3, or equal to `channels`.
template <typename T>
Tensor<T> replicate_first_layer(const Tensor<T>& weight, std::size_t channels);

/// Copies the convolutional backbone of `src` into `dst`, replicating the
/// first layer when the input channel counts differ. GRU and head are left
/// untouched.
template <typename T>
void transfer_backbone(Crnn<T>& src, Crnn<T>& dst);

/// Copies every parameter and buffer between models of identical config.
template <typename T, typename U>
void copy_weights(Crnn<T>& src, Crnn<U>& dst);

}  // namespace sedlab
