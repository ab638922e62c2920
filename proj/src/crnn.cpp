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

#include "sedlab/crnn.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>
#include <stdexcept>
#include <utility>

#include "sedlab/common.hpp"
#include "sedlab/kernels.hpp"

namespace sedlab {

namespace kn = kernels::omp;

// ---------------------------------------------------------------- config

std::size_t CrnnConfig::time_pool() const {
  std::size_t p = 1;
  for (const auto& b : conv_blocks) p *= b.pool_t;
  return p;
}

std::size_t CrnnConfig::freq_pool() const {
  std::size_t p = 1;
  for (const auto& b : conv_blocks) p *= b.pool_f;
  return p;
}

std::size_t CrnnConfig::head_group() const { return frames_per_label / time_pool(); }

void CrnnConfig::validate() const {
  if (input_channels == 0 || n_mels == 0 || gru_units == 0 || n_classes == 0) {
    throw std::invalid_argument("CrnnConfig: sizes must be positive");
  }
  for (const auto& b : conv_blocks) {
    if (b.out_channels == 0 || b.pool_t == 0 || b.pool_f == 0) {
      throw std::invalid_argument("CrnnConfig: conv block sizes must be positive");
    }
  }
  if (frames_per_label % time_pool() != 0) {
    throw std::invalid_argument("CrnnConfig: cumulative time pooling must divide the " +
                                std::to_string(frames_per_label) + " feature frames per label frame");
  }
  if (n_mels % freq_pool() != 0) {
    throw std::invalid_argument("CrnnConfig: cumulative frequency pooling must divide n_mels");
  }
}

std::string CrnnConfig::describe() const {
  std::ostringstream os;
  os << 'c' << input_channels << "-m" << n_mels << "-b";
  for (std::size_t i = 0; i < conv_blocks.size(); ++i) {
    if (i) os << '.';
    os << conv_blocks[i].out_channels << 'x' << conv_blocks[i].pool_t << 'x' << conv_blocks[i].pool_f;
  }
  os << "-g" << gru_units << "-l" << n_classes << "-f" << frames_per_label;
  return os.str();
}

CrnnConfig CrnnConfig::parse(const std::string& d) {
  CrnnConfig cfg;
  std::stringstream ss(d);
  std::string part;
  while (std::getline(ss, part, '-')) {
    if (part.size() < 2) throw std::invalid_argument("bad model description '" + d + "'");
    const std::string body = part.substr(1);
    switch (part[0]) {
      case 'c':
        cfg.input_channels = std::stoul(body);
        break;
      case 'm':
        cfg.n_mels = std::stoul(body);
        break;
      case 'g':
        cfg.gru_units = std::stoul(body);
        break;
      case 'l':
        cfg.n_classes = std::stoul(body);
        break;
      case 'f':
        cfg.frames_per_label = std::stoul(body);
        break;
      case 'b': {
        cfg.conv_blocks.clear();
        std::stringstream bs(body);
        std::string blk;
        while (std::getline(bs, blk, '.')) {
          ConvBlockConfig b;
          char x1 = 0, x2 = 0;
          std::stringstream one(blk);
          if (!(one >> b.out_channels >> x1 >> b.pool_t >> x2 >> b.pool_f) || x1 != 'x' || x2 != 'x') {
            throw std::invalid_argument("bad conv block '" + blk + "'");
          }
          cfg.conv_blocks.push_back(b);
        }
        break;
      }
      default:
        throw std::invalid_argument("bad model description '" + d + "'");
    }
  }
  cfg.validate();
  return cfg;
}

// ---------------------------------------------------------------- conv block

template <typename T>
ConvBlock<T>::ConvBlock(std::size_t in_channels, const ConvBlockConfig& cfg, double momentum,
                        double eps, const std::string& prefix)
    : weight(prefix + ".weight", {cfg.out_channels, in_channels, 3, 3}),
      gamma(prefix + ".bn_gamma", {cfg.out_channels}),
      beta(prefix + ".bn_beta", {cfg.out_channels}),
      running_mean({cfg.out_channels}, T(0)),
      running_var({cfg.out_channels}, T(1)),
      in_ch_(in_channels),
      cfg_(cfg),
      momentum_(momentum),
      eps_(eps) {
  std::fill(gamma.value.data.begin(), gamma.value.data.end(), T(1));
}

template <typename T>
Tensor<T> ConvBlock<T>::forward(Tensor<T> x, bool training) {
  if (x.shape.size() != 4 || x.dim(1) != in_ch_) {
    throw std::invalid_argument("ConvBlock: expected B x " + std::to_string(in_ch_) +
                                " x T x F input, got " + shape_string(x.shape));
  }
  const std::size_t B = x.dim(0), C = cfg_.out_channels, H = x.dim(2), W = x.dim(3);
  const std::size_t pt = cfg_.pool_t, pf = cfg_.pool_f;
  if (H % pt != 0 || W % pf != 0) {
    throw std::invalid_argument("ConvBlock: pooling " + std::to_string(pt) + "x" + std::to_string(pf) +
                                " does not divide input " + shape_string(x.shape));
  }
  const std::size_t plane = H * W;
  Tensor<T> conv({B, C, H, W});
  kn::conv3x3_forward<T>({B, in_ch_, C, H, W}, x.ptr(), weight.value.ptr(), conv.ptr());

  // Per-channel affine map applied before the ReLU; `conv` becomes xhat in
  // training mode.
  std::vector<T> scale(C, T(1)), shift(C, T(0));
  if (!bypass_bn && training) {
    inv_std_.assign(C, 0.0);
    const double m = static_cast<double>(B * plane);
    for (std::size_t c = 0; c < C; ++c) {
      double sum = 0.0, sq = 0.0;
      for (std::size_t b = 0; b < B; ++b) {
        const T* p = conv.ptr() + (b * C + c) * plane;
        for (std::size_t i = 0; i < plane; ++i) sum += p[i];
      }
      const double mean = sum / m;
      for (std::size_t b = 0; b < B; ++b) {
        const T* p = conv.ptr() + (b * C + c) * plane;
        for (std::size_t i = 0; i < plane; ++i) sq += (p[i] - mean) * (p[i] - mean);
      }
      const double var = sq / m;
      const double inv = 1.0 / std::sqrt(var + eps_);
      inv_std_[c] = inv;
      const T tm = static_cast<T>(mean), ti = static_cast<T>(inv);
      for (std::size_t b = 0; b < B; ++b) {
        T* p = conv.ptr() + (b * C + c) * plane;
        for (std::size_t i = 0; i < plane; ++i) p[i] = (p[i] - tm) * ti;
      }
      scale[c] = gamma.value.data[c];
      shift[c] = beta.value.data[c];
      running_mean.data[c] = static_cast<T>(momentum_ * running_mean.data[c] + (1.0 - momentum_) * mean);
      running_var.data[c] = static_cast<T>(momentum_ * running_var.data[c] + (1.0 - momentum_) * var);
    }
  } else if (!bypass_bn) {
    for (std::size_t c = 0; c < C; ++c) {
      const double inv = 1.0 / std::sqrt(static_cast<double>(running_var.data[c]) + eps_);
      scale[c] = static_cast<T>(gamma.value.data[c] * inv);
      shift[c] = static_cast<T>(beta.value.data[c] - running_mean.data[c] * gamma.value.data[c] * inv);
    }
  }

  const std::size_t Ho = H / pt, Wo = W / pf;
  Tensor<T> out({B, C, Ho, Wo});
  const T inv_area = T(1) / static_cast<T>(pt * pf);
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t c = 0; c < C; ++c) {
      const std::size_t bc = b * C + c;
      const T* p = conv.ptr() + bc * plane;
      T* o = out.ptr() + bc * Ho * Wo;
      const T sc = scale[c], sh = shift[c];
      for (std::size_t y = 0; y < H; ++y) {
        T* orow = o + (y / pt) * Wo;
        const T* prow = p + y * W;
        if (pf == 1) {
          for (std::size_t xx = 0; xx < W; ++xx) orow[xx] += std::max(sc * prow[xx] + sh, T(0));
        } else {
          for (std::size_t xx = 0; xx < W; ++xx) orow[xx / pf] += std::max(sc * prow[xx] + sh, T(0));
        }
      }
      for (std::size_t i = 0; i < Ho * Wo; ++i) o[i] *= inv_area;
    }

  if (training) {
    input_ = std::move(x);
    xhat_ = std::move(conv);
    cached_ = true;
  } else {
    cached_ = false;
  }
  return out;
}

template <typename T>
Tensor<T> ConvBlock<T>::backward(const Tensor<T>& dout) {
  if (!cached_) throw std::logic_error("ConvBlock::backward without a training-mode forward");
  const std::size_t B = input_.dim(0), C = cfg_.out_channels, H = input_.dim(2), W = input_.dim(3);
  const std::size_t pt = cfg_.pool_t, pf = cfg_.pool_f, Ho = H / pt, Wo = W / pf;
  require_shape(dout, {B, C, Ho, Wo}, "ConvBlock::backward");
  const std::size_t plane = H * W;
  const T inv_area = T(1) / static_cast<T>(pt * pf);

  // Through the pool and ReLU; the pre-activation is g * xhat + b.
  Tensor<T> grad({B, C, H, W});
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t c = 0; c < C; ++c) {
      const std::size_t bc = b * C + c;
      const T sc = bypass_bn ? T(1) : gamma.value.data[c];
      const T sh = bypass_bn ? T(0) : beta.value.data[c];
      const T* g = dout.ptr() + bc * Ho * Wo;
      const T* p = xhat_.ptr() + bc * plane;
      T* d = grad.ptr() + bc * plane;
      for (std::size_t y = 0; y < H; ++y) {
        const T* grow = g + (y / pt) * Wo;
        for (std::size_t xx = 0; xx < W; ++xx) {
          const std::size_t i = y * W + xx;
          d[i] = sc * p[i] + sh > T(0) ? grow[xx / pf] * inv_area : T(0);
        }
      }
    }

  if (!bypass_bn) {
    // Batch-norm backward, in place.
    const double m = static_cast<double>(B * plane);
    for (std::size_t c = 0; c < C; ++c) {
      double sum_dy = 0.0, sum_dy_xhat = 0.0;
      for (std::size_t b = 0; b < B; ++b) {
        const std::size_t off = (b * C + c) * plane;
        for (std::size_t i = 0; i < plane; ++i) {
          sum_dy += grad.data[off + i];
          sum_dy_xhat += grad.data[off + i] * xhat_.data[off + i];
        }
      }
      gamma.grad.data[c] += static_cast<T>(sum_dy_xhat);
      beta.grad.data[c] += static_cast<T>(sum_dy);
      const double k = gamma.value.data[c] * inv_std_[c] / m;
      const T a = static_cast<T>(k * m), bconst = static_cast<T>(-k * sum_dy), cconst = static_cast<T>(-k * sum_dy_xhat);
      for (std::size_t b = 0; b < B; ++b) {
        const std::size_t off = (b * C + c) * plane;
        T* d = grad.ptr() + off;
        const T* xh = xhat_.ptr() + off;
        for (std::size_t i = 0; i < plane; ++i) d[i] = a * d[i] + bconst + cconst * xh[i];
      }
    }
  }

  const kernels::ConvShape cs{B, in_ch_, C, H, W};
  Tensor<T> dw(weight.value.shape);
  kn::conv3x3_backward_weight<T>(cs, input_.ptr(), grad.ptr(), dw.ptr());
  for (std::size_t i = 0; i < dw.size(); ++i) weight.grad.data[i] += dw.data[i];
  Tensor<T> dx(input_.shape);
  kn::conv3x3_backward_input<T>(cs, grad.ptr(), weight.value.ptr(), dx.ptr());
  return dx;
}

// ---------------------------------------------------------------- freq pool

template <typename T>
Tensor<T> freq_pool_forward(const Tensor<T>& x) {
  if (x.shape.size() != 4) throw std::invalid_argument("freq_pool: expected a 4-D tensor");
  const std::size_t B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  Tensor<T> seq({B, H, C});
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t t = 0; t < H; ++t) {
        const T* row = x.ptr() + ((b * C + c) * H + t) * W;
        T acc = 0;
        for (std::size_t f = 0; f < W; ++f) acc += row[f];
        seq.data[(b * H + t) * C + c] = acc / static_cast<T>(W);
      }
  return seq;
}

template <typename T>
Tensor<T> freq_pool_backward(const Tensor<T>& dseq, const std::vector<std::size_t>& shape) {
  const std::size_t B = shape[0], C = shape[1], H = shape[2], W = shape[3];
  require_shape(dseq, {B, H, C}, "freq_pool_backward");
  Tensor<T> dx(shape);
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t t = 0; t < H; ++t) {
        T g = dseq.data[(b * H + t) * C + c] / static_cast<T>(W);
        T* row = dx.ptr() + ((b * C + c) * H + t) * W;
        for (std::size_t f = 0; f < W; ++f) row[f] = g;
      }
  return dx;
}

// ---------------------------------------------------------------- BiGRU

namespace {

template <typename T>
inline T sigmoid(T x) {
  return T(1) / (T(1) + std::exp(-x));
}

template <typename T>
typename BiGru<T>::Direction make_direction(std::size_t d, std::size_t h, const std::string& prefix) {
  typename BiGru<T>::Direction dir;
  dir.w_x = Param<T>(prefix + ".w_x", {d, 3 * h});
  dir.w_h = Param<T>(prefix + ".w_h", {h, 3 * h});
  dir.b_x = Param<T>(prefix + ".b_x", {3 * h});
  dir.b_h = Param<T>(prefix + ".b_h", {3 * h});
  return dir;
}

}  // namespace

template <typename T>
BiGru<T>::BiGru(std::size_t input_size, std::size_t hidden, const std::string& prefix)
    : fwd(make_direction<T>(input_size, hidden, prefix + ".fwd")),
      bwd(make_direction<T>(input_size, hidden, prefix + ".bwd")),
      input_size_(input_size),
      hidden_(hidden) {}

template <typename T>
std::vector<Param<T>*> BiGru<T>::params() {
  return {&fwd.w_x, &fwd.w_h, &fwd.b_x, &fwd.b_h, &bwd.w_x, &bwd.w_h, &bwd.b_x, &bwd.b_h};
}

template <typename T>
void BiGru<T>::run_direction(Direction& d, bool reverse, const Tensor<T>& seq, Tensor<T>& out,
                             std::size_t offset) {
  const std::size_t B = seq.dim(0), Tn = seq.dim(1), D = seq.dim(2), H = hidden_, G = 3 * H;
  std::vector<T> gx(B * Tn * G);
  kn::gemm_nn<T>(B * Tn, G, D, seq.ptr(), d.w_x.value.ptr(), gx.data(), false);
  d.r.assign(Tn * B * H, T(0));
  d.z.assign(Tn * B * H, T(0));
  d.n.assign(Tn * B * H, T(0));
  d.ghn.assign(Tn * B * H, T(0));
  d.h_prev.assign(Tn * B * H, T(0));
  std::vector<T> h(B * H, T(0)), gh(B * G);
  const T* bx = d.b_x.value.ptr();
  const T* bh = d.b_h.value.ptr();
  for (std::size_t s = 0; s < Tn; ++s) {
    const std::size_t t = reverse ? Tn - 1 - s : s;
    kn::gemm_nn<T>(B, G, H, h.data(), d.w_h.value.ptr(), gh.data(), false);
    for (std::size_t b = 0; b < B; ++b) {
      const T* gxr = gx.data() + (b * Tn + t) * G;
      const T* ghr = gh.data() + b * G;
      const std::size_t c = (t * B + b) * H;
      for (std::size_t j = 0; j < H; ++j) {
        T r = sigmoid(gxr[j] + bx[j] + ghr[j] + bh[j]);
        T z = sigmoid(gxr[H + j] + bx[H + j] + ghr[H + j] + bh[H + j]);
        T hn = ghr[2 * H + j] + bh[2 * H + j];
        T n = std::tanh(gxr[2 * H + j] + bx[2 * H + j] + r * hn);
        T hp = h[b * H + j];
        d.r[c + j] = r;
        d.z[c + j] = z;
        d.n[c + j] = n;
        d.ghn[c + j] = hn;
        d.h_prev[c + j] = hp;
        T hnew = (T(1) - z) * n + z * hp;
        h[b * H + j] = hnew;
        out.data[(b * Tn + t) * 2 * H + offset + j] = hnew;
      }
    }
  }
}

template <typename T>
Tensor<T> BiGru<T>::forward(const Tensor<T>& seq) {
  if (seq.shape.size() != 3 || seq.dim(2) != input_size_ || seq.dim(1) == 0) {
    throw std::invalid_argument("BiGru: expected B x T x " + std::to_string(input_size_) +
                                " input, got " + shape_string(seq.shape));
  }
  input_ = seq;
  Tensor<T> out({seq.dim(0), seq.dim(1), 2 * hidden_});
  run_direction(fwd, false, seq, out, 0);
  run_direction(bwd, true, seq, out, hidden_);
  return out;
}

template <typename T>
void BiGru<T>::back_direction(Direction& d, bool reverse, const Tensor<T>& dout, std::size_t offset,
                              Tensor<T>& dseq) {
  const std::size_t B = input_.dim(0), Tn = input_.dim(1), D = input_.dim(2), H = hidden_, G = 3 * H;
  std::vector<T> dgx(B * Tn * G, T(0));
  std::vector<T> dgh(B * G), dh_next(B * H, T(0)), hp(B * H);
  for (std::size_t s = Tn; s-- > 0;) {
    const std::size_t t = reverse ? Tn - 1 - s : s;
    for (std::size_t b = 0; b < B; ++b) {
      const std::size_t c = (t * B + b) * H;
      T* dgxr = dgx.data() + (b * Tn + t) * G;
      T* dghr = dgh.data() + b * G;
      for (std::size_t j = 0; j < H; ++j) {
        const T r = d.r[c + j], z = d.z[c + j], n = d.n[c + j], h0 = d.h_prev[c + j];
        const T dh = dout.data[(b * Tn + t) * 2 * H + offset + j] + dh_next[b * H + j];
        const T dn = dh * (T(1) - z);
        const T dz = dh * (h0 - n);
        const T dn_pre = dn * (T(1) - n * n);
        const T dr_pre = dn_pre * d.ghn[c + j] * r * (T(1) - r);
        const T dz_pre = dz * z * (T(1) - z);
        dgxr[j] = dr_pre;
        dgxr[H + j] = dz_pre;
        dgxr[2 * H + j] = dn_pre;
        dghr[j] = dr_pre;
        dghr[H + j] = dz_pre;
        dghr[2 * H + j] = dn_pre * r;
        dh_next[b * H + j] = dh * z;
        hp[b * H + j] = h0;
      }
    }
    kn::gemm_tn<T>(H, G, B, hp.data(), dgh.data(), d.w_h.grad.ptr(), true);
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t g = 0; g < G; ++g) d.b_h.grad.data[g] += dgh[b * G + g];
    kn::gemm_nt<T>(B, H, G, dgh.data(), d.w_h.value.ptr(), dh_next.data(), true);
  }
  kn::gemm_tn<T>(D, G, B * Tn, input_.ptr(), dgx.data(), d.w_x.grad.ptr(), true);
  for (std::size_t row = 0; row < B * Tn; ++row)
    for (std::size_t g = 0; g < G; ++g) d.b_x.grad.data[g] += dgx[row * G + g];
  kn::gemm_nt<T>(B * Tn, D, G, dgx.data(), d.w_x.value.ptr(), dseq.ptr(), true);
}

template <typename T>
Tensor<T> BiGru<T>::backward(const Tensor<T>& dout) {
  require_shape(dout, {input_.dim(0), input_.dim(1), 2 * hidden_}, "BiGru::backward");
  Tensor<T> dseq(input_.shape);
  back_direction(fwd, false, dout, 0, dseq);
  back_direction(bwd, true, dout, hidden_, dseq);
  return dseq;
}

// ---------------------------------------------------------------- head

template <typename T>
Head<T>::Head(std::size_t in_features, std::size_t classes, std::size_t group, const std::string& prefix)
    : weight(prefix + ".weight", {in_features, classes}),
      bias(prefix + ".bias", {classes}),
      in_(in_features),
      classes_(classes),
      group_(group) {
  if (group_ == 0) throw std::invalid_argument("Head: pooling group must be positive");
}

template <typename T>
Tensor<T> Head<T>::forward(const Tensor<T>& seq) {
  if (seq.shape.size() != 3 || seq.dim(2) != in_) {
    throw std::invalid_argument("Head: expected B x T x " + std::to_string(in_) + " input, got " +
                                shape_string(seq.shape));
  }
  const std::size_t B = seq.dim(0), Tn = seq.dim(1), L = classes_;
  if (Tn % group_ != 0) {
    throw std::invalid_argument("Head: " + std::to_string(Tn) + " frames are not divisible by the " +
                                std::to_string(group_) + "-frame label group");
  }
  input_ = seq;
  probs_.assign(B * Tn * L, T(0));
  kn::gemm_nn<T>(B * Tn, L, in_, seq.ptr(), weight.value.ptr(), probs_.data(), false);
  for (std::size_t row = 0; row < B * Tn; ++row)
    for (std::size_t l = 0; l < L; ++l) {
      T& v = probs_[row * L + l];
      v = sigmoid(v + bias.value.data[l]);
    }
  const std::size_t To = Tn / group_;
  Tensor<T> out({B, To, L});
  const T inv = T(1) / static_cast<T>(group_);
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t t = 0; t < Tn; ++t)
      for (std::size_t l = 0; l < L; ++l) out.data[(b * To + t / group_) * L + l] += probs_[(b * Tn + t) * L + l] * inv;
  return out;
}

template <typename T>
Tensor<T> Head<T>::backward(const Tensor<T>& dout) {
  const std::size_t B = input_.dim(0), Tn = input_.dim(1), L = classes_, To = Tn / group_;
  require_shape(dout, {B, To, L}, "Head::backward");
  std::vector<T> dlogit(B * Tn * L);
  const T inv = T(1) / static_cast<T>(group_);
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t t = 0; t < Tn; ++t)
      for (std::size_t l = 0; l < L; ++l) {
        const std::size_t i = (b * Tn + t) * L + l;
        const T p = probs_[i];
        dlogit[i] = dout.data[(b * To + t / group_) * L + l] * inv * p * (T(1) - p);
      }
  kn::gemm_tn<T>(in_, L, B * Tn, input_.ptr(), dlogit.data(), weight.grad.ptr(), true);
  for (std::size_t row = 0; row < B * Tn; ++row)
    for (std::size_t l = 0; l < L; ++l) bias.grad.data[l] += dlogit[row * L + l];
  Tensor<T> dseq(input_.shape);
  kn::gemm_nt<T>(B * Tn, in_, L, dlogit.data(), weight.value.ptr(), dseq.ptr(), false);
  return dseq;
}

// ---------------------------------------------------------------- model

namespace {

template <typename T>
std::vector<ConvBlock<T>> make_blocks(const CrnnConfig& cfg) {
  cfg.validate();
  std::vector<ConvBlock<T>> blocks;
  std::size_t in = cfg.input_channels;
  for (std::size_t i = 0; i < cfg.conv_blocks.size(); ++i) {
    blocks.emplace_back(in, cfg.conv_blocks[i], cfg.bn_momentum, cfg.bn_eps, "conv" + std::to_string(i));
    in = cfg.conv_blocks[i].out_channels;
  }
  return blocks;
}

std::size_t backbone_channels(const CrnnConfig& cfg) {
  return cfg.conv_blocks.empty() ? cfg.input_channels : cfg.conv_blocks.back().out_channels;
}

template <typename T>
void kaiming_uniform(Tensor<T>& w, std::size_t fan_in, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  std::uniform_real_distribution<double> u(-bound, bound);
  for (auto& v : w.data) v = static_cast<T>(u(rng));
}

// Orthogonal H x H block written into columns [col, col + H) of an
// H x (3H) matrix, by modified Gram-Schmidt on a Gaussian matrix.
template <typename T>
void orthogonal_block(Tensor<T>& w, std::size_t col, std::size_t h, Rng& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<std::vector<double>> q(h, std::vector<double>(h));
  for (auto& row : q)
    for (auto& v : row) v = g(rng);
  for (std::size_t i = 0; i < h; ++i) {
    for (std::size_t k = 0; k < i; ++k) {
      double d = 0.0;
      for (std::size_t j = 0; j < h; ++j) d += q[i][j] * q[k][j];
      for (std::size_t j = 0; j < h; ++j) q[i][j] -= d * q[k][j];
    }
    double norm = 0.0;
    for (double v : q[i]) norm += v * v;
    norm = std::sqrt(norm);
    for (double& v : q[i]) v /= norm;
  }
  const std::size_t cols = w.dim(1);
  for (std::size_t i = 0; i < h; ++i)
    for (std::size_t j = 0; j < h; ++j) w.data[i * cols + col + j] = static_cast<T>(q[i][j]);
}

}  // namespace

template <typename T>
Crnn<T>::Crnn(const CrnnConfig& cfg)
    : cfg_(cfg),
      blocks_(make_blocks<T>(cfg)),
      gru_(backbone_channels(cfg), cfg.gru_units, "gru"),
      head_(2 * cfg.gru_units, cfg.n_classes, cfg.head_group(), "head") {}

template <typename T>
Tensor<T> Crnn<T>::forward(const Tensor<T>& x, bool training) {
  if (x.shape.size() != 4 || x.dim(1) != cfg_.input_channels || x.dim(3) != cfg_.n_mels) {
    throw std::invalid_argument("Crnn: expected B x " + std::to_string(cfg_.input_channels) + " x T x " +
                                std::to_string(cfg_.n_mels) + " input, got " + shape_string(x.shape));
  }
  if (x.dim(2) % cfg_.frames_per_label != 0) {
    throw std::invalid_argument("Crnn: input frames must be a multiple of " +
                                std::to_string(cfg_.frames_per_label));
  }
  Tensor<T> h = x;
  for (auto& b : blocks_) h = b.forward(std::move(h), training);
  pooled_shape_ = h.shape;
  Tensor<T> seq = freq_pool_forward(h);
  return head_.forward(gru_.forward(seq));
}

template <typename T>
Tensor<T> Crnn<T>::backward(const Tensor<T>& dprobs) {
  Tensor<T> g = gru_.backward(head_.backward(dprobs));
  g = freq_pool_backward(g, pooled_shape_);
  for (std::size_t i = blocks_.size(); i-- > 0;) g = blocks_[i].backward(g);
  return g;
}

template <typename T>
void Crnn<T>::init(std::uint64_t seed) {
  Rng rng(seed);
  for (auto& b : blocks_) {
    kaiming_uniform(b.weight.value, b.in_channels() * 9, rng);
    std::fill(b.gamma.value.data.begin(), b.gamma.value.data.end(), T(1));
    b.beta.value.zero();
    b.running_mean.zero();
    std::fill(b.running_var.data.begin(), b.running_var.data.end(), T(1));
  }
  const std::size_t H = cfg_.gru_units;
  for (auto* d : {&gru_.fwd, &gru_.bwd}) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(H));
    std::uniform_real_distribution<double> u(-bound, bound);
    for (auto& v : d->w_x.value.data) v = static_cast<T>(u(rng));
    for (std::size_t g = 0; g < 3; ++g) orthogonal_block(d->w_h.value, g * H, H, rng);
    d->b_x.value.zero();
    d->b_h.value.zero();
  }
  kaiming_uniform(head_.weight.value, 2 * H, rng);
  head_.bias.value.zero();
  zero_grad();
}

template <typename T>
void Crnn<T>::zero_grad() {
  for (auto* p : params()) p->grad.zero();
}

template <typename T>
std::vector<Param<T>*> Crnn<T>::params() {
  std::vector<Param<T>*> out;
  for (auto& b : blocks_)
    for (auto* p : b.params()) out.push_back(p);
  for (auto* p : gru_.params()) out.push_back(p);
  for (auto* p : head_.params()) out.push_back(p);
  return out;
}

template <typename T>
std::vector<std::pair<std::string, Tensor<T>*>> Crnn<T>::buffers() {
  std::vector<std::pair<std::string, Tensor<T>*>> out;
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    out.emplace_back("conv" + std::to_string(i) + ".running_mean", &blocks_[i].running_mean);
    out.emplace_back("conv" + std::to_string(i) + ".running_var", &blocks_[i].running_var);
  }
  return out;
}

template <typename T>
Tensor<T> replicate_first_layer(const Tensor<T>& weight, std::size_t channels) {
  if (weight.shape.size() != 4 || weight.dim(2) != 3 || weight.dim(3) != 3) {
    throw std::invalid_argument("replicate_first_layer: expected K x C x 3 x 3 weights");
  }
  const std::size_t K = weight.dim(0), c_pre = weight.dim(1);
  if (c_pre == channels) return weight;
  if (c_pre != 1 && c_pre != 3) {
    throw std::invalid_argument("replicate_first_layer: unsupported pretrained channel count " +
                                std::to_string(c_pre));
  }
  Tensor<T> out({K, channels, 3, 3});
  const T scale = static_cast<T>(static_cast<double>(c_pre) / static_cast<double>(channels));
  for (std::size_t k = 0; k < K; ++k)
    for (std::size_t c = 0; c < channels; ++c)
      for (std::size_t i = 0; i < 9; ++i)
        out.data[(k * channels + c) * 9 + i] = weight.data[(k * c_pre + c % c_pre) * 9 + i] * scale;
  return out;
}

template <typename T>
void transfer_backbone(Crnn<T>& src, Crnn<T>& dst) {
  auto& sb = src.blocks();
  auto& db = dst.blocks();
  if (sb.size() != db.size()) throw std::invalid_argument("transfer_backbone: block counts differ");
  for (std::size_t i = 0; i < sb.size(); ++i) {
    if (sb[i].out_channels() != db[i].out_channels()) {
      throw std::invalid_argument("transfer_backbone: block widths differ");
    }
    if (i == 0) {
      db[i].weight.value = replicate_first_layer(sb[i].weight.value, db[i].in_channels());
    } else {
      db[i].weight.value = sb[i].weight.value;
    }
    db[i].gamma.value = sb[i].gamma.value;
    db[i].beta.value = sb[i].beta.value;
    db[i].running_mean = sb[i].running_mean;
    db[i].running_var = sb[i].running_var;
  }
}

template <typename T, typename U>
void copy_weights(Crnn<T>& src, Crnn<U>& dst) {
  auto sp = src.params();
  auto dp = dst.params();
  if (sp.size() != dp.size()) throw std::invalid_argument("copy_weights: parameter lists differ");
  for (std::size_t i = 0; i < sp.size(); ++i) {
    if (sp[i]->value.shape != dp[i]->value.shape) throw std::invalid_argument("copy_weights: shape mismatch");
    dp[i]->value = sp[i]->value.template cast<U>();
  }
  auto sbuf = src.buffers();
  auto dbuf = dst.buffers();
  for (std::size_t i = 0; i < sbuf.size(); ++i) *dbuf[i].second = sbuf[i].second->template cast<U>();
}

template class ConvBlock<float>;
template class ConvBlock<double>;
template class BiGru<float>;
template class BiGru<double>;
template class Head<float>;
template class Head<double>;
template class Crnn<float>;
template class Crnn<double>;
template Tensor<float> freq_pool_forward(const Tensor<float>&);
template Tensor<double> freq_pool_forward(const Tensor<double>&);
template Tensor<float> freq_pool_backward(const Tensor<float>&, const std::vector<std::size_t>&);
template Tensor<double> freq_pool_backward(const Tensor<double>&, const std::vector<std::size_t>&);
template Tensor<float> replicate_first_layer(const Tensor<float>&, std::size_t);
template Tensor<double> replicate_first_layer(const Tensor<double>&, std::size_t);
template void transfer_backbone(Crnn<float>&, Crnn<float>&);
template void transfer_backbone(Crnn<double>&, Crnn<double>&);
template void copy_weights(Crnn<float>&, Crnn<float>&);
template void copy_weights(Crnn<float>&, Crnn<double>&);
template void copy_weights(Crnn<double>&, Crnn<float>&);
template void copy_weights(Crnn<double>&, Crnn<double>&);

}  // namespace sedlab
