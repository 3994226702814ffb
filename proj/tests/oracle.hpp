/*
 * Licensed to the Apache Software Foundation (ASF) under one
 * or more contributor license agreements.  See the NOTICE file
 * distributed with this work for additional information
 * regarding copyright ownership.  The ASF licenses this file
 * to you under the Apache License, Version 2.0 (the
 * "License"); you may not use this file except in compliance
 * with the License.  You may obtain a copy of the License at
 *
 *   http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing,
 * software distributed under the License is distributed on an
 * "AS IS" BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
 * KIND, either express or implied.  See the License for the
 * specific language governing permissions and limitations
 * under the License.
 */

/*!
 * \file oracle.hpp
 * \brief Test-side reference arithmetic, written without the library's kernels.
 *
 * Convolutions go through an explicit im2col matrix product, transposed
 * convolution through zero insertion and a flipped kernel, and the output
 * stage through floor division. Everything is computed in int64 and
 * wrapped to int32 only where the hardware would.
 */
#pragma once

#include <algorithm>
#include <cstdint>
#include <optional>
#include <vector>

#include "vta/compiler.hpp"
#include "vta/tensor.hpp"

namespace oracle {

using I64 = std::vector<std::int64_t>;

inline std::int64_t wrap32(std::int64_t v) {
  const auto u = static_cast<std::uint32_t>(static_cast<std::uint64_t>(v));
  return u >= 0x80000000u ? static_cast<std::int64_t>(u) - (std::int64_t{1} << 32) : static_cast<std::int64_t>(u);
}

inline std::int64_t floor_shift(std::int64_t v, std::int64_t s) {
  if (s <= 0) return wrap32(v * (std::int64_t{1} << std::min<std::int64_t>(-s, 40)));
  if (s >= 40) return v < 0 ? -1 : 0;
  const std::int64_t d = std::int64_t{1} << s;
  std::int64_t q = v / d;
  if (v % d != 0 && v < 0) --q;
  return q;
}

inline I64 values(const vta::Tensor& t) {
  I64 v(static_cast<std::size_t>(t.size()));
  for (std::int64_t i = 0; i < t.size(); ++i) v[static_cast<std::size_t>(i)] = t[i];
  return v;
}

/*! \brief Zero-padded NCHW tensor view. */
struct Image {
  std::int64_t N, C, H, W;
  I64 v;
  std::int64_t get(std::int64_t n, std::int64_t c, std::int64_t h, std::int64_t w) const {
    if (h < 0 || w < 0 || h >= H || w >= W) return 0;
    return v[static_cast<std::size_t>(((n * C + c) * H + h) * W + w)];
  }
};

/*! \brief Grouped convolution as one im2col product per group. */
inline I64 conv(const Image& x, const I64& w, std::int64_t O, std::int64_t K, std::int64_t stride, std::int64_t pad,
                std::int64_t groups, std::int64_t& OH, std::int64_t& OW) {
  OH = (x.H + 2 * pad - K) / stride + 1;
  OW = (x.W + 2 * pad - K) / stride + 1;
  const std::int64_t CG = x.C / groups, OG = O / groups, rows = CG * K * K, cols = OH * OW;
  I64 y(static_cast<std::size_t>(x.N * O * cols), 0);
  for (std::int64_t n = 0; n < x.N; ++n)
    for (std::int64_t g = 0; g < groups; ++g) {
      I64 col(static_cast<std::size_t>(rows * cols));
      for (std::int64_t c = 0; c < CG; ++c)
        for (std::int64_t kh = 0; kh < K; ++kh)
          for (std::int64_t kw = 0; kw < K; ++kw)
            for (std::int64_t oh = 0; oh < OH; ++oh)
              for (std::int64_t ow = 0; ow < OW; ++ow)
                col[static_cast<std::size_t>(((c * K + kh) * K + kw) * cols + oh * OW + ow)] =
                    x.get(n, g * CG + c, oh * stride + kh - pad, ow * stride + kw - pad);
      for (std::int64_t o = 0; o < OG; ++o) {
        const std::int64_t oc = g * OG + o;
        for (std::int64_t j = 0; j < cols; ++j) {
          std::int64_t acc = 0;
          for (std::int64_t r = 0; r < rows; ++r)
            acc += w[static_cast<std::size_t>(oc * rows + r)] * col[static_cast<std::size_t>(r * cols + j)];
          y[static_cast<std::size_t>((n * O + oc) * cols + j)] = wrap32(acc);
        }
      }
    }
  return y;
}

/*!
 * \brief Transposed convolution: insert stride-1 zeros between input
 *        pixels, pad by K-1-pad, then convolve with the flipped kernel.
 */
inline I64 conv_transpose(const Image& x, const I64& w, std::int64_t O, std::int64_t K, std::int64_t stride,
                          std::int64_t pad, std::int64_t& OH, std::int64_t& OW) {
  const std::int64_t e = K - 1 - pad;
  Image z{x.N, x.C, (x.H - 1) * stride + 1 + 2 * e, (x.W - 1) * stride + 1 + 2 * e, {}};
  z.v.assign(static_cast<std::size_t>(z.N * z.C * z.H * z.W), 0);
  for (std::int64_t n = 0; n < x.N; ++n)
    for (std::int64_t c = 0; c < x.C; ++c)
      for (std::int64_t h = 0; h < x.H; ++h)
        for (std::int64_t ww = 0; ww < x.W; ++ww)
          z.v[static_cast<std::size_t>(((n * z.C + c) * z.H + e + h * stride) * z.W + e + ww * stride)] =
              x.get(n, c, h, ww);
  I64 flipped(w.size());
  for (std::int64_t o = 0; o < O; ++o)
    for (std::int64_t c = 0; c < x.C; ++c)
      for (std::int64_t kh = 0; kh < K; ++kh)
        for (std::int64_t kw = 0; kw < K; ++kw)
          flipped[static_cast<std::size_t>(((o * x.C + c) * K + kh) * K + kw)] =
              w[static_cast<std::size_t>(((o * x.C + c) * K + (K - 1 - kh)) * K + (K - 1 - kw))];
  return conv(z, flipped, O, K, 1, 0, 1, OH, OW);
}

/*! \brief bias add (wrapping), arithmetic shift, clamp to the output range. */
inline I64 epilogue(const I64& acc, std::int64_t N, std::int64_t C, const std::optional<I64>& bias, std::int64_t shift,
                    bool relu, int out_bits) {
  const std::int64_t inner = static_cast<std::int64_t>(acc.size()) / (N * C);
  const std::int64_t hi = (std::int64_t{1} << (out_bits - 1)) - 1, lo = relu ? 0 : -hi - 1;
  I64 y(acc.size());
  for (std::size_t i = 0; i < acc.size(); ++i) {
    const std::int64_t c = (static_cast<std::int64_t>(i) / inner) % C;
    std::int64_t v = acc[i];
    if (bias) v = wrap32(v + (*bias)[static_cast<std::size_t>(c)]);
    v = floor_shift(v, shift);
    y[i] = std::clamp(v, lo, hi);
  }
  return y;
}

inline std::int64_t alu(vta::AluOp op, std::int64_t a, std::int64_t b) {
  switch (op) {
    case vta::AluOp::kMin: return a < b ? a : b;
    case vta::AluOp::kMax: return a > b ? a : b;
    case vta::AluOp::kAdd: return wrap32(a + b);
    case vta::AluOp::kShr: return floor_shift(a, b);
  }
  return a;
}

/*! \brief Full operator output, int8 values after the output stage. */
inline I64 evaluate(const vta::OperatorSpec& s, const vta::OperatorInputs& in, int out_bits = 8) {
  using vta::OpKind;
  const I64 xv = values(in.x);
  std::int64_t OH = 1, OW = 1;
  I64 acc;
  const std::int64_t C = s.IC, H = s.kind == OpKind::kDense ? 1 : s.H, W = s.kind == OpKind::kDense ? 1 : s.W;
  const Image x{s.N, C, H, W, xv};
  switch (s.kind) {
    case OpKind::kConv2d:
    case OpKind::kDense:
      acc = conv(x, values(*in.w), s.OC, s.KH, s.stride, s.pad, 1, OH, OW);
      break;
    case OpKind::kGroupedConv2d:
      acc = conv(x, values(*in.w), s.OC, s.KH, s.stride, s.pad, s.groups, OH, OW);
      break;
    case OpKind::kConv2dTranspose:
      acc = conv_transpose(x, values(*in.w), s.OC, s.KH, s.stride, s.pad, OH, OW);
      break;
    case OpKind::kElementwise: {
      const I64 b = values(*in.x2);
      acc.resize(xv.size());
      for (std::size_t i = 0; i < xv.size(); ++i) acc[i] = alu(s.alu_op, xv[i], b[i]);
      break;
    }
    case OpKind::kMaxpool: {
      OH = (H - s.KH) / s.stride + 1;
      OW = (W - s.KW) / s.stride + 1;
      acc.assign(static_cast<std::size_t>(s.N * C * OH * OW), 0);
      for (std::int64_t n = 0; n < s.N; ++n)
        for (std::int64_t c = 0; c < C; ++c)
          for (std::int64_t oh = 0; oh < OH; ++oh)
            for (std::int64_t ow = 0; ow < OW; ++ow) {
              std::int64_t m = x.get(n, c, oh * s.stride, ow * s.stride);
              for (std::int64_t kh = 0; kh < s.KH; ++kh)
                for (std::int64_t kw = 0; kw < s.KW; ++kw)
                  m = std::max(m, x.get(n, c, oh * s.stride + kh, ow * s.stride + kw));
              acc[static_cast<std::size_t>(((n * C + c) * OH + oh) * OW + ow)] = m;
            }
      break;
    }
  }
  std::optional<I64> bias;
  if (s.has_bias()) bias = values(*in.bias);
  return epilogue(acc, s.N, s.OC, bias, s.shift, s.relu, out_bits);
}

inline bool equal(const I64& a, const vta::Tensor& t) { return a == values(t); }

}  // namespace oracle
