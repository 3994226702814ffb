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
 * \file refops.hpp
 * \brief Host reference operators: the verification oracle and the CPU fallback.
 *
 * Everything accumulates in int32 with two's-complement wrap-around.
 */
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <vector>

#include "isa.hpp"
#include "tensor.hpp"

namespace vta::ref {

namespace detail {
inline void expect_rank(const Tensor& t, std::size_t rank, const char* what) {
  if (t.rank() != rank)
    throw ShapeError(std::string(what) + " must have rank " + std::to_string(rank) + ", got " + shape_string(t.dims()));
}

inline std::int32_t wrap32(std::int64_t v) { return bits::wrap(v, 32); }
}  // namespace detail

/*! \brief Output extent of a strided window: floor((in + 2*pad - k) / stride) + 1. */
inline std::int64_t conv_out_extent(std::int64_t in, std::int64_t k, std::int64_t stride, std::int64_t pad) {
  if (stride < 1) throw ShapeError("stride must be at least 1");
  if (pad < 0) throw ShapeError("padding must be non-negative");
  if (in + 2 * pad < k) throw ShapeError("kernel larger than padded input");
  return (in + 2 * pad - k) / stride + 1;
}

inline Tensor grouped_conv2d_ref(const Tensor& x, const Tensor& w, std::int64_t stride, std::int64_t pad,
                                 std::int64_t groups) {
  detail::expect_rank(x, 4, "conv input");
  detail::expect_rank(w, 4, "conv weight");
  const std::int64_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const std::int64_t O = w.dim(0), CG = w.dim(1), KH = w.dim(2), KW = w.dim(3);
  if (groups < 1 || C % groups != 0 || O % groups != 0)
    throw ShapeError("channels " + std::to_string(C) + "/" + std::to_string(O) + " not divisible by groups " +
                     std::to_string(groups));
  if (CG != C / groups) throw ShapeError("weight input channels do not match input channels per group");
  const std::int64_t OH = conv_out_extent(H, KH, stride, pad), OW = conv_out_extent(W, KW, stride, pad);
  const std::int64_t OG = O / groups;
  Tensor y({N, O, OH, OW}, DType::kI32);
  for (std::int64_t n = 0; n < N; ++n)
    for (std::int64_t o = 0; o < O; ++o) {
      const std::int64_t g = o / OG;
      for (std::int64_t oh = 0; oh < OH; ++oh)
        for (std::int64_t ow = 0; ow < OW; ++ow) {
          std::int64_t acc = 0;
          for (std::int64_t c = 0; c < CG; ++c)
            for (std::int64_t kh = 0; kh < KH; ++kh) {
              const std::int64_t ih = oh * stride - pad + kh;
              if (ih < 0 || ih >= H) continue;
              for (std::int64_t kw = 0; kw < KW; ++kw) {
                const std::int64_t iw = ow * stride - pad + kw;
                if (iw < 0 || iw >= W) continue;
                acc += std::int64_t{x.at(n, g * CG + c, ih, iw)} * w.at(o, c, kh, kw);
              }
            }
          y.at(n, o, oh, ow) = detail::wrap32(acc);
        }
    }
  return y;
}

/*! \brief Direct convolution, NCHW x OIHW -> NCHW int32. */
inline Tensor conv2d_ref(const Tensor& x, const Tensor& w, std::int64_t stride, std::int64_t pad) {
  return grouped_conv2d_ref(x, w, stride, pad, 1);
}

inline std::int64_t conv2d_transpose_out_extent(std::int64_t in, std::int64_t k, std::int64_t stride,
                                                std::int64_t pad) {
  if (stride < 1) throw ShapeError("stride must be at least 1");
  const std::int64_t out = (in - 1) * stride + k - 2 * pad;
  if (pad < 0 || out < 1) throw ShapeError("transpose convolution has empty output");
  return out;
}

/*!
 * \brief Transposed convolution in scatter form.
 *
 * Weight is OIHW. Input pixel (h, w) adds its value times the kernel at
 * output offset (h*stride - pad, w*stride - pad); contributions outside
 * the output are dropped.
 */
inline Tensor conv2d_transpose_ref(const Tensor& x, const Tensor& w, std::int64_t stride, std::int64_t pad) {
  detail::expect_rank(x, 4, "transpose input");
  detail::expect_rank(w, 4, "transpose weight");
  const std::int64_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const std::int64_t O = w.dim(0), KH = w.dim(2), KW = w.dim(3);
  if (w.dim(1) != C) throw ShapeError("transpose weight input channels do not match input");
  const std::int64_t OH = conv2d_transpose_out_extent(H, KH, stride, pad);
  const std::int64_t OW = conv2d_transpose_out_extent(W, KW, stride, pad);
  std::vector<std::int64_t> acc(static_cast<std::size_t>(N * O * OH * OW), 0);
  for (std::int64_t n = 0; n < N; ++n)
    for (std::int64_t c = 0; c < C; ++c)
      for (std::int64_t h = 0; h < H; ++h)
        for (std::int64_t ww = 0; ww < W; ++ww) {
          const std::int64_t v = x.at(n, c, h, ww);
          if (v == 0) continue;
          for (std::int64_t o = 0; o < O; ++o)
            for (std::int64_t kh = 0; kh < KH; ++kh) {
              const std::int64_t oh = h * stride + kh - pad;
              if (oh < 0 || oh >= OH) continue;
              for (std::int64_t kw = 0; kw < KW; ++kw) {
                const std::int64_t ow = ww * stride + kw - pad;
                if (ow < 0 || ow >= OW) continue;
                acc[static_cast<std::size_t>(((n * O + o) * OH + oh) * OW + ow)] += v * w.at(o, c, kh, kw);
              }
            }
        }
  Tensor y({N, O, OH, OW}, DType::kI32);
  for (std::int64_t i = 0; i < y.size(); ++i) y[i] = detail::wrap32(acc[static_cast<std::size_t>(i)]);
  return y;
}

/*! \brief y[n][m] = sum_k x[n][k] * w[m][k]. */
inline Tensor dense_ref(const Tensor& x, const Tensor& w) {
  detail::expect_rank(x, 2, "dense input");
  detail::expect_rank(w, 2, "dense weight");
  const std::int64_t N = x.dim(0), K = x.dim(1), M = w.dim(0);
  if (w.dim(1) != K) throw ShapeError("dense inner dimensions differ");
  Tensor y({N, M}, DType::kI32);
  for (std::int64_t n = 0; n < N; ++n)
    for (std::int64_t m = 0; m < M; ++m) {
      std::int64_t acc = 0;
      for (std::int64_t k = 0; k < K; ++k) acc += std::int64_t{x[n * K + k]} * w[m * K + k];
      y[n * M + m] = detail::wrap32(acc);
    }
  return y;
}

/*!
 * \brief One element of the tensor ALU at 32-bit precision.
 *
 * SHR is an arithmetic shift by b (towards -inf); a negative amount
 * shifts left. Results wrap at 32 bits.
 */
inline std::int32_t alu_scalar(AluOp op, std::int32_t a, std::int32_t b) {
  switch (op) {
    case AluOp::kMin: return std::min(a, b);
    case AluOp::kMax: return std::max(a, b);
    case AluOp::kAdd: return detail::wrap32(std::int64_t{a} + b);
    case AluOp::kShr:
      if (b >= 0) return b >= 31 ? (a < 0 ? -1 : 0) : (a >> b);
      if (b <= -32) return 0;
      return detail::wrap32(static_cast<std::int64_t>(static_cast<std::uint32_t>(a) << (-b)));
  }
  return a;
}

inline Tensor alu_ref(AluOp op, const Tensor& a, const Tensor& b) {
  if (a.dims() != b.dims()) throw ShapeError("ALU operands differ in shape");
  Tensor y(a.dims(), DType::kI32);
  for (std::int64_t i = 0; i < a.size(); ++i) y[i] = alu_scalar(op, a[i], b[i]);
  return y;
}

inline Tensor alu_ref(AluOp op, const Tensor& a, std::int32_t imm) {
  Tensor y(a.dims(), DType::kI32);
  for (std::int64_t i = 0; i < a.size(); ++i) y[i] = alu_scalar(op, a[i], imm);
  return y;
}

/*! \brief Window maximum without padding; output extent floor((H - window) / stride) + 1. */
inline Tensor maxpool2d_ref(const Tensor& x, std::int64_t window, std::int64_t stride) {
  detail::expect_rank(x, 4, "maxpool input");
  if (window < 1) throw ShapeError("pool window must be at least 1");
  const std::int64_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const std::int64_t OH = conv_out_extent(H, window, stride, 0), OW = conv_out_extent(W, window, stride, 0);
  Tensor y({N, C, OH, OW}, DType::kI32);
  for (std::int64_t n = 0; n < N; ++n)
    for (std::int64_t c = 0; c < C; ++c)
      for (std::int64_t oh = 0; oh < OH; ++oh)
        for (std::int64_t ow = 0; ow < OW; ++ow) {
          std::int32_t m = x.at(n, c, oh * stride, ow * stride);
          for (std::int64_t kh = 0; kh < window; ++kh)
            for (std::int64_t kw = 0; kw < window; ++kw) m = std::max(m, x.at(n, c, oh * stride + kh, ow * stride + kw));
          y.at(n, c, oh, ow) = m;
        }
  return y;
}

/*! \brief Symmetric quantization parameters; the zero point is always 0. */
struct QuantParams {
  double scale = 1.0;
  std::int32_t qmin = -128;
  std::int32_t qmax = 127;
};

struct RealTensor {
  std::vector<std::int64_t> dims;
  std::vector<double> data;
};

inline Tensor quantize(const RealTensor& x, const QuantParams& q) {
  if (!(q.scale > 0)) throw Error("quantization scale must be positive");
  if (q.qmin >= q.qmax) throw Error("qmin must be below qmax");
  std::vector<std::int32_t> out(x.data.size());
  for (std::size_t i = 0; i < x.data.size(); ++i) {
    const double r = std::round(x.data[i] / q.scale);  // half away from zero
    out[i] = static_cast<std::int32_t>(std::clamp<double>(r, q.qmin, q.qmax));
  }
  return Tensor(x.dims, DType::kI8, std::move(out));
}

inline RealTensor dequantize(const Tensor& t, const QuantParams& q) {
  RealTensor r{t.dims(), std::vector<double>(static_cast<std::size_t>(t.size()))};
  for (std::int64_t i = 0; i < t.size(); ++i) r.data[i] = t[i] * q.scale;
  return r;
}

/*! \brief clamp(acc >> shift, -128, 127). */
inline Tensor requantize(const Tensor& acc, std::int32_t shift) {
  Tensor y(acc.dims(), DType::kI8);
  for (std::int64_t i = 0; i < acc.size(); ++i)
    y[i] = std::clamp(alu_scalar(AluOp::kShr, acc[i], shift), -128, 127);
  return y;
}

/*!
 * \brief Output stage applied to int32 results before narrowing.
 *
 * Per element: add the channel bias, arithmetic shift right, then clamp
 * to [relu ? 0 : lo, hi]. The clamp bounds are the output precision.
 */
struct Epilogue {
  std::int32_t shift = 0;
  bool relu = false;
  int out_bits = 8;
  std::int32_t lo() const { return relu ? 0 : static_cast<std::int32_t>(bits::signed_min(out_bits)); }
  std::int32_t hi() const { return static_cast<std::int32_t>(bits::signed_max(out_bits)); }
};

/*! \brief Applies the epilogue to NC.. int32 data; bias, when present, is one int32 per channel. */
inline Tensor epilogue_ref(const Tensor& acc, const std::optional<Tensor>& bias, const Epilogue& e) {
  if (acc.rank() < 2) throw ShapeError("epilogue input needs a channel dimension");
  const std::int64_t N = acc.dim(0), C = acc.dim(1);
  const std::int64_t inner = N * C > 0 ? acc.size() / (N * C) : 0;
  if (bias && bias->size() != C) throw ShapeError("bias length does not match channel count");
  Tensor y(acc.dims(), DType::kI8);
  for (std::int64_t n = 0; n < N; ++n)
    for (std::int64_t c = 0; c < C; ++c)
      for (std::int64_t k = 0; k < inner; ++k) {
        const std::int64_t i = (n * C + c) * inner + k;
        std::int32_t v = acc[i];
        if (bias) v = alu_scalar(AluOp::kAdd, v, (*bias)[c]);
        if (e.shift != 0) v = alu_scalar(AluOp::kShr, v, e.shift);
        v = alu_scalar(AluOp::kMax, v, e.lo());
        v = alu_scalar(AluOp::kMin, v, e.hi());
        y[i] = v;
      }
  return y;
}

}  // namespace vta::ref
