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
 * \file compiler.hpp
 * \brief Operator lowering onto the task and micro-op ISA.
 *
 * Lowering produces abstract instruction groups per execution context.
 * Micro-op addresses and dependency flags are left to the runtime.
 * Loop order is fixed: output tiles outermost, input-channel reduction
 * inside, with tile extents as the only knobs.
 */
#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "common.hpp"
#include "config.hpp"
#include "isa.hpp"
#include "refops.hpp"
#include "sim.hpp"
#include "tensor.hpp"

namespace vta {

enum class OpKind : std::uint8_t { kConv2d, kGroupedConv2d, kConv2dTranspose, kDense, kElementwise, kMaxpool };

inline const char* op_kind_name(OpKind k) {
  switch (k) {
    case OpKind::kConv2d: return "conv2d";
    case OpKind::kGroupedConv2d: return "grouped_conv2d";
    case OpKind::kConv2dTranspose: return "conv2d_transpose";
    case OpKind::kDense: return "dense";
    case OpKind::kElementwise: return "elementwise";
    case OpKind::kMaxpool: return "maxpool";
  }
  return "?";
}

inline OpKind parse_op_kind(const std::string& s) {
  for (int k = 0; k <= 5; ++k)
    if (s == op_kind_name(static_cast<OpKind>(k))) return static_cast<OpKind>(k);
  throw ParseError("unknown operator kind '" + s + "'");
}

/*!
 * \brief One operator instance.
 *
 * Dense uses N x IC inputs and OC x IC weights. Elementwise and maxpool
 * use IC == OC as the channel count; maxpool's window is KH x KW.
 * Every kind ends in the same epilogue: optional per-channel bias,
 * arithmetic shift, then clamp to [relu ? 0 : -2^(b-1), 2^(b-1) - 1].
 */
struct OperatorSpec {
  OpKind kind = OpKind::kConv2d;
  std::string name;
  std::int64_t N = 1, IC = 1, OC = 1, H = 1, W = 1, KH = 1, KW = 1, stride = 1, pad = 0, groups = 1;
  AluOp alu_op = AluOp::kAdd;
  std::int64_t occurrence = 1;
  bool bias = false;
  std::int32_t shift = 0;
  bool relu = false;

  bool operator==(const OperatorSpec&) const = default;

  bool conv_like() const {
    return kind == OpKind::kConv2d || kind == OpKind::kGroupedConv2d || kind == OpKind::kDense;
  }

  std::int64_t out_h() const {
    switch (kind) {
      case OpKind::kDense: return 1;
      case OpKind::kElementwise: return H;
      case OpKind::kConv2dTranspose: return ref::conv2d_transpose_out_extent(H, KH, stride, pad);
      default: return ref::conv_out_extent(H, KH, stride, kind == OpKind::kMaxpool ? 0 : pad);
    }
  }
  std::int64_t out_w() const {
    switch (kind) {
      case OpKind::kDense: return 1;
      case OpKind::kElementwise: return W;
      case OpKind::kConv2dTranspose: return ref::conv2d_transpose_out_extent(W, KW, stride, pad);
      default: return ref::conv_out_extent(W, KW, stride, kind == OpKind::kMaxpool ? 0 : pad);
    }
  }

  std::vector<std::int64_t> input_dims() const {
    if (kind == OpKind::kDense) return {N, IC};
    return {N, IC, H, W};
  }
  std::optional<std::vector<std::int64_t>> weight_dims() const {
    switch (kind) {
      case OpKind::kDense: return std::vector<std::int64_t>{OC, IC};
      case OpKind::kConv2d: case OpKind::kConv2dTranspose: return std::vector<std::int64_t>{OC, IC, KH, KW};
      case OpKind::kGroupedConv2d: return std::vector<std::int64_t>{OC, IC / groups, KH, KW};
      default: return std::nullopt;
    }
  }
  std::vector<std::int64_t> output_dims() const {
    if (kind == OpKind::kDense) return {N, OC};
    return {N, OC, out_h(), out_w()};
  }
  bool has_weight() const { return weight_dims().has_value(); }
  bool has_bias() const { return bias && has_weight(); }
  int num_data_inputs() const { return kind == OpKind::kElementwise ? 2 : 1; }

  /*! \brief Shape sanity independent of any hardware design. */
  void validate() const {
    auto pos = [&](const char* n, std::int64_t v) {
      if (v < 1) throw ShapeError(std::string(n) + " must be positive");
    };
    pos("N", N); pos("IC", IC); pos("OC", OC); pos("H", H); pos("W", W);
    pos("KH", KH); pos("KW", KW); pos("stride", stride); pos("groups", groups); pos("occurrence", occurrence);
    if (pad < 0) throw ShapeError("pad must be non-negative");
    if ((kind == OpKind::kElementwise || kind == OpKind::kMaxpool) && IC != OC)
      throw ShapeError(std::string(op_kind_name(kind)) + " needs IC == OC");
    if (kind == OpKind::kGroupedConv2d && (IC % groups != 0 || OC % groups != 0))
      throw ShapeError("channels not divisible by groups");
    if (kind != OpKind::kGroupedConv2d && groups != 1) throw ShapeError("groups > 1 requires grouped_conv2d");
    if (kind == OpKind::kDense && (H != 1 || W != 1 || KH != 1 || KW != 1 || stride != 1 || pad != 0))
      throw ShapeError("dense has no spatial extent");
    if (kind == OpKind::kMaxpool && pad != 0) throw ShapeError("maxpool takes no padding");
    if (kind == OpKind::kMaxpool && KH != KW) throw ShapeError("maxpool window must be square");
    (void)out_h();
    (void)out_w();
  }
};

/*! \brief Number of scatter pairs (input index, kernel tap) landing inside the transposed output. */
inline std::int64_t transpose_valid_pairs(std::int64_t in, std::int64_t k, std::int64_t stride, std::int64_t pad,
                                          std::int64_t out) {
  std::int64_t n = 0;
  for (std::int64_t kk = 0; kk < k; ++kk) {
    // o = h*stride + kk - pad in [0, out)
    const std::int64_t lo = std::max<std::int64_t>(0, bits::ceil_div(std::max<std::int64_t>(0, pad - kk), stride));
    const std::int64_t hi_num = out - 1 + pad - kk;
    if (hi_num < 0) continue;
    const std::int64_t hi = std::min<std::int64_t>(in - 1, hi_num / stride);
    if (hi >= lo) n += hi - lo + 1;
  }
  return n;
}

/*! \brief Useful multiply-accumulates of the operator (zero padding and scatter misses excluded from transpose only). */
inline std::int64_t mac_count(const OperatorSpec& s) {
  switch (s.kind) {
    case OpKind::kConv2d: case OpKind::kDense:
      return s.N * s.OC * s.out_h() * s.out_w() * s.IC * s.KH * s.KW;
    case OpKind::kGroupedConv2d:
      return s.N * s.OC * s.out_h() * s.out_w() * (s.IC / s.groups) * s.KH * s.KW;
    case OpKind::kConv2dTranspose:
      return s.N * s.OC * s.IC * transpose_valid_pairs(s.H, s.KH, s.stride, s.pad, s.out_h()) *
             transpose_valid_pairs(s.W, s.KW, s.stride, s.pad, s.out_w());
    default: return 0;
  }
}

/*! \brief 2 * MACs, the convention for GOPS accounting. */
inline std::int64_t op_count(const OperatorSpec& s) { return 2 * mac_count(s); }

struct Schedule {
  std::int64_t tile_oc = 1;  ///< output channel blocks per tile
  std::int64_t tile_ic = 1;  ///< input channel blocks per reduction step
  std::int64_t tile_h = 1;   ///< output rows per tile
  std::int64_t tile_w = 1;   ///< output columns per tile
  int vthreads = 1;
  bool oc_unroll = true;  ///< micro-ops over output blocks (true) or output rows (false)

  auto operator<=>(const Schedule&) const = default;
  bool operator==(const Schedule&) const = default;
};

inline void to_json(nlohmann::json& j, const Schedule& s) {
  j = {{"tile_oc", s.tile_oc}, {"tile_ic", s.tile_ic}, {"tile_h", s.tile_h},
       {"tile_w", s.tile_w}, {"vthreads", s.vthreads}, {"oc_unroll", s.oc_unroll}};
}

inline void from_json(const nlohmann::json& j, Schedule& s) {
  s = Schedule{};
  s.tile_oc = j.value("tile_oc", s.tile_oc);
  s.tile_ic = j.value("tile_ic", s.tile_ic);
  s.tile_h = j.value("tile_h", s.tile_h);
  s.tile_w = j.value("tile_w", s.tile_w);
  s.vthreads = j.value("vthreads", s.vthreads);
  s.oc_unroll = j.value("oc_unroll", s.oc_unroll);
}

inline void to_json(nlohmann::json& j, const OperatorSpec& s) {
  j = {{"kind", op_kind_name(s.kind)}, {"name", s.name}, {"n", s.N}, {"ic", s.IC}, {"oc", s.OC},
       {"h", s.H}, {"w", s.W}, {"kh", s.KH}, {"kw", s.KW}, {"stride", s.stride}, {"pad", s.pad},
       {"groups", s.groups}, {"occurrence", s.occurrence}, {"bias", s.bias}, {"shift", s.shift},
       {"relu", s.relu}};
  if (s.kind == OpKind::kElementwise) j["alu_op"] = alu_name(s.alu_op);
}

inline void from_json(const nlohmann::json& j, OperatorSpec& s) {
  s = OperatorSpec{};
  s.kind = parse_op_kind(j.at("kind").get<std::string>());
  s.name = j.value("name", std::string());
  s.N = j.value("n", s.N);
  s.IC = j.value("ic", s.IC);
  s.OC = j.value("oc", s.OC);
  s.H = j.value("h", s.H);
  s.W = j.value("w", s.W);
  s.KH = j.value("kh", s.KH);
  s.KW = j.value("kw", s.KW);
  s.stride = j.value("stride", s.stride);
  s.pad = j.value("pad", s.pad);
  s.groups = j.value("groups", s.groups);
  s.occurrence = j.value("occurrence", s.occurrence);
  s.bias = j.value("bias", s.bias);
  s.shift = j.value("shift", s.shift);
  s.relu = j.value("relu", s.relu);
  if (j.contains("alu_op")) {
    const auto name = j.at("alu_op").get<std::string>();
    bool found = false;
    for (int k = 0; k <= 3; ++k)
      if (name == alu_name(static_cast<AluOp>(k))) {
        s.alu_op = static_cast<AluOp>(k);
        found = true;
      }
    if (!found) throw ParseError("unknown alu_op '" + name + "'");
  }
  s.validate();
}

// ---------------------------------------------------------------------------
// Packed layouts

enum class Role : std::uint8_t { kInp, kWgt, kAcc, kOut };

inline const char* role_name(Role r) {
  switch (r) {
    case Role::kInp: return "inp";
    case Role::kWgt: return "wgt";
    case Role::kAcc: return "acc";
    case Role::kOut: return "out";
  }
  return "?";
}

/*!
 * \brief Blocked layout of a rank-4 tensor.
 *
 * Features (inp, acc, out) are [N/batch][C/cb][H][W][batch][cb] with cb the
 * channel block of the role. Weights are [O/bo][I/bi][KH][KW][bo][bi].
 * Extents are zero-padded up to block multiples.
 */
struct PackedLayout {
  Role role = Role::kInp;
  std::vector<std::int64_t> dims;  ///< logical rank-4 dims
  std::int64_t outer_block = 1;    ///< batch (features) or block_out (weights)
  std::int64_t inner_block = 1;    ///< channel block (features) or block_in (weights)
  int bits = 8;

  std::int64_t outer_tiles() const { return bits::ceil_div(dims[0], outer_block); }
  std::int64_t inner_tiles() const { return bits::ceil_div(dims[1], inner_block); }
  std::int64_t tile_elems() const { return outer_block * inner_block; }
  std::int64_t tile_bytes() const { return tile_elems() * bits / 8; }
  std::int64_t tiles() const { return outer_tiles() * inner_tiles() * dims[2] * dims[3]; }
  std::int64_t bytes() const { return tiles() * tile_bytes(); }
};

inline PackedLayout make_layout(std::vector<std::int64_t> dims, const HardwareParams& p, Role role) {
  if (dims.size() == 2) dims = {dims[0], dims[1], 1, 1};
  if (dims.size() != 4) throw ShapeError("packing needs a rank-2 or rank-4 tensor");
  PackedLayout l;
  l.role = role;
  l.dims = std::move(dims);
  switch (role) {
    case Role::kInp: l.outer_block = p.batch; l.inner_block = p.block_in; l.bits = p.inp_bits; break;
    case Role::kWgt: l.outer_block = p.block_out; l.inner_block = p.block_in; l.bits = p.wgt_bits; break;
    case Role::kAcc: l.outer_block = p.batch; l.inner_block = p.block_out; l.bits = p.acc_bits; break;
    case Role::kOut: l.outer_block = p.batch; l.inner_block = p.block_out; l.bits = p.inp_bits; break;
  }
  return l;
}

namespace detail {
/*! \brief Visits (logical flat index or -1 for padding, packed element index). */
template <typename F>
void for_each_packed(const PackedLayout& l, F&& f) {
  const std::int64_t D0 = l.dims[0], D1 = l.dims[1], D2 = l.dims[2], D3 = l.dims[3];
  const std::int64_t ob = l.outer_block, ib = l.inner_block;
  std::int64_t e = 0;
  for (std::int64_t t0 = 0; t0 < l.outer_tiles(); ++t0)
    for (std::int64_t t1 = 0; t1 < l.inner_tiles(); ++t1)
      for (std::int64_t a = 0; a < D2; ++a)
        for (std::int64_t b = 0; b < D3; ++b)
          for (std::int64_t i = 0; i < ob; ++i)
            for (std::int64_t j = 0; j < ib; ++j, ++e) {
              const std::int64_t d0 = t0 * ob + i, d1 = t1 * ib + j;
              f(d0 < D0 && d1 < D1 ? ((d0 * D1 + d1) * D2 + a) * D3 + b : -1, e);
            }
}
}  // namespace detail

inline std::vector<std::uint8_t> pack_layout(const Tensor& t, const PackedLayout& l) {
  if (Tensor::count(l.dims) != t.size()) throw ShapeError("tensor does not match layout dims");
  std::vector<std::uint8_t> out(static_cast<std::size_t>(l.bytes()), 0);
  const std::int64_t lo = bits::signed_min(l.bits), hi = bits::signed_max(l.bits);
  detail::for_each_packed(l, [&](std::int64_t src, std::int64_t e) {
    if (src < 0) return;
    const std::int32_t v = t[src];
    if (v < lo || v > hi)
      throw ShapeError("value " + std::to_string(v) + " does not fit " + std::to_string(l.bits) + "-bit " +
                       role_name(l.role) + " elements");
    store_element(out.data(), e, l.bits, v);
  });
  return out;
}

/*! \brief Packs t for `role`; rank-2 tensors are treated as [N, C, 1, 1]. */
inline std::pair<std::vector<std::uint8_t>, PackedLayout> pack_layout(const Tensor& t, const HardwareParams& p,
                                                                      Role role) {
  PackedLayout l = make_layout(t.dims(), p, role);
  return {pack_layout(t, l), l};
}

inline Tensor unpack_layout(const std::uint8_t* bytes, const PackedLayout& l, DType dtype,
                            std::vector<std::int64_t> dims = {}) {
  Tensor t(l.dims, dtype);
  detail::for_each_packed(l, [&](std::int64_t dst, std::int64_t e) {
    if (dst >= 0) t[dst] = load_element(bytes, e, l.bits);
  });
  return dims.empty() ? t : t.reshaped(std::move(dims));
}

inline Tensor unpack_layout(const std::vector<std::uint8_t>& bytes, const PackedLayout& l, DType dtype,
                            std::vector<std::int64_t> dims = {}) {
  if (static_cast<std::int64_t>(bytes.size()) < l.bytes()) throw ShapeError("packed buffer too small");
  return unpack_layout(bytes.data(), l, dtype, std::move(dims));
}

/*! \brief Bias vector as accumulator tiles, each channel value replicated over the batch rows. */
inline std::vector<std::uint8_t> pack_bias(const Tensor& bias, const HardwareParams& p) {
  const std::int64_t C = bias.size();
  const std::int64_t blocks = bits::ceil_div(C, p.block_out);
  std::vector<std::uint8_t> out(static_cast<std::size_t>(blocks * p.acc_tile_bytes()), 0);
  const std::int64_t lo = bits::signed_min(p.acc_bits), hi = bits::signed_max(p.acc_bits);
  for (std::int64_t c = 0; c < C; ++c) {
    if (bias[c] < lo || bias[c] > hi) throw ShapeError("bias value does not fit the accumulator width");
    const std::int64_t blk = c / p.block_out, j = c % p.block_out;
    for (std::int64_t b = 0; b < p.batch; ++b)
      store_element(out.data(), blk * p.acc_tile_elems() + b * p.block_out + j, p.acc_bits, bias[c]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Geometry and schedule legality

/*! \brief Packed extents of an operator on a design point. */
struct Geometry {
  std::int64_t NB = 1;  ///< batch tiles
  std::int64_t CI = 1;  ///< input channel blocks
  std::int64_t CO = 1;  ///< output channel blocks
  std::int64_t gi = 1;  ///< input blocks per group
  std::int64_t go = 1;  ///< output blocks per group
  std::int64_t OH = 1, OW = 1;
  std::int64_t QH = 1, QW = 1;  ///< tiled spatial extents (per-phase for transpose)
  std::int64_t JH = 1, JW = 1;  ///< most kernel taps per transpose phase
};

namespace detail {
inline std::int64_t floor_div(std::int64_t a, std::int64_t b) {
  return a >= 0 ? a / b : -((-a + b - 1) / b);
}
/*! \brief [lo, hi] of q with q*s + r - pad in [0, out); empty when lo > hi. */
inline std::pair<std::int64_t, std::int64_t> phase_range(std::int64_t r, std::int64_t s, std::int64_t pad,
                                                         std::int64_t out) {
  return {-floor_div(r - pad, s), floor_div(out - 1 + pad - r, s)};
}
inline std::int64_t phase_taps(std::int64_t r, std::int64_t k, std::int64_t s) {
  return r < k ? bits::ceil_div(k - r, s) : 0;
}
}  // namespace detail

inline Geometry geometry(const OperatorSpec& s, const HardwareParams& p) {
  Geometry g;
  g.NB = bits::ceil_div(s.N, p.batch);
  g.OH = s.out_h();
  g.OW = s.out_w();
  g.QH = g.OH;
  g.QW = g.OW;
  if (s.kind == OpKind::kElementwise || s.kind == OpKind::kMaxpool) {
    g.CI = g.CO = bits::ceil_div(s.IC, p.block_out);
    g.gi = 1;
    g.go = g.CO;
    return g;
  }
  if (s.kind == OpKind::kGroupedConv2d) {
    g.gi = bits::ceil_div(s.IC / s.groups, p.block_in);
    g.go = bits::ceil_div(s.OC / s.groups, p.block_out);
    g.CI = g.gi * s.groups;
    g.CO = g.go * s.groups;
  } else {
    g.CI = g.gi = bits::ceil_div(s.IC, p.block_in);
    g.CO = g.go = bits::ceil_div(s.OC, p.block_out);
  }
  if (s.kind == OpKind::kConv2dTranspose) {
    g.QH = g.QW = 0;
    for (std::int64_t r = 0; r < s.stride; ++r) {
      auto [hl, hh] = detail::phase_range(r, s.stride, s.pad, g.OH);
      auto [wl, wh] = detail::phase_range(r, s.stride, s.pad, g.OW);
      g.QH = std::max(g.QH, hh - hl + 1);
      g.QW = std::max(g.QW, wh - wl + 1);
    }
    g.JH = detail::phase_taps(0, s.KH, s.stride);
    g.JW = detail::phase_taps(0, s.KW, s.stride);
  }
  return g;
}

/*!
 * \brief Why an operator cannot run on the accelerator, or nullopt.
 *
 * With allow_channel_pad, channel and batch extents are zero-padded to
 * block multiples; grouped convolutions always need block-aligned groups.
 */
inline std::optional<std::string> unmappable_reason(const OperatorSpec& s, const HardwareParams& p,
                                                    bool allow_channel_pad = true) {
  try {
    s.validate();
  } catch (const Error& e) {
    return std::string(e.what());
  }
  const bool feature_only = s.kind == OpKind::kElementwise || s.kind == OpKind::kMaxpool;
  const std::int64_t cin_block = feature_only ? p.block_out : p.block_in;
  if (!allow_channel_pad) {
    if (s.N % p.batch != 0) return "batch " + std::to_string(s.N) + " not divisible by " + std::to_string(p.batch);
    if (s.IC % cin_block != 0)
      return "input channels " + std::to_string(s.IC) + " not divisible by block " + std::to_string(cin_block);
    if (s.OC % p.block_out != 0)
      return "output channels " + std::to_string(s.OC) + " not divisible by block " + std::to_string(p.block_out);
  }
  if (s.kind == OpKind::kGroupedConv2d && s.groups > 1) {
    if ((s.IC / s.groups) % p.block_in != 0 || (s.OC / s.groups) % p.block_out != 0)
      return "group width is not a multiple of the GEMM block";
  }
  if (s.kind == OpKind::kConv2d || s.kind == OpKind::kGroupedConv2d) {
    if (s.pad > 15) return "padding above 15 does not fit the load pad fields";
    if (s.pad >= s.KH || s.pad >= s.KW) return "padding must be smaller than the kernel";
  }
  if (s.kind == OpKind::kElementwise && s.alu_op == AluOp::kShr) return "tensor-tensor shift is host only";
  return std::nullopt;
}

/*! \brief SRAM entries one execution context needs, and the largest micro-kernel. */
struct Footprint {
  std::int64_t inp = 0, wgt = 0, acc = 0, uop = 0;
};

inline Footprint footprint(const OperatorSpec& s, const Schedule& sc, const HardwareParams& p) {
  const Geometry g = geometry(s, p);
  const std::int64_t th = std::min(sc.tile_h, g.QH), tw = std::min(sc.tile_w, g.QW);
  Footprint f;
  switch (s.kind) {
    case OpKind::kElementwise:
      f.acc = 2 * sc.tile_oc * th * tw;
      f.uop = 1;
      break;
    case OpKind::kMaxpool: {
      const std::int64_t iht = (th - 1) * s.stride + s.KH, iwt = (tw - 1) * s.stride + s.KW;
      f.acc = sc.tile_oc * (th * tw + iht * iwt);
      f.uop = sc.tile_oc;
      break;
    }
    case OpKind::kConv2dTranspose: {
      const std::int64_t iht = std::min(s.H, th + g.JH - 1), iwt = std::min(s.W, tw + g.JW - 1);
      f.inp = sc.tile_ic * iht * iwt;
      f.wgt = sc.tile_oc * sc.tile_ic * s.KH * s.KW;
      f.acc = sc.tile_oc * th * tw + (s.bias ? sc.tile_oc : 0);
      f.uop = sc.tile_oc * sc.tile_ic;
      break;
    }
    default: {
      const std::int64_t iht = (th - 1) * s.stride + s.KH, iwt = (tw - 1) * s.stride + s.KW;
      f.inp = sc.tile_ic * iht * iwt;
      f.wgt = sc.tile_oc * sc.tile_ic * s.KH * s.KW;
      f.acc = sc.tile_oc * th * tw + (s.bias ? sc.tile_oc : 0);
      f.uop = (sc.oc_unroll ? sc.tile_oc : th) * sc.tile_ic * s.KH * s.KW;
      break;
    }
  }
  if (s.bias) f.uop = std::max(f.uop, sc.tile_oc);
  return f;
}

/*! \brief Every reason the schedule cannot be lowered on p; empty when legal. */
inline std::vector<std::string> check_schedule(const OperatorSpec& s, const Schedule& sc, const HardwareParams& p) {
  std::vector<std::string> out;
  if (auto why = unmappable_reason(s, p)) {
    out.push_back(*why);
    return out;
  }
  const Geometry g = geometry(s, p);
  if (sc.vthreads != 1 && sc.vthreads != 2) out.push_back("vthreads must be 1 or 2");
  if (sc.tile_oc < 1 || sc.tile_ic < 1 || sc.tile_h < 1 || sc.tile_w < 1) out.push_back("tile extents must be positive");
  if (!out.empty()) return out;
  if (g.go % sc.tile_oc != 0) out.push_back("tile_oc must divide " + std::to_string(g.go) + " output blocks");
  if (g.gi % sc.tile_ic != 0) out.push_back("tile_ic must divide " + std::to_string(g.gi) + " input blocks");
  if (sc.tile_h > g.QH || sc.tile_w > g.QW) out.push_back("spatial tile exceeds the output extent");
  if (!out.empty()) return out;

  const Footprint f = footprint(s, sc, p);
  const std::int64_t vt = sc.vthreads;
  auto fit = [&](const char* name, std::int64_t need, std::int64_t depth) {
    if (need > depth / vt)
      out.push_back(std::string(name) + " buffer: tile needs " + std::to_string(need) + " entries, " +
                    std::to_string(depth / vt) + " available per context");
  };
  fit("inp", f.inp, p.inp_depth());
  fit("wgt", f.wgt, p.wgt_depth());
  fit("acc", f.acc, p.acc_depth());
  if (f.uop > p.uop_depth())
    out.push_back("uop buffer: micro-kernel of " + std::to_string(f.uop) + " entries exceeds depth " +
                  std::to_string(p.uop_depth()));

  const std::int64_t th = std::min(sc.tile_h, g.QH), tw = std::min(sc.tile_w, g.QW);
  const std::int64_t iwt = s.kind == OpKind::kConv2dTranspose ? std::min(s.W, tw + g.JW - 1)
                                                               : (tw - 1) * s.stride + s.KW;
  auto factor = [&](const char* name, std::int64_t v, int width) {
    if (!bits::fits_unsigned(static_cast<std::uint64_t>(v), width))
      out.push_back(std::string(name) + " " + std::to_string(v) + " exceeds its " + std::to_string(width) +
                    "-bit field");
  };
  factor("dst factor", tw, 11);
  if (s.kind != OpKind::kElementwise) factor("src factor", s.stride * iwt, 11);
  if (s.conv_like() && !sc.oc_unroll) {
    factor("dst factor", th * tw, 11);
    factor("wgt factor", sc.tile_ic * s.KH * s.KW, 10);
  }
  return out;
}

namespace detail {
/*! \brief Powers of two below n, then n itself. */
inline std::vector<std::int64_t> tile_values(std::int64_t n) {
  std::vector<std::int64_t> v;
  for (std::int64_t x = 1; x < n; x *= 2) v.push_back(x);
  v.push_back(n);
  return v;
}
/*! \brief Powers of two dividing n, then n itself. */
inline std::vector<std::int64_t> divisor_values(std::int64_t n) {
  std::vector<std::int64_t> v;
  for (std::int64_t x = 1; x < n; x *= 2)
    if (n % x == 0) v.push_back(x);
  v.push_back(n);
  return v;
}
}  // namespace detail

/*! \brief Knob values the schedule space draws from, per knob, in enumeration order. */
struct KnobValues {
  std::vector<std::int64_t> oc, ic, h, w;
  std::vector<int> vthreads{1, 2};
  std::vector<bool> oc_unroll{true, false};
};

inline KnobValues knob_values(const OperatorSpec& s, const HardwareParams& p) {
  const Geometry g = geometry(s, p);
  KnobValues k;
  k.oc = detail::divisor_values(g.go);
  k.ic = detail::divisor_values(g.gi);
  k.h = detail::tile_values(g.QH);
  k.w = detail::tile_values(g.QW);
  if (!s.conv_like()) k.oc_unroll = {true};
  return k;
}

/*! \brief Legal schedules in deterministic order; empty when the operator must fall back. */
inline std::vector<Schedule> legal_schedules(const OperatorSpec& s, const HardwareParams& p) {
  std::vector<Schedule> out;
  if (unmappable_reason(s, p)) return out;
  const KnobValues k = knob_values(s, p);
  for (auto oc : k.oc)
    for (auto ic : k.ic)
      for (auto h : k.h)
        for (auto w : k.w)
          for (int vt : k.vthreads)
            for (bool un : k.oc_unroll) {
              Schedule sc{oc, ic, h, w, vt, un};
              if (check_schedule(s, sc, p).empty()) out.push_back(sc);
            }
  return out;
}

// ---------------------------------------------------------------------------
// Lowered kernels

enum class Stage : std::uint8_t { kLoad = 0, kCompute = 1, kStore = 2 };

inline const char* stage_name(Stage s) {
  switch (s) {
    case Stage::kLoad: return "load";
    case Stage::kCompute: return "compute";
    case Stage::kStore: return "store";
  }
  return "?";
}

/*! \brief An instruction whose GEMM/ALU uop range is relative to micro-kernel `kernel`. */
struct KernelInsn {
  Instruction insn;
  int kernel = -1;
};

/*! \brief Consecutive instructions of one stage, one context and one output tile. */
struct InsnGroup {
  Stage stage = Stage::kLoad;
  int context = 0;
  int tile = 0;
  std::vector<KernelInsn> insns;
};

struct MicroKernel {
  std::string name;
  std::vector<MicroOp> uops;
};

/*! \brief A tensor's place in DRAM. base_tile is byte_offset / layout.tile_bytes(). */
struct DramRegion {
  std::string name;
  PackedLayout layout;
  std::int64_t byte_offset = 0;
  std::int64_t base_tile = 0;
};

struct LoweringStats {
  std::int64_t gemm_ops = 0;  ///< intrinsic invocations excluding resets
  std::int64_t alu_ops = 0;   ///< ALU tile operations
  std::int64_t instructions = 0;
  std::int64_t uops = 0;      ///< micro-op entries over all kernels
  std::int64_t tiles = 0;
};

struct LoweredKernel {
  OperatorSpec spec;
  Schedule sched;
  HardwareParams params;
  std::vector<InsnGroup> groups;
  std::vector<MicroKernel> kernels;
  std::map<std::string, DramRegion> regions;
  std::int64_t dram_bytes = 0;
  LoweringStats stats;
};

namespace detail {

inline std::uint32_t field(std::int64_t v, const char* what) {
  if (v < 0 || v > 0xFFFFFFFFll) throw InternalError(std::string("lowering produced bad ") + what);
  return static_cast<std::uint32_t>(v);
}

inline Instruction make_load(MemScope scope, std::int64_t sram, std::int64_t dram, std::int64_t y, std::int64_t x,
                             std::int64_t stride, std::int64_t pt = 0, std::int64_t pb = 0, std::int64_t pl = 0,
                             std::int64_t pr = 0) {
  LoadInsn l;
  l.mem_scope = scope;
  l.sram_base = field(sram, "sram_base");
  l.dram_base = field(dram, "dram_base");
  l.y_size = field(y, "y_size");
  l.x_size = field(x, "x_size");
  l.x_stride = field(stride, "x_stride");
  l.y_pad_top = field(pt, "pad");
  l.y_pad_bottom = field(pb, "pad");
  l.x_pad_left = field(pl, "pad");
  l.x_pad_right = field(pr, "pad");
  return Instruction{{}, l};
}

inline Instruction make_store(std::int64_t sram, std::int64_t dram, std::int64_t y, std::int64_t x,
                              std::int64_t stride) {
  StoreInsn s;
  s.mem_scope = MemScope::kOut;
  s.sram_base = field(sram, "sram_base");
  s.dram_base = field(dram, "dram_base");
  s.y_size = field(y, "y_size");
  s.x_size = field(x, "x_size");
  s.x_stride = field(stride, "x_stride");
  return Instruction{{}, s};
}

struct Nest {
  std::int64_t iter_out = 1, iter_in = 1, dst_out = 0, dst_in = 0, src_out = 0, src_in = 0;
};

inline void fill_nest(LoopNest& n, std::size_t n_uops, const Nest& x) {
  n.uop_bgn = 0;
  n.uop_end = field(static_cast<std::int64_t>(n_uops), "uop_end");
  n.iter_out = field(x.iter_out, "iter_out");
  n.iter_in = field(x.iter_in, "iter_in");
  n.dst_factor_out = field(x.dst_out, "dst_factor_out");
  n.dst_factor_in = field(x.dst_in, "dst_factor_in");
  n.src_factor_out = field(x.src_out, "src_factor_out");
  n.src_factor_in = field(x.src_in, "src_factor_in");
}

/*! \brief Collects groups, deduplicates micro-kernels and counts work. */
class Emitter {
 public:
  explicit Emitter(LoweredKernel& k) : k_(k) {}

  int kernel(const std::string& name, std::vector<MicroOp> uops) {
    auto it = index_.find(uops);
    if (it != index_.end()) return it->second;
    const int id = static_cast<int>(k_.kernels.size());
    k_.stats.uops += static_cast<std::int64_t>(uops.size());
    index_.emplace(uops, id);
    k_.kernels.push_back({name + "#" + std::to_string(id), std::move(uops)});
    return id;
  }

  void gemm(InsnGroup& g, const std::string& name, std::vector<MicroOp> uops, const Nest& x, bool reset,
            std::int64_t wgt_out = 0, std::int64_t wgt_in = 0) {
    GemmInsn gi;
    gi.reset = reset;
    fill_nest(gi, uops.size(), x);
    gi.wgt_factor_out = field(wgt_out, "wgt_factor_out");
    gi.wgt_factor_in = field(wgt_in, "wgt_factor_in");
    if (!reset) k_.stats.gemm_ops += x.iter_out * x.iter_in * static_cast<std::int64_t>(uops.size());
    const int id = kernel(name, std::move(uops));
    g.insns.push_back({Instruction{{}, gi}, id});
  }

  void alu(InsnGroup& g, const std::string& name, std::vector<MicroOp> uops, const Nest& x, AluOp op,
           bool use_imm, std::int32_t imm, bool reset = false) {
    AluInsn a;
    a.reset = reset;
    fill_nest(a, uops.size(), x);
    a.alu_opcode = op;
    a.use_imm = use_imm;
    a.imm = imm;
    k_.stats.alu_ops += x.iter_out * x.iter_in * static_cast<std::int64_t>(uops.size());
    const int id = kernel(name, std::move(uops));
    g.insns.push_back({Instruction{{}, a}, id});
  }

  void push(InsnGroup g) {
    if (g.insns.empty()) throw InternalError("empty instruction group");
    k_.stats.instructions += static_cast<std::int64_t>(g.insns.size());
    k_.groups.push_back(std::move(g));
  }

  /*! \brief bias add, shift, clamp over tiles [base, base + n_o * per_o). */
  void epilogue(InsnGroup& g, std::int64_t base, std::int64_t n_o, std::int64_t per_o, std::int64_t bias_base,
                const OperatorSpec& s, const HardwareParams& p) {
    const std::int64_t n = n_o * per_o;
    if (bias_base >= 0) {
      std::vector<MicroOp> u;
      for (std::int64_t o = 0; o < n_o; ++o)
        u.push_back({static_cast<std::uint32_t>(base + o * per_o), static_cast<std::uint32_t>(bias_base + o), 0});
      alu(g, "bias", std::move(u), {per_o, 1, 1, 0, 0, 0}, AluOp::kAdd, false, 0);
    }
    const std::vector<MicroOp> whole{{static_cast<std::uint32_t>(base), 0, 0}};
    if (s.shift != 0) alu(g, "shift", whole, {n, 1, 1, 0, 0, 0}, AluOp::kShr, true, s.shift);
    const ref::Epilogue e{s.shift, s.relu, p.inp_bits};
    alu(g, "clamp", whole, {n, 1, 1, 0, 0, 0}, AluOp::kMax, true, e.lo());
    alu(g, "clamp", whole, {n, 1, 1, 0, 0, 0}, AluOp::kMin, true, e.hi());
  }

 private:
  LoweredKernel& k_;
  std::map<std::vector<MicroOp>, int> index_;
};

inline std::uint32_t u(std::int64_t v) { return static_cast<std::uint32_t>(v); }

inline void add_region(LoweredKernel& k, const std::string& name, PackedLayout l) {
  const std::int64_t align = std::max<std::int64_t>(64, l.tile_bytes());
  const std::int64_t off = bits::ceil_div(k.dram_bytes, align) * align;
  k.regions[name] = DramRegion{name, l, off, off / l.tile_bytes()};
  k.dram_bytes = off + l.bytes();
}

inline LoweredKernel init_kernel(const OperatorSpec& s, const Schedule& sc, const HardwareParams& p) {
  auto problems = check_schedule(s, sc, p);
  if (!problems.empty()) throw ScheduleError(problems.front());
  LoweredKernel k;
  k.spec = s;
  k.sched = sc;
  k.params = p;
  const Geometry g = geometry(s, p);
  const bool feature_only = s.kind == OpKind::kElementwise || s.kind == OpKind::kMaxpool;
  add_region(k, "x", make_layout(s.input_dims(), p, feature_only ? Role::kAcc : Role::kInp));
  if (s.kind == OpKind::kElementwise) add_region(k, "x2", make_layout(s.input_dims(), p, Role::kAcc));
  if (auto wd = s.weight_dims()) {
    auto w = *wd;
    if (w.size() == 2) w = {w[0], w[1], 1, 1};
    add_region(k, "w", make_layout(w, p, Role::kWgt));
  }
  if (s.has_bias()) add_region(k, "bias", make_layout({p.batch, g.CO * p.block_out, 1, 1}, p, Role::kAcc));
  add_region(k, "y", make_layout(s.output_dims(), p, Role::kOut));
  return k;
}

/*! \brief Per-context SRAM bases. */
struct Bases {
  std::int64_t inp, wgt, acc;
};

inline Bases context_bases(int ctx, const Schedule& sc, const HardwareParams& p) {
  return {ctx * (p.inp_depth() / sc.vthreads), ctx * (p.wgt_depth() / sc.vthreads),
          ctx * (p.acc_depth() / sc.vthreads)};
}

}  // namespace detail

/*! \brief Lowers conv2d, grouped_conv2d and dense (the latter as a 1x1 convolution). */
inline LoweredKernel lower_grouped(const OperatorSpec& s, const Schedule& sc, const HardwareParams& p) {
  if (!s.conv_like()) throw ScheduleError(std::string(op_kind_name(s.kind)) + " is not a convolution");
  LoweredKernel k = detail::init_kernel(s, sc, p);
  detail::Emitter em(k);
  const Geometry g = geometry(s, p);
  const std::int64_t KH = s.KH, KW = s.KW, S = s.stride, P = s.pad, H = s.H, W = s.W, KK = KH * KW;
  const std::int64_t toc = sc.tile_oc, tic = sc.tile_ic;
  const std::int64_t th_full = std::min(sc.tile_h, g.OH), tw_full = std::min(sc.tile_w, g.OW);
  const std::int64_t x_base = k.regions.at("x").base_tile, w_base = k.regions.at("w").base_tile;
  const std::int64_t y_base = k.regions.at("y").base_tile;
  const std::int64_t b_base = s.has_bias() ? k.regions.at("bias").base_tile : -1;
  const std::int64_t steps = g.gi / tic;
  using detail::u;

  int tile = 0;
  for (std::int64_t nb = 0; nb < g.NB; ++nb)
    for (std::int64_t o0 = 0; o0 < g.CO; o0 += toc)
      for (std::int64_t h0 = 0; h0 < g.OH; h0 += th_full)
        for (std::int64_t w0 = 0; w0 < g.OW; w0 += tw_full, ++tile) {
          const int ctx = tile % sc.vthreads;
          const detail::Bases base = detail::context_bases(ctx, sc, p);
          const std::int64_t bias_sram = base.acc + toc * th_full * tw_full;
          const std::int64_t th = std::min(th_full, g.OH - h0), tw = std::min(tw_full, g.OW - w0);
          const std::int64_t per_o = th * tw;
          const std::int64_t iht = (th - 1) * S + KH, iwt = (tw - 1) * S + KW;
          const std::int64_t ih0 = h0 * S - P, iw0 = w0 * S - P;
          const std::int64_t pt = std::max<std::int64_t>(0, -ih0), pl = std::max<std::int64_t>(0, -iw0);
          const std::int64_t rows = std::min(H, ih0 + iht) - std::max<std::int64_t>(0, ih0);
          const std::int64_t cols = std::min(W, iw0 + iwt) - std::max<std::int64_t>(0, iw0);
          const std::int64_t pb = iht - pt - rows, pr = iwt - pl - cols;
          const std::int64_t group = o0 / g.go, ib0 = group * g.gi;

          for (std::int64_t st = 0; st < steps; ++st) {
            const std::int64_t ic0 = st * tic;
            InsnGroup L{Stage::kLoad, ctx, tile, {}};
            for (std::int64_t c = 0; c < tic; ++c) {
              const std::int64_t src =
                  x_base + ((nb * g.CI + ib0 + ic0 + c) * H + std::max<std::int64_t>(0, ih0)) * W +
                  std::max<std::int64_t>(0, iw0);
              L.insns.push_back({detail::make_load(MemScope::kInp, base.inp + c * iht * iwt, src, rows, cols, W, pt,
                                                   pb, pl, pr)});
            }
            L.insns.push_back({detail::make_load(MemScope::kWgt, base.wgt, w_base + (o0 * g.gi + ic0) * KK, toc,
                                                 tic * KK, g.gi * KK)});
            if (st == 0 && b_base >= 0)
              L.insns.push_back({detail::make_load(MemScope::kAcc, bias_sram, b_base + o0, 1, toc, toc)});
            em.push(std::move(L));

            InsnGroup C{Stage::kCompute, ctx, tile, {}};
            if (st == 0)
              em.gemm(C, "reset", {{u(base.acc), 0, 0}}, {toc * per_o, 1, 1, 0, 0, 0}, true);
            std::vector<MicroOp> uops;
            if (sc.oc_unroll) {
              for (std::int64_t o = 0; o < toc; ++o)
                for (std::int64_t c = 0; c < tic; ++c)
                  for (std::int64_t kh = 0; kh < KH; ++kh)
                    for (std::int64_t kw = 0; kw < KW; ++kw)
                      uops.push_back({u(base.acc + o * per_o), u(base.inp + c * iht * iwt + kh * iwt + kw),
                                      u(base.wgt + (o * tic + c) * KK + kh * KW + kw)});
              em.gemm(C, "conv", std::move(uops), {th, tw, tw, 1, S * iwt, S}, false);
            } else {
              for (std::int64_t y = 0; y < th; ++y)
                for (std::int64_t c = 0; c < tic; ++c)
                  for (std::int64_t kh = 0; kh < KH; ++kh)
                    for (std::int64_t kw = 0; kw < KW; ++kw)
                      uops.push_back({u(base.acc + y * tw), u(base.inp + c * iht * iwt + (y * S + kh) * iwt + kw),
                                      u(base.wgt + c * KK + kh * KW + kw)});
              em.gemm(C, "conv_rows", std::move(uops), {toc, tw, per_o, 1, 0, S}, false, tic * KK, 0);
            }
            if (st == steps - 1) em.epilogue(C, base.acc, toc, per_o, b_base >= 0 ? bias_sram : -1, s, p);
            em.push(std::move(C));
          }

          InsnGroup St{Stage::kStore, ctx, tile, {}};
          for (std::int64_t o = 0; o < toc; ++o)
            St.insns.push_back({detail::make_store(base.acc + o * per_o,
                                                   y_base + ((nb * g.CO + o0 + o) * g.OH + h0) * g.OW + w0, th, tw,
                                                   g.OW)});
          em.push(std::move(St));
        }
  k.stats.tiles = tile;
  return k;
}

/*!
 * \brief Lowers a transposed convolution by output phase.
 *
 * Outputs with (o + pad) % stride == r only receive kernel taps k with
 * k % stride == r, from input q - j where q = (o + pad) / stride and
 * k = r + j * stride. Each tap becomes one GEMM over exactly the output
 * rows and columns where its input index is in range, so no multiply
 * touches an inserted zero or a cropped output.
 */
inline LoweredKernel lower_transpose(const OperatorSpec& s, const Schedule& sc, const HardwareParams& p) {
  if (s.kind != OpKind::kConv2dTranspose) throw ScheduleError("lower_transpose needs conv2d_transpose");
  LoweredKernel k = detail::init_kernel(s, sc, p);
  detail::Emitter em(k);
  const Geometry g = geometry(s, p);
  const std::int64_t KH = s.KH, KW = s.KW, S = s.stride, P = s.pad, H = s.H, W = s.W, KK = KH * KW;
  const std::int64_t toc = sc.tile_oc, tic = sc.tile_ic;
  const std::int64_t th_full = std::min(sc.tile_h, g.QH), tw_full = std::min(sc.tile_w, g.QW);
  const std::int64_t x_base = k.regions.at("x").base_tile, w_base = k.regions.at("w").base_tile;
  const std::int64_t y_base = k.regions.at("y").base_tile;
  const std::int64_t b_base = s.has_bias() ? k.regions.at("bias").base_tile : -1;
  const std::int64_t steps = g.gi / tic;
  using detail::u;

  int tile = 0;
  for (std::int64_t nb = 0; nb < g.NB; ++nb)
    for (std::int64_t o0 = 0; o0 < g.CO; o0 += toc)
      for (std::int64_t rh = 0; rh < S; ++rh) {
        const auto [qh_lo, qh_hi] = detail::phase_range(rh, S, P, g.OH);
        const std::int64_t jh_n = detail::phase_taps(rh, KH, S);
        for (std::int64_t rw = 0; rw < S; ++rw) {
          const auto [qw_lo, qw_hi] = detail::phase_range(rw, S, P, g.OW);
          const std::int64_t jw_n = detail::phase_taps(rw, KW, S);
          for (std::int64_t qh0 = qh_lo; qh0 <= qh_hi; qh0 += th_full)
            for (std::int64_t qw0 = qw_lo; qw0 <= qw_hi; qw0 += tw_full, ++tile) {
              const int ctx = tile % sc.vthreads;
              const detail::Bases base = detail::context_bases(ctx, sc, p);
              const std::int64_t bias_sram = base.acc + toc * th_full * tw_full;
              const std::int64_t th = std::min(th_full, qh_hi - qh0 + 1), tw = std::min(tw_full, qw_hi - qw0 + 1);
              const std::int64_t per_o = th * tw;
              const std::int64_t ih_lo = std::max<std::int64_t>(0, qh0 - jh_n + 1);
              const std::int64_t iw_lo = std::max<std::int64_t>(0, qw0 - jw_n + 1);
              const std::int64_t iht = jh_n ? std::max<std::int64_t>(0, std::min(H, qh0 + th) - ih_lo) : 0;
              const std::int64_t iwt = jw_n ? std::max<std::int64_t>(0, std::min(W, qw0 + tw) - iw_lo) : 0;

              for (std::int64_t st = 0; st < steps; ++st) {
                const std::int64_t ic0 = st * tic;
                InsnGroup L{Stage::kLoad, ctx, tile, {}};
                if (iht > 0 && iwt > 0)
                  for (std::int64_t c = 0; c < tic; ++c)
                    L.insns.push_back({detail::make_load(MemScope::kInp, base.inp + c * iht * iwt,
                                                         x_base + ((nb * g.CI + ic0 + c) * H + ih_lo) * W + iw_lo,
                                                         iht, iwt, W)});
                L.insns.push_back({detail::make_load(MemScope::kWgt, base.wgt, w_base + (o0 * g.gi + ic0) * KK, toc,
                                                     tic * KK, g.gi * KK)});
                if (st == 0 && b_base >= 0)
                  L.insns.push_back({detail::make_load(MemScope::kAcc, bias_sram, b_base + o0, 1, toc, toc)});
                em.push(std::move(L));

                InsnGroup C{Stage::kCompute, ctx, tile, {}};
                if (st == 0) em.gemm(C, "reset", {{u(base.acc), 0, 0}}, {toc * per_o, 1, 1, 0, 0, 0}, true);
                for (std::int64_t jh = 0; jh < jh_n; ++jh)
                  for (std::int64_t jw = 0; jw < jw_n; ++jw) {
                    const std::int64_t a_lo = std::max(qh0, jh), a_hi = std::min(qh0 + th, H + jh);
                    const std::int64_t b_lo = std::max(qw0, jw), b_hi = std::min(qw0 + tw, W + jw);
                    if (a_lo >= a_hi || b_lo >= b_hi) continue;
                    const std::int64_t kh = rh + jh * S, kw = rw + jw * S;
                    std::vector<MicroOp> uops;
                    for (std::int64_t o = 0; o < toc; ++o)
                      for (std::int64_t c = 0; c < tic; ++c)
                        uops.push_back({u(base.acc + o * per_o + (a_lo - qh0) * tw + (b_lo - qw0)),
                                        u(base.inp + c * iht * iwt + (a_lo - jh - ih_lo) * iwt + (b_lo - jw - iw_lo)),
                                        u(base.wgt + (o * tic + c) * KK + kh * KW + kw)});
                    em.gemm(C, "tap", std::move(uops), {a_hi - a_lo, b_hi - b_lo, tw, 1, iwt, 1}, false);
                  }
                // A tile with no tap in range keeps each step non-empty with an idempotent reset.
                if (C.insns.empty()) em.gemm(C, "reset", {{u(base.acc), 0, 0}}, {toc * per_o, 1, 1, 0, 0, 0}, true);
                if (st == steps - 1) em.epilogue(C, base.acc, toc, per_o, b_base >= 0 ? bias_sram : -1, s, p);
                em.push(std::move(C));
              }

              InsnGroup St{Stage::kStore, ctx, tile, {}};
              for (std::int64_t o = 0; o < toc; ++o)
                for (std::int64_t a = 0; a < th; ++a) {
                  const std::int64_t oh = (qh0 + a) * S + rh - P, ow = qw0 * S + rw - P;
                  St.insns.push_back({detail::make_store(base.acc + o * per_o + a * tw,
                                                         y_base + ((nb * g.CO + o0 + o) * g.OH + oh) * g.OW + ow, tw,
                                                         1, S)});
                }
              em.push(std::move(St));
            }
        }
      }
  k.stats.tiles = tile;
  return k;
}

namespace detail {

inline LoweredKernel lower_elementwise(const OperatorSpec& s, const Schedule& sc, const HardwareParams& p) {
  LoweredKernel k = init_kernel(s, sc, p);
  Emitter em(k);
  const Geometry g = geometry(s, p);
  const std::int64_t toc = sc.tile_oc, H = s.H, W = s.W;
  const std::int64_t th_full = std::min(sc.tile_h, g.OH), tw_full = std::min(sc.tile_w, g.OW);
  const std::int64_t xa = k.regions.at("x").base_tile, xb = k.regions.at("x2").base_tile;
  const std::int64_t y_base = k.regions.at("y").base_tile;
  int tile = 0;
  for (std::int64_t nb = 0; nb < g.NB; ++nb)
    for (std::int64_t o0 = 0; o0 < g.CO; o0 += toc)
      for (std::int64_t h0 = 0; h0 < H; h0 += th_full)
        for (std::int64_t w0 = 0; w0 < W; w0 += tw_full, ++tile) {
          const int ctx = tile % sc.vthreads;
          const Bases base = context_bases(ctx, sc, p);
          const std::int64_t a_sram = base.acc, b_sram = base.acc + toc * th_full * tw_full;
          const std::int64_t th = std::min(th_full, H - h0), tw = std::min(tw_full, W - w0), per_o = th * tw;
          InsnGroup L{Stage::kLoad, ctx, tile, {}};
          for (std::int64_t o = 0; o < toc; ++o) {
            const std::int64_t off = ((nb * g.CI + o0 + o) * H + h0) * W + w0;
            L.insns.push_back({make_load(MemScope::kAcc, a_sram + o * per_o, xa + off, th, tw, W)});
            L.insns.push_back({make_load(MemScope::kAcc, b_sram + o * per_o, xb + off, th, tw, W)});
          }
          em.push(std::move(L));
          InsnGroup C{Stage::kCompute, ctx, tile, {}};
          em.alu(C, "eltwise", {{u(a_sram), u(b_sram), 0}}, {toc * per_o, 1, 1, 0, 1, 0}, s.alu_op, false, 0);
          em.epilogue(C, a_sram, toc, per_o, -1, s, p);
          em.push(std::move(C));
          InsnGroup St{Stage::kStore, ctx, tile, {}};
          for (std::int64_t o = 0; o < toc; ++o)
            St.insns.push_back({make_store(a_sram + o * per_o, y_base + ((nb * g.CO + o0 + o) * H + h0) * W + w0, th,
                                           tw, W)});
          em.push(std::move(St));
        }
  k.stats.tiles = tile;
  return k;
}

inline LoweredKernel lower_maxpool(const OperatorSpec& s, const Schedule& sc, const HardwareParams& p) {
  LoweredKernel k = init_kernel(s, sc, p);
  Emitter em(k);
  const Geometry g = geometry(s, p);
  const std::int64_t toc = sc.tile_oc, H = s.H, W = s.W, S = s.stride;
  const std::int64_t th_full = std::min(sc.tile_h, g.OH), tw_full = std::min(sc.tile_w, g.OW);
  const std::int64_t x_base = k.regions.at("x").base_tile, y_base = k.regions.at("y").base_tile;
  int tile = 0;
  for (std::int64_t nb = 0; nb < g.NB; ++nb)
    for (std::int64_t o0 = 0; o0 < g.CO; o0 += toc)
      for (std::int64_t h0 = 0; h0 < g.OH; h0 += th_full)
        for (std::int64_t w0 = 0; w0 < g.OW; w0 += tw_full, ++tile) {
          const int ctx = tile % sc.vthreads;
          const Bases base = context_bases(ctx, sc, p);
          const std::int64_t th = std::min(th_full, g.OH - h0), tw = std::min(tw_full, g.OW - w0), per_o = th * tw;
          const std::int64_t iht = (th - 1) * S + s.KH, iwt = (tw - 1) * S + s.KW;
          const std::int64_t out_sram = base.acc, in_sram = base.acc + toc * th_full * tw_full;
          InsnGroup L{Stage::kLoad, ctx, tile, {}};
          for (std::int64_t o = 0; o < toc; ++o)
            L.insns.push_back({make_load(MemScope::kAcc, in_sram + o * iht * iwt,
                                         x_base + ((nb * g.CI + o0 + o) * H + h0 * S) * W + w0 * S, iht, iwt, W)});
          em.push(std::move(L));
          InsnGroup C{Stage::kCompute, ctx, tile, {}};
          em.alu(C, "pool_init", {{u(out_sram), 0, 0}}, {toc * per_o, 1, 1, 0, 0, 0}, AluOp::kMin, false, 0, true);
          for (std::int64_t kh = 0; kh < s.KH; ++kh)
            for (std::int64_t kw = 0; kw < s.KW; ++kw) {
              std::vector<MicroOp> uops;
              for (std::int64_t o = 0; o < toc; ++o)
                uops.push_back({u(out_sram + o * per_o), u(in_sram + o * iht * iwt + kh * iwt + kw), 0});
              const bool first = kh == 0 && kw == 0;
              em.alu(C, "pool", std::move(uops), {th, tw, tw, 1, S * iwt, S}, first ? AluOp::kAdd : AluOp::kMax,
                     false, 0);
            }
          em.epilogue(C, out_sram, toc, per_o, -1, s, p);
          em.push(std::move(C));
          InsnGroup St{Stage::kStore, ctx, tile, {}};
          for (std::int64_t o = 0; o < toc; ++o)
            St.insns.push_back({make_store(out_sram + o * per_o,
                                           y_base + ((nb * g.CO + o0 + o) * g.OH + h0) * g.OW + w0, th, tw, g.OW)});
          em.push(std::move(St));
        }
  k.stats.tiles = tile;
  return k;
}

}  // namespace detail

/*! \brief Lowers any supported operator kind. Throws ScheduleError for illegal schedules. */
inline LoweredKernel lower(const OperatorSpec& s, const Schedule& sc, const HardwareParams& p) {
  switch (s.kind) {
    case OpKind::kConv2d: case OpKind::kGroupedConv2d: case OpKind::kDense: return lower_grouped(s, sc, p);
    case OpKind::kConv2dTranspose: return lower_transpose(s, sc, p);
    case OpKind::kElementwise: return detail::lower_elementwise(s, sc, p);
    case OpKind::kMaxpool: return detail::lower_maxpool(s, sc, p);
  }
  throw ScheduleError("unsupported operator kind");
}

// ---------------------------------------------------------------------------
// Operator data

/*! \brief Tensors an operator consumes. x2 is the second elementwise operand. */
struct OperatorInputs {
  Tensor x;
  std::optional<Tensor> w;
  std::optional<Tensor> bias;
  std::optional<Tensor> x2;
};

/*! \brief Host reference result of an operator: the verification oracle and the fallback path. */
inline Tensor reference(const OperatorSpec& s, const OperatorInputs& in, int out_bits = 8) {
  const ref::Epilogue e{s.shift, s.relu, out_bits};
  Tensor acc;
  switch (s.kind) {
    case OpKind::kConv2d: acc = ref::conv2d_ref(in.x, in.w.value(), s.stride, s.pad); break;
    case OpKind::kGroupedConv2d: acc = ref::grouped_conv2d_ref(in.x, in.w.value(), s.stride, s.pad, s.groups); break;
    case OpKind::kConv2dTranspose: acc = ref::conv2d_transpose_ref(in.x, in.w.value(), s.stride, s.pad); break;
    case OpKind::kDense: acc = ref::dense_ref(in.x, in.w.value()); break;
    case OpKind::kElementwise: acc = ref::alu_ref(s.alu_op, in.x.widened(), in.x2.value().widened()); break;
    case OpKind::kMaxpool: acc = ref::maxpool2d_ref(in.x, s.KH, s.stride); break;
  }
  return ref::epilogue_ref(acc, s.has_bias() ? in.bias : std::nullopt, e);
}

/*! \brief Random operands in the signed range of `bits`; bias magnitudes stay below 2^12. */
inline OperatorInputs random_inputs(const OperatorSpec& s, Rng& rng, int bits = 8) {
  const std::int64_t lo = bits::signed_min(bits), hi = bits::signed_max(bits);
  OperatorInputs in;
  in.x = Tensor::random(s.input_dims(), DType::kI8, rng, lo, hi);
  if (auto wd = s.weight_dims()) in.w = Tensor::random(*wd, DType::kI8, rng, lo, hi);
  if (s.has_bias()) in.bias = Tensor::random({s.OC}, DType::kI32, rng, -4096, 4096);
  if (s.kind == OpKind::kElementwise) in.x2 = Tensor::random(s.input_dims(), DType::kI8, rng, lo, hi);
  return in;
}

/*! \brief DRAM image holding every packed operand of k, outputs zeroed. */
inline Dram build_dram(const LoweredKernel& k, const OperatorInputs& in) {
  Dram dram(static_cast<std::size_t>(k.dram_bytes), 0);
  auto place = [&](const std::string& name, const std::vector<std::uint8_t>& bytes) {
    const DramRegion& r = k.regions.at(name);
    std::copy(bytes.begin(), bytes.end(), dram.begin() + r.byte_offset);
  };
  place("x", pack_layout(in.x, k.regions.at("x").layout));
  if (k.regions.count("x2")) place("x2", pack_layout(in.x2.value(), k.regions.at("x2").layout));
  if (k.regions.count("w")) place("w", pack_layout(in.w.value(), k.regions.at("w").layout));
  if (k.regions.count("bias")) place("bias", pack_bias(in.bias.value(), k.params));
  return dram;
}

inline Tensor read_output(const LoweredKernel& k, const Dram& dram) {
  const DramRegion& r = k.regions.at("y");
  if (r.byte_offset + r.layout.bytes() > static_cast<std::int64_t>(dram.size())) throw ShapeError("DRAM image too small");
  return unpack_layout(dram.data() + r.byte_offset, r.layout, DType::kI8, k.spec.output_dims());
}

}  // namespace vta
