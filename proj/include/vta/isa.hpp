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
 * \file isa.hpp
 * \brief The two-level ISA: 128-bit task instructions and 32-bit micro-ops.
 *
 * Instruction word layout (little-endian, LSB first):
 *   bits [2:0]  opcode
 *   bits [6:3]  pop_prev, pop_next, push_prev, push_next
 *   then the variant fields in declaration order. A field that would
 *   straddle bit 64 starts at bit 64 instead; unused bits must be zero.
 *
 * Micro-op word: acc_idx [10:0], inp_idx [21:11], wgt_idx [31:22].
 */
#pragma once

#include <array>
#include <cstdint>
#include <cstring>
#include <optional>
#include <string>
#include <string_view>
#include <type_traits>
#include <variant>
#include <vector>

#include "common.hpp"
#include "config.hpp"

namespace vta {

enum class Opcode : std::uint8_t { kLoad = 0, kStore = 1, kGemm = 2, kFinish = 3, kAlu = 4 };
enum class MemScope : std::uint8_t { kUop = 0, kWgt = 1, kInp = 2, kAcc = 3, kOut = 4 };
enum class AluOp : std::uint8_t { kMin = 0, kMax = 1, kAdd = 2, kShr = 3 };

/*! \brief Pipeline stage that executes an instruction. */
enum class Module : std::uint8_t { kLoad = 0, kCompute = 1, kStore = 2 };

/*! \brief Dependency token queues between adjacent modules. */
enum class Queue : std::uint8_t { kL2C = 0, kC2L = 1, kC2S = 2, kS2C = 3 };
inline constexpr int kNumQueues = 4;

inline const char* opcode_name(Opcode op) {
  switch (op) {
    case Opcode::kLoad: return "LOAD";
    case Opcode::kStore: return "STORE";
    case Opcode::kGemm: return "GEMM";
    case Opcode::kFinish: return "FINISH";
    case Opcode::kAlu: return "ALU";
  }
  return "?";
}

inline const char* scope_name(MemScope s) {
  switch (s) {
    case MemScope::kUop: return "UOP";
    case MemScope::kWgt: return "WGT";
    case MemScope::kInp: return "INP";
    case MemScope::kAcc: return "ACC";
    case MemScope::kOut: return "OUT";
  }
  return "?";
}

inline const char* alu_name(AluOp op) {
  switch (op) {
    case AluOp::kMin: return "MIN";
    case AluOp::kMax: return "MAX";
    case AluOp::kAdd: return "ADD";
    case AluOp::kShr: return "SHR";
  }
  return "?";
}

inline const char* module_name(Module m) {
  switch (m) {
    case Module::kLoad: return "load";
    case Module::kCompute: return "compute";
    case Module::kStore: return "store";
  }
  return "?";
}

inline const char* queue_name(Queue q) {
  switch (q) {
    case Queue::kL2C: return "l2c";
    case Queue::kC2L: return "c2l";
    case Queue::kC2S: return "c2s";
    case Queue::kS2C: return "s2c";
  }
  return "?";
}

struct DepFlags {
  bool pop_prev = false;
  bool pop_next = false;
  bool push_prev = false;
  bool push_next = false;
  bool operator==(const DepFlags&) const = default;
};

/*! \brief 2D strided DMA between DRAM and one SRAM scope. */
struct MemFields {
  MemScope mem_scope = MemScope::kUop;
  std::uint32_t sram_base = 0;
  std::uint32_t dram_base = 0;
  std::uint32_t y_size = 0;
  std::uint32_t x_size = 0;
  std::uint32_t x_stride = 0;
  std::uint32_t y_pad_top = 0;
  std::uint32_t y_pad_bottom = 0;
  std::uint32_t x_pad_left = 0;
  std::uint32_t x_pad_right = 0;
  bool operator==(const MemFields&) const = default;
};

struct LoadInsn : MemFields {
  bool operator==(const LoadInsn&) const = default;
};

struct StoreInsn : MemFields {
  bool operator==(const StoreInsn&) const = default;
};

/*! \brief Micro-coded loop nest shared by GEMM and ALU instructions. */
struct LoopNest {
  bool reset = false;
  std::uint32_t uop_bgn = 0;
  std::uint32_t uop_end = 1;
  std::uint32_t iter_out = 1;
  std::uint32_t iter_in = 1;
  std::uint32_t dst_factor_out = 0;
  std::uint32_t dst_factor_in = 0;
  std::uint32_t src_factor_out = 0;
  std::uint32_t src_factor_in = 0;
  bool operator==(const LoopNest&) const = default;
};

struct GemmInsn : LoopNest {
  std::uint32_t wgt_factor_out = 0;
  std::uint32_t wgt_factor_in = 0;
  bool operator==(const GemmInsn&) const = default;
};

struct FinishInsn {
  bool operator==(const FinishInsn&) const = default;
};

struct AluInsn : LoopNest {
  AluOp alu_opcode = AluOp::kMin;
  bool use_imm = false;
  std::int32_t imm = 0;
  bool operator==(const AluInsn&) const = default;
};

/*! Alternative index equals the opcode value. */
using InsnBody = std::variant<LoadInsn, StoreInsn, GemmInsn, FinishInsn, AluInsn>;

struct Instruction {
  DepFlags deps;
  InsnBody body;

  Opcode opcode() const { return static_cast<Opcode>(body.index()); }
  bool operator==(const Instruction&) const = default;

  template <typename T>
  const T& as() const { return std::get<T>(body); }
  template <typename T>
  T& as() { return std::get<T>(body); }
  template <typename T>
  bool is() const { return std::holds_alternative<T>(body); }

  /*! \return the shared DMA fields of a LOAD or STORE, nullptr otherwise. */
  const MemFields* mem() const {
    if (auto* l = std::get_if<LoadInsn>(&body)) return l;
    if (auto* s = std::get_if<StoreInsn>(&body)) return s;
    return nullptr;
  }
  const LoopNest* nest() const {
    if (auto* g = std::get_if<GemmInsn>(&body)) return g;
    if (auto* a = std::get_if<AluInsn>(&body)) return a;
    return nullptr;
  }
  LoopNest* nest() {
    if (auto* g = std::get_if<GemmInsn>(&body)) return g;
    if (auto* a = std::get_if<AluInsn>(&body)) return a;
    return nullptr;
  }
};

struct MicroOp {
  std::uint32_t acc_idx = 0;
  std::uint32_t inp_idx = 0;
  std::uint32_t wgt_idx = 0;
  auto operator<=>(const MicroOp&) const = default;
};

inline constexpr int kAccIdxBits = 11;
inline constexpr int kInpIdxBits = 11;
inline constexpr int kWgtIdxBits = 10;

/*!
 * \brief Visits (name, field, width, is_signed) for each variant field in encoding order.
 *
 * The same field list drives the binary codec and the assembler, so both
 * always agree on names, order and widths.
 */
template <typename M, typename F>
  requires std::is_base_of_v<MemFields, std::remove_const_t<M>>
void for_each_field(M& m, F&& f) {
  f("mem_scope", m.mem_scope, 3, false);
  f("sram_base", m.sram_base, 16, false);
  f("dram_base", m.dram_base, 32, false);
  f("y_size", m.y_size, 16, false);
  f("x_size", m.x_size, 16, false);
  f("x_stride", m.x_stride, 16, false);
  f("y_pad_top", m.y_pad_top, 4, false);
  f("y_pad_bottom", m.y_pad_bottom, 4, false);
  f("x_pad_left", m.x_pad_left, 4, false);
  f("x_pad_right", m.x_pad_right, 4, false);
}

template <typename N, typename F>
void for_each_nest_field(N& n, F&& f) {
  f("reset", n.reset, 1, false);
  f("uop_bgn", n.uop_bgn, 13, false);
  f("uop_end", n.uop_end, 14, false);
  f("iter_out", n.iter_out, 14, false);
  f("iter_in", n.iter_in, 14, false);
  f("dst_factor_out", n.dst_factor_out, 11, false);
  f("dst_factor_in", n.dst_factor_in, 11, false);
  f("src_factor_out", n.src_factor_out, 11, false);
  f("src_factor_in", n.src_factor_in, 11, false);
}

template <typename G, typename F>
  requires std::is_same_v<std::remove_const_t<G>, GemmInsn>
void for_each_field(G& g, F&& f) {
  for_each_nest_field(g, f);
  f("wgt_factor_out", g.wgt_factor_out, 10, false);
  f("wgt_factor_in", g.wgt_factor_in, 10, false);
}

template <typename A, typename F>
  requires std::is_same_v<std::remove_const_t<A>, AluInsn>
void for_each_field(A& a, F&& f) {
  for_each_nest_field(a, f);
  f("alu_opcode", a.alu_opcode, 2, false);
  f("use_imm", a.use_imm, 1, false);
  f("imm", a.imm, 16, true);
}

template <typename X, typename F>
  requires std::is_same_v<std::remove_const_t<X>, FinishInsn>
void for_each_field(X&, F&&) {}

namespace detail {

template <typename T>
std::int64_t field_value(const T& v) {
  if constexpr (std::is_enum_v<T>) {
    return static_cast<std::int64_t>(static_cast<std::underlying_type_t<T>>(v));
  } else {
    return static_cast<std::int64_t>(v);
  }
}

template <typename T>
void set_field(T& dst, std::int64_t v) {
  if constexpr (std::is_enum_v<T>) {
    dst = static_cast<T>(static_cast<std::underlying_type_t<T>>(v));
  } else if constexpr (std::is_same_v<T, bool>) {
    dst = v != 0;
  } else {
    dst = static_cast<T>(v);
  }
}

inline bool field_fits(std::int64_t v, int width, bool is_signed) {
  return is_signed ? bits::fits_signed(v, width)
                   : (v >= 0 && bits::fits_unsigned(static_cast<std::uint64_t>(v), width));
}

class BitWriter {
 public:
  void put(const char* name, std::int64_t v, int width, bool is_signed) {
    if (!field_fits(v, width, is_signed))
      throw EncodeError(name, std::string("field ") + name + "=" + std::to_string(v) +
                                  " does not fit in " + std::to_string(width) + " bits");
    advance(width);
    const std::uint64_t raw = static_cast<std::uint64_t>(v) & bits::mask(width);
    words_[pos_ / 64] |= raw << (pos_ % 64);
    pos_ += width;
  }
  std::array<std::uint64_t, 2> words() const { return words_; }

 private:
  void advance(int width) {
    if (pos_ < 64 && pos_ + width > 64) pos_ = 64;
    VTA_CHECK(pos_ + width <= 128, "instruction layout exceeds 128 bits");
  }
  std::array<std::uint64_t, 2> words_{0, 0};
  int pos_ = 0;
};

class BitReader {
 public:
  explicit BitReader(std::array<std::uint64_t, 2> w) : words_(w) {}
  std::int64_t get(int width, bool is_signed) {
    if (pos_ < 64 && pos_ + width > 64) pos_ = 64;
    const std::uint64_t raw = (words_[pos_ / 64] >> (pos_ % 64)) & bits::mask(width);
    used_[pos_ / 64] |= bits::mask(width) << (pos_ % 64);
    pos_ += width;
    return is_signed ? bits::wrap(static_cast<std::int64_t>(raw), width) : static_cast<std::int64_t>(raw);
  }
  /*! \return true when some bit outside the decoded fields is set. */
  bool has_stray_bits() const { return (words_[0] & ~used_[0]) || (words_[1] & ~used_[1]); }

 private:
  std::array<std::uint64_t, 2> words_;
  std::array<std::uint64_t, 2> used_{0, 0};
  int pos_ = 0;
};

}  // namespace detail

/*! \return every invariant of i that its field widths do not already guarantee. */
inline std::vector<std::string> check_instruction(const Instruction& i) {
  std::vector<std::string> out;
  if (const MemFields* m = i.mem()) {
    if (detail::field_value(m->mem_scope) > 4) out.push_back("mem_scope out of range");
    if (i.is<LoadInsn>() && m->mem_scope == MemScope::kOut) out.push_back("LOAD cannot target the OUT scope");
    if (i.is<StoreInsn>()) {
      if (m->mem_scope != MemScope::kOut) out.push_back("STORE must read the OUT scope");
      if (m->y_pad_top || m->y_pad_bottom || m->x_pad_left || m->x_pad_right)
        out.push_back("STORE does not support padding");
    }
  }
  if (const LoopNest* n = i.nest()) {
    if (n->uop_bgn >= n->uop_end) out.push_back("uop_bgn must be below uop_end");
    if (n->iter_out < 1 || n->iter_in < 1) out.push_back("loop extents must be at least 1");
  }
  return out;
}

/*! \brief Packs an instruction into 16 little-endian bytes. */
inline std::array<std::uint8_t, 16> encode_instruction(const Instruction& i) {
  detail::BitWriter w;
  w.put("opcode", static_cast<std::int64_t>(i.body.index()), 3, false);
  w.put("pop_prev", i.deps.pop_prev, 1, false);
  w.put("pop_next", i.deps.pop_next, 1, false);
  w.put("push_prev", i.deps.push_prev, 1, false);
  w.put("push_next", i.deps.push_next, 1, false);
  std::visit(
      [&](const auto& body) {
        for_each_field(body, [&](const char* name, const auto& field, int width, bool is_signed) {
          w.put(name, detail::field_value(field), width, is_signed);
        });
      },
      i.body);
  auto inv = check_instruction(i);
  if (!inv.empty()) throw ValidationError(std::string(opcode_name(i.opcode())) + ": " + inv.front());
  std::array<std::uint8_t, 16> out{};
  const auto words = w.words();
  for (int b = 0; b < 16; ++b) out[b] = static_cast<std::uint8_t>(words[b / 8] >> (8 * (b % 8)));
  return out;
}

inline Instruction decode_instruction(const std::uint8_t* bytes) {
  std::array<std::uint64_t, 2> words{0, 0};
  for (int b = 0; b < 16; ++b) words[b / 8] |= std::uint64_t{bytes[b]} << (8 * (b % 8));
  detail::BitReader r(words);
  const auto opcode = r.get(3, false);
  if (opcode > 4) throw DecodeError("unknown opcode " + std::to_string(opcode));
  Instruction i;
  i.deps.pop_prev = r.get(1, false);
  i.deps.pop_next = r.get(1, false);
  i.deps.push_prev = r.get(1, false);
  i.deps.push_next = r.get(1, false);
  switch (opcode) {
    case 0: i.body = LoadInsn{}; break;
    case 1: i.body = StoreInsn{}; break;
    case 2: i.body = GemmInsn{}; break;
    case 3: i.body = FinishInsn{}; break;
    default: i.body = AluInsn{}; break;
  }
  std::visit(
      [&](auto& body) {
        for_each_field(body, [&](const char*, auto& field, int width, bool is_signed) {
          detail::set_field(field, r.get(width, is_signed));
        });
      },
      i.body);
  if (r.has_stray_bits()) throw DecodeError("reserved instruction bits are set");
  auto inv = check_instruction(i);
  if (!inv.empty()) throw ValidationError(std::string(opcode_name(i.opcode())) + ": " + inv.front());
  return i;
}

inline Instruction decode_instruction(const std::array<std::uint8_t, 16>& bytes) {
  return decode_instruction(bytes.data());
}

inline std::uint32_t encode_uop_word(const MicroOp& u) {
  if (!bits::fits_unsigned(u.acc_idx, kAccIdxBits)) throw EncodeError("acc_idx", "acc_idx does not fit in 11 bits");
  if (!bits::fits_unsigned(u.inp_idx, kInpIdxBits)) throw EncodeError("inp_idx", "inp_idx does not fit in 11 bits");
  if (!bits::fits_unsigned(u.wgt_idx, kWgtIdxBits)) throw EncodeError("wgt_idx", "wgt_idx does not fit in 10 bits");
  return u.acc_idx | (u.inp_idx << kAccIdxBits) | (u.wgt_idx << (kAccIdxBits + kInpIdxBits));
}

inline MicroOp decode_uop_word(std::uint32_t w) {
  return {w & 0x7FFu, (w >> 11) & 0x7FFu, (w >> 22) & 0x3FFu};
}

inline std::array<std::uint8_t, 4> encode_uop(const MicroOp& u) {
  const std::uint32_t w = encode_uop_word(u);
  return {static_cast<std::uint8_t>(w), static_cast<std::uint8_t>(w >> 8), static_cast<std::uint8_t>(w >> 16),
          static_cast<std::uint8_t>(w >> 24)};
}

inline MicroOp decode_uop(const std::uint8_t* b) {
  return decode_uop_word(std::uint32_t{b[0]} | (std::uint32_t{b[1]} << 8) | (std::uint32_t{b[2]} << 16) |
                         (std::uint32_t{b[3]} << 24));
}

/*! \brief Module that executes i. UOP-scope loads run on the compute module. */
inline Module module_of(const Instruction& i) {
  switch (i.opcode()) {
    case Opcode::kLoad:
      return i.as<LoadInsn>().mem_scope == MemScope::kUop ? Module::kCompute : Module::kLoad;
    case Opcode::kStore:
      return Module::kStore;
    default:
      return Module::kCompute;
  }
}

/*! \brief Queues an instruction pops from and pushes to, given its module. */
struct TokenOps {
  std::vector<Queue> pops;
  std::vector<Queue> pushes;
  std::vector<std::string> illegal;  ///< flags that have no queue on this module
};

inline TokenOps token_ops(const Instruction& i) {
  TokenOps t;
  const DepFlags& d = i.deps;
  switch (module_of(i)) {
    case Module::kLoad:
      if (d.pop_prev) t.illegal.push_back("pop_prev");
      if (d.push_prev) t.illegal.push_back("push_prev");
      if (d.pop_next) t.pops.push_back(Queue::kC2L);
      if (d.push_next) t.pushes.push_back(Queue::kL2C);
      break;
    case Module::kCompute:
      if (d.pop_prev) t.pops.push_back(Queue::kL2C);
      if (d.pop_next) t.pops.push_back(Queue::kS2C);
      if (d.push_prev) t.pushes.push_back(Queue::kC2L);
      if (d.push_next) t.pushes.push_back(Queue::kC2S);
      break;
    case Module::kStore:
      if (d.pop_next) t.illegal.push_back("pop_next");
      if (d.push_next) t.illegal.push_back("push_next");
      if (d.pop_prev) t.pops.push_back(Queue::kC2S);
      if (d.push_prev) t.pushes.push_back(Queue::kS2C);
      break;
  }
  return t;
}

/*! \brief SRAM capacity in tiles (micro-ops for UOP) of a scope. OUT mirrors ACC. */
inline std::int64_t scope_depth(const HardwareParams& p, MemScope s) {
  switch (s) {
    case MemScope::kUop: return p.uop_depth();
    case MemScope::kWgt: return p.wgt_depth();
    case MemScope::kInp: return p.inp_depth();
    case MemScope::kAcc: return p.acc_depth();
    case MemScope::kOut: return p.acc_depth();
  }
  return 0;
}

inline std::int64_t scope_tile_bytes(const HardwareParams& p, MemScope s) {
  switch (s) {
    case MemScope::kUop: return kUopBytes;
    case MemScope::kWgt: return p.wgt_tile_bytes();
    case MemScope::kInp: return p.inp_tile_bytes();
    case MemScope::kAcc: return p.acc_tile_bytes();
    case MemScope::kOut: return p.out_tile_bytes();
  }
  return 0;
}

/*! \brief A complete accelerator program: task instructions plus the micro-op segment. */
struct Program {
  std::vector<Instruction> insns;
  std::vector<MicroOp> uops;
  bool operator==(const Program&) const = default;
};

inline constexpr std::uint32_t kProgramVersion = 1;

namespace detail {
inline void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int b = 0; b < 4; ++b) out.push_back(static_cast<std::uint8_t>(v >> (8 * b)));
}
inline std::uint32_t get_u32(const std::uint8_t* p) {
  return std::uint32_t{p[0]} | (std::uint32_t{p[1]} << 8) | (std::uint32_t{p[2]} << 16) | (std::uint32_t{p[3]} << 24);
}
}  // namespace detail

/*! \brief Serializes to the VTAP container: magic, version, counts, instructions, micro-ops. */
inline std::vector<std::uint8_t> serialize_program(const Program& prog) {
  std::vector<std::uint8_t> out{'V', 'T', 'A', 'P'};
  detail::put_u32(out, kProgramVersion);
  detail::put_u32(out, static_cast<std::uint32_t>(prog.insns.size()));
  detail::put_u32(out, static_cast<std::uint32_t>(prog.uops.size()));
  for (const auto& i : prog.insns) {
    const auto b = encode_instruction(i);
    out.insert(out.end(), b.begin(), b.end());
  }
  for (const auto& u : prog.uops) {
    const auto b = encode_uop(u);
    out.insert(out.end(), b.begin(), b.end());
  }
  return out;
}

inline Program deserialize_program(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 16 || std::memcmp(bytes.data(), "VTAP", 4) != 0) throw ParseError("bad magic");
  const std::uint32_t version = detail::get_u32(bytes.data() + 4);
  if (version != kProgramVersion) throw ParseError("unsupported program version " + std::to_string(version));
  const std::uint64_t n_insn = detail::get_u32(bytes.data() + 8);
  const std::uint64_t n_uop = detail::get_u32(bytes.data() + 12);
  if (bytes.size() != 16 + 16 * n_insn + 4 * n_uop) throw ParseError("truncated or oversized program container");
  Program prog;
  prog.insns.reserve(n_insn);
  const std::uint8_t* p = bytes.data() + 16;
  for (std::uint64_t k = 0; k < n_insn; ++k, p += 16) {
    try {
      prog.insns.push_back(decode_instruction(p));
    } catch (const Error& e) {
      throw DecodeError("instruction " + std::to_string(k) + ": " + e.what());
    }
  }
  for (std::uint64_t k = 0; k < n_uop; ++k, p += 4) prog.uops.push_back(decode_uop(p));
  return prog;
}

struct Violation {
  int index = -1;  ///< instruction index, -1 for program-wide problems
  std::string message;
  std::string to_string() const {
    return index < 0 ? message : "instruction " + std::to_string(index) + ": " + message;
  }
};

/*!
 * \brief Statically checks a program against a design point.
 *
 * Tracks which micro-op buffer entries have been loaded (and with what)
 * so GEMM/ALU address ranges can be bounded exactly. Never throws for
 * malformed programs; every problem is returned.
 */
inline std::vector<Violation> validate_program(const std::vector<Instruction>& insns,
                                               const std::vector<MicroOp>& uops, const HardwareParams& p,
                                               const std::vector<std::optional<MicroOp>>& resident = {}) {
  std::vector<Violation> out;
  auto add = [&](int idx, std::string msg) { out.push_back({idx, std::move(msg)}); };
  if (insns.empty() || !insns.back().is<FinishInsn>()) add(-1, "missing FINISH");

  const std::int64_t uop_depth = p.uop_depth();
  std::vector<std::optional<MicroOp>> uop_sram(static_cast<std::size_t>(std::max<std::int64_t>(uop_depth, 0)));
  for (std::size_t k = 0; k < resident.size() && k < uop_sram.size(); ++k) uop_sram[k] = resident[k];
  std::array<std::int64_t, kNumQueues> pushes{}, pops{};

  for (std::size_t k = 0; k < insns.size(); ++k) {
    const int idx = static_cast<int>(k);
    const Instruction& i = insns[k];
    for (auto& v : check_instruction(i)) add(idx, v);
    const TokenOps tok = token_ops(i);
    for (auto& f : tok.illegal)
      add(idx, std::string(f) + " is not meaningful on the " + module_name(module_of(i)) + " module");
    for (Queue q : tok.pops) ++pops[static_cast<int>(q)];
    for (Queue q : tok.pushes) ++pushes[static_cast<int>(q)];

    if (i.is<FinishInsn>() && k + 1 != insns.size()) add(idx, "FINISH must be the last instruction");

    if (const MemFields* m = i.mem()) {
      if (detail::field_value(m->mem_scope) > 4) continue;
      if (m->y_size == 0 || m->x_size == 0) continue;  // no-op transfer
      const std::int64_t depth = scope_depth(p, m->mem_scope);
      const std::int64_t width = std::int64_t{m->x_pad_left} + m->x_size + m->x_pad_right;
      const std::int64_t rows = std::int64_t{m->y_pad_top} + m->y_size + m->y_pad_bottom;
      if (std::int64_t{m->sram_base} + rows * width > depth)
        add(idx, std::string(scope_name(m->mem_scope)) + " SRAM range [" + std::to_string(m->sram_base) + ", " +
                     std::to_string(m->sram_base + rows * width) + ") exceeds depth " + std::to_string(depth));
      if (m->mem_scope == MemScope::kUop) {
        const std::int64_t last = std::int64_t{m->dram_base} + std::int64_t{m->y_size - 1} * m->x_stride + m->x_size;
        if (last > static_cast<std::int64_t>(uops.size())) {
          add(idx, "UOP load reads past the micro-op segment (" + std::to_string(uops.size()) + " entries)");
          continue;
        }
        for (std::int64_t r = 0; r < rows; ++r)
          for (std::int64_t c = 0; c < width; ++c) {
            const std::int64_t dst = m->sram_base + r * width + c;
            if (dst >= uop_depth) continue;
            const std::int64_t row = r - m->y_pad_top, col = c - m->x_pad_left;
            if (row < 0 || row >= m->y_size || col < 0 || col >= m->x_size) {
              uop_sram[dst] = MicroOp{};
            } else {
              uop_sram[dst] = uops[m->dram_base + row * m->x_stride + col];
            }
          }
      }
      continue;
    }

    const LoopNest* n = i.nest();
    if (!n || n->uop_bgn >= n->uop_end || n->iter_out < 1 || n->iter_in < 1) continue;
    if (n->uop_end > uop_depth) {
      add(idx, "uop range ends at " + std::to_string(n->uop_end) + " beyond uop depth " + std::to_string(uop_depth));
      continue;
    }
    const bool gemm = i.is<GemmInsn>();
    const std::int64_t io = n->iter_out - 1, ii = n->iter_in - 1;
    for (std::uint32_t u = n->uop_bgn; u < n->uop_end; ++u) {
      if (!uop_sram[u]) {
        add(idx, "micro-op entry " + std::to_string(u) + " is used before being loaded");
        break;
      }
      const MicroOp& op = *uop_sram[u];
      const std::int64_t dst = op.acc_idx + io * n->dst_factor_out + ii * n->dst_factor_in;
      const std::int64_t src = op.inp_idx + io * n->src_factor_out + ii * n->src_factor_in;
      if (dst >= p.acc_depth()) {
        add(idx, "accumulator index " + std::to_string(dst) + " exceeds acc depth " + std::to_string(p.acc_depth()));
        break;
      }
      if (gemm && !n->reset) {
        const auto& g = i.as<GemmInsn>();
        const std::int64_t wgt = op.wgt_idx + io * g.wgt_factor_out + ii * g.wgt_factor_in;
        if (src >= p.inp_depth()) {
          add(idx, "input index " + std::to_string(src) + " exceeds inp depth " + std::to_string(p.inp_depth()));
          break;
        }
        if (wgt >= p.wgt_depth()) {
          add(idx, "weight index " + std::to_string(wgt) + " exceeds wgt depth " + std::to_string(p.wgt_depth()));
          break;
        }
      } else if (!gemm && !n->reset && src >= p.acc_depth()) {
        add(idx, "ALU source index " + std::to_string(src) + " exceeds acc depth " + std::to_string(p.acc_depth()));
        break;
      }
    }
  }
  for (int q = 0; q < kNumQueues; ++q)
    if (pops[q] > pushes[q])
      add(-1, std::string("queue ") + queue_name(static_cast<Queue>(q)) + " is popped " + std::to_string(pops[q]) +
                  " times but pushed only " + std::to_string(pushes[q]));
  return out;
}

inline std::vector<Violation> validate_program(const Program& prog, const HardwareParams& p) {
  return validate_program(prog.insns, prog.uops, p);
}

}  // namespace vta
