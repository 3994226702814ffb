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
 * \file sim.hpp
 * \brief Event-driven simulator of the load/compute/store task pipeline.
 *
 * Fetch dispatches instruction i at cycle (i + 1) * fetch_dispatch_cycles.
 * Each module runs its command queue in program order; an instruction
 * starts once its module is free, it has been dispatched and every token
 * it pops is available. Tokens carry the end cycle of the instruction that
 * pushed them, so timing does not depend on the order in which the host
 * processes events.
 */
#pragma once

#include <algorithm>
#include <array>
#include <deque>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "common.hpp"
#include "config.hpp"
#include "isa.hpp"

namespace vta {

/*! \brief Flat DRAM image. Tiles are stored at dram_base * tile_bytes, elements bit-packed LSB first. */
using Dram = std::vector<std::uint8_t>;

struct TimingModel {
  std::int64_t dram_latency_cycles = 32;
  std::int64_t dram_bytes_per_cycle = 8;
  std::int64_t gemm_tiles_per_cycle = 1;
  std::int64_t fetch_dispatch_cycles = 1;
};

inline void validate_timing(const TimingModel& t) {
  if (t.dram_latency_cycles < 1 || t.dram_bytes_per_cycle < 1 || t.gemm_tiles_per_cycle < 1 ||
      t.fetch_dispatch_cycles < 1)
    throw Error("timing model constants must be positive");
}

inline void to_json(nlohmann::json& j, const TimingModel& t) {
  j = {{"dram_latency_cycles", t.dram_latency_cycles},
       {"dram_bytes_per_cycle", t.dram_bytes_per_cycle},
       {"gemm_tiles_per_cycle", t.gemm_tiles_per_cycle},
       {"fetch_dispatch_cycles", t.fetch_dispatch_cycles}};
}

inline void from_json(const nlohmann::json& j, TimingModel& t) {
  t = TimingModel{};
  t.dram_latency_cycles = j.value("dram_latency_cycles", t.dram_latency_cycles);
  t.dram_bytes_per_cycle = j.value("dram_bytes_per_cycle", t.dram_bytes_per_cycle);
  t.gemm_tiles_per_cycle = j.value("gemm_tiles_per_cycle", t.gemm_tiles_per_cycle);
  t.fetch_dispatch_cycles = j.value("fetch_dispatch_cycles", t.fetch_dispatch_cycles);
  validate_timing(t);
}

/*! \brief Reads element `index` of a packed buffer of signed `width`-bit elements. */
inline std::int32_t load_element(const std::uint8_t* buf, std::int64_t index, int width) {
  if (width == 8) return static_cast<std::int8_t>(buf[index]);
  const std::int64_t bit = index * width;
  std::uint64_t v = 0;
  for (int k = 0; k < width; ++k) {
    const std::int64_t b = bit + k;
    v |= static_cast<std::uint64_t>((buf[b >> 3] >> (b & 7)) & 1) << k;
  }
  return bits::wrap(static_cast<std::int64_t>(v), width);
}

inline void store_element(std::uint8_t* buf, std::int64_t index, int width, std::int32_t value) {
  if (width == 8) {
    buf[index] = static_cast<std::uint8_t>(value);
    return;
  }
  const std::int64_t bit = index * width;
  const auto v = static_cast<std::uint64_t>(static_cast<std::int64_t>(value));
  for (int k = 0; k < width; ++k) {
    const std::int64_t b = bit + k;
    const auto m = static_cast<std::uint8_t>(1u << (b & 7));
    if ((v >> k) & 1) buf[b >> 3] |= m;
    else buf[b >> 3] &= static_cast<std::uint8_t>(~m);
  }
}

struct TraceRecord {
  int index = 0;
  Module module = Module::kLoad;
  Opcode opcode = Opcode::kFinish;
  std::int64_t start = 0;
  std::int64_t end = 0;
  std::vector<Queue> pushes;
  std::vector<Queue> pops;
};

struct ExecReport {
  std::int64_t total_cycles = 0;
  std::array<std::int64_t, 3> busy{};  ///< indexed by Module
  std::vector<TraceRecord> trace;
  std::array<std::int64_t, kNumQueues> pushed{};
  std::array<std::int64_t, kNumQueues> popped{};
  bool hazard_checked = false;
  std::vector<std::string> hazards;
  std::vector<std::string> warnings;
  std::int64_t instructions = 0;
  std::int64_t gemm_ops = 0;  ///< intrinsic invocations, reset iterations excluded

  std::int64_t busy_of(Module m) const { return busy[static_cast<int>(m)]; }
  bool token_balanced() const { return pushed == popped; }
};

inline nlohmann::json report_json(const ExecReport& r) {
  return {{"total_cycles", r.total_cycles},
          {"busy",
           {{"load", r.busy[0]}, {"compute", r.busy[1]}, {"store", r.busy[2]}}},
          {"instructions", r.instructions},
          {"gemm_ops", r.gemm_ops},
          {"hazard_checked", r.hazard_checked},
          {"hazards", r.hazards},
          {"warnings", r.warnings}};
}

/*! \brief One JSON object per executed instruction, newline separated. */
inline std::string trace_jsonl(const ExecReport& r) {
  std::string out;
  for (const auto& t : r.trace) {
    nlohmann::json pushes = nlohmann::json::array(), pops = nlohmann::json::array();
    for (Queue q : t.pushes) pushes.push_back(queue_name(q));
    for (Queue q : t.pops) pops.push_back(queue_name(q));
    nlohmann::json j = {{"index", t.index}, {"module", module_name(t.module)}, {"opcode", opcode_name(t.opcode)},
                        {"start", t.start}, {"end", t.end}, {"pushes", pushes}, {"pops", pops}};
    out += j.dump() + "\n";
  }
  return out;
}

struct RunOptions {
  bool functional = true;     ///< false: account cycles only, touch no data
  bool check_hazards = false; ///< record RAW/WAR/WAW overlaps between modules
  bool record_trace = true;
  bool validate = true;
};

/*!
 * \brief Simulator state: on-chip buffers persist across runs.
 *
 * The OUT buffer shadows ACC: every GEMM or ALU write to an accumulator
 * tile also writes its value narrowed to inp_bits into the OUT tile with
 * the same index. STORE reads OUT.
 */
class SimMachine {
 public:
  SimMachine(HardwareParams p, TimingModel t) : p_(p), t_(t) {
    validate_params(p_);
    validate_timing(t_);
    uop_.assign(static_cast<std::size_t>(p_.uop_depth()), MicroOp{});
    uop_valid_.assign(uop_.size(), false);
    inp_.assign(static_cast<std::size_t>(p_.inp_depth() * p_.inp_tile_elems()), 0);
    wgt_.assign(static_cast<std::size_t>(p_.wgt_depth() * p_.wgt_tile_elems()), 0);
    acc_.assign(static_cast<std::size_t>(p_.acc_depth() * p_.acc_tile_elems()), 0);
    out_.assign(acc_.size(), 0);
  }

  const HardwareParams& params() const { return p_; }
  const TimingModel& timing() const { return t_; }

  std::vector<std::int32_t>& inp() { return inp_; }
  std::vector<std::int32_t>& wgt() { return wgt_; }
  std::vector<std::int32_t>& acc() { return acc_; }
  std::vector<std::int32_t>& out() { return out_; }
  std::vector<MicroOp>& uop() { return uop_; }

  /*! \return the micro-op buffer with never-loaded entries empty. */
  std::vector<std::optional<MicroOp>> resident_uops() const {
    std::vector<std::optional<MicroOp>> r(uop_.size());
    for (std::size_t k = 0; k < uop_.size(); ++k)
      if (uop_valid_[k]) r[k] = uop_[k];
    return r;
  }

  /*! \brief Pipelined execution honoring dependency tokens. */
  ExecReport run(Dram& dram, const Program& prog, const RunOptions& opt = {}) {
    begin(prog, opt);
    ExecReport rep;
    rep.hazard_checked = opt.check_hazards;
    const auto& insns = prog.insns;

    std::array<std::vector<int>, 3> queue;
    for (std::size_t k = 0; k < insns.size(); ++k) queue[static_cast<int>(module_of(insns[k]))].push_back(static_cast<int>(k));
    std::array<std::size_t, 3> head{};
    std::array<std::int64_t, 3> free_at{};
    std::array<std::deque<std::int64_t>, kNumQueues> tokens;

    std::size_t done = 0;
    while (done < insns.size()) {
      int best = -1;
      std::int64_t best_start = std::numeric_limits<std::int64_t>::max();
      for (int m = 0; m < 3; ++m) {
        if (head[m] >= queue[m].size()) continue;
        const int k = queue[m][head[m]];
        const TokenOps ops = token_ops(insns[k]);
        bool ready = true;
        std::int64_t start = std::max(free_at[m], dispatch_cycle(k));
        for (Queue q : ops.pops) {
          auto& tq = tokens[static_cast<int>(q)];
          if (tq.empty()) {
            ready = false;
            break;
          }
          start = std::max(start, tq.front());
        }
        if (ready && start < best_start) {
          best = m;
          best_start = start;
        }
      }
      if (best < 0) throw DeadlockError(deadlock_message(insns, queue, head, tokens));

      const int k = queue[best][head[best]++];
      const Instruction& insn = insns[k];
      const TokenOps ops = token_ops(insn);
      for (Queue q : ops.pops) {
        tokens[static_cast<int>(q)].pop_front();
        ++rep.popped[static_cast<int>(q)];
      }
      const std::int64_t cycles = execute(k, insn, dram, prog, opt, rep, best_start);
      const std::int64_t end = best_start + cycles;
      for (Queue q : ops.pushes) {
        tokens[static_cast<int>(q)].push_back(end);
        ++rep.pushed[static_cast<int>(q)];
      }
      free_at[best] = end;
      rep.busy[best] += cycles;
      rep.total_cycles = std::max(rep.total_cycles, end);
      if (opt.record_trace) rep.trace.push_back({k, static_cast<Module>(best), insn.opcode(), best_start, end, ops.pushes, ops.pops});
      ++done;
    }
    rep.instructions = static_cast<std::int64_t>(insns.size());
    if (!rep.token_balanced()) rep.warnings.push_back(imbalance_message(rep));
    return rep;
  }

  /*!
   * \brief Reference executor: strictly program order on one logical unit.
   *
   * Dependency flags do not affect timing; popping an empty queue and a
   * final imbalance are recorded as warnings.
   */
  ExecReport run_sequential(Dram& dram, const Program& prog, const RunOptions& opt = {}) {
    begin(prog, opt);
    ExecReport rep;
    std::array<std::int64_t, kNumQueues> level{};
    std::int64_t now = 0;
    for (std::size_t k = 0; k < prog.insns.size(); ++k) {
      const Instruction& insn = prog.insns[k];
      const TokenOps ops = token_ops(insn);
      for (Queue q : ops.pops) {
        if (level[static_cast<int>(q)] == 0)
          rep.warnings.push_back("instruction " + std::to_string(k) + " pops empty queue " + queue_name(q));
        else
          --level[static_cast<int>(q)];
        ++rep.popped[static_cast<int>(q)];
      }
      const std::int64_t start = now + t_.fetch_dispatch_cycles;
      const std::int64_t cycles = execute(static_cast<int>(k), insn, dram, prog, opt, rep, start);
      now = start + cycles;
      for (Queue q : ops.pushes) {
        ++level[static_cast<int>(q)];
        ++rep.pushed[static_cast<int>(q)];
      }
      rep.busy[static_cast<int>(module_of(insn))] += cycles;
      if (opt.record_trace)
        rep.trace.push_back({static_cast<int>(k), module_of(insn), insn.opcode(), start, now, ops.pushes, ops.pops});
    }
    rep.total_cycles = now;
    rep.instructions = static_cast<std::int64_t>(prog.insns.size());
    if (!rep.token_balanced()) rep.warnings.push_back(imbalance_message(rep));
    return rep;
  }

  /*! \brief DMA cycle cost of moving `bytes`; zero-extent transfers still pay the latency. */
  std::int64_t dma_cycles(std::int64_t bytes) const {
    return t_.dram_latency_cycles + bits::ceil_div(bytes, t_.dram_bytes_per_cycle);
  }

 private:
  struct TileUse {
    std::int64_t write_end = -1;
    int writer = -1;
    std::array<std::int64_t, 3> read_end{-1, -1, -1};
  };

  std::int64_t dispatch_cycle(int k) const { return (k + 1) * t_.fetch_dispatch_cycles; }

  void begin(const Program& prog, const RunOptions& opt) {
    if (opt.validate) {
      auto v = validate_program(prog.insns, prog.uops, p_, resident_uops());
      if (!v.empty()) {
        std::string msg = "program rejected:";
        for (const auto& x : v) msg += "\n  " + x.to_string();
        throw ValidationError(msg);
      }
    }
    if (opt.check_hazards) {
      for (auto& h : hazard_) h.clear();
      hazard_[0].resize(static_cast<std::size_t>(p_.inp_depth()));
      hazard_[1].resize(static_cast<std::size_t>(p_.wgt_depth()));
      hazard_[2].resize(static_cast<std::size_t>(p_.acc_depth()));
      hazard_[3].resize(static_cast<std::size_t>(p_.acc_depth()));
    }
  }

  enum HazardScope { kHInp = 0, kHWgt = 1, kHAcc = 2, kHOut = 3 };

  void note_read(ExecReport& rep, int scope, std::int64_t tile, int module, int idx, std::int64_t s, std::int64_t e) {
    TileUse& u = hazard_[scope][static_cast<std::size_t>(tile)];
    if (u.writer >= 0 && u.writer != module && u.write_end > s)
      rep.hazards.push_back("RAW on " + hazard_name(scope) + " tile " + std::to_string(tile) + " at instruction " +
                            std::to_string(idx));
    u.read_end[module] = std::max(u.read_end[module], e);
  }

  void note_write(ExecReport& rep, int scope, std::int64_t tile, int module, int idx, std::int64_t s, std::int64_t e) {
    TileUse& u = hazard_[scope][static_cast<std::size_t>(tile)];
    if (u.writer >= 0 && u.writer != module && u.write_end > s)
      rep.hazards.push_back("WAW on " + hazard_name(scope) + " tile " + std::to_string(tile) + " at instruction " +
                            std::to_string(idx));
    for (int m = 0; m < 3; ++m)
      if (m != module && u.read_end[m] > s)
        rep.hazards.push_back("WAR on " + hazard_name(scope) + " tile " + std::to_string(tile) + " at instruction " +
                              std::to_string(idx));
    u.writer = module;
    u.write_end = e;
  }

  static std::string hazard_name(int scope) {
    static const char* names[] = {"INP", "WGT", "ACC", "OUT"};
    return names[scope];
  }

  /*! \return cycles; performs the data movement when opt.functional. */
  std::int64_t execute(int k, const Instruction& insn, Dram& dram, const Program& prog, const RunOptions& opt,
                       ExecReport& rep, std::int64_t start) {
    switch (insn.opcode()) {
      case Opcode::kLoad: return exec_load(k, insn.as<LoadInsn>(), dram, prog, opt, rep, start);
      case Opcode::kStore: return exec_store(k, insn.as<StoreInsn>(), dram, opt, rep, start);
      case Opcode::kGemm: return exec_gemm(k, insn.as<GemmInsn>(), opt, rep, start);
      case Opcode::kAlu: return exec_alu(k, insn.as<AluInsn>(), opt, rep, start);
      case Opcode::kFinish: return 1;
    }
    return 1;
  }

  [[noreturn]] static void oob(int k, const std::string& what) {
    throw SimError("instruction " + std::to_string(k) + ": " + what + " out of bounds");
  }

  std::int64_t exec_load(int k, const LoadInsn& m, Dram& dram, const Program& prog, const RunOptions& opt,
                         ExecReport& rep, std::int64_t start) {
    const std::int64_t tile_bytes = scope_tile_bytes(p_, m.mem_scope);
    if (m.y_size == 0 || m.x_size == 0) return dma_cycles(0);
    const std::int64_t cycles = dma_cycles(std::int64_t{m.y_size} * m.x_size * tile_bytes);
    const std::int64_t width = std::int64_t{m.x_pad_left} + m.x_size + m.x_pad_right;
    const std::int64_t rows = std::int64_t{m.y_pad_top} + m.y_size + m.y_pad_bottom;
    const std::int64_t depth = scope_depth(p_, m.mem_scope);
    if (std::int64_t{m.sram_base} + rows * width > depth) oob(k, std::string(scope_name(m.mem_scope)) + " SRAM write");
    const std::int64_t last_src = std::int64_t{m.dram_base} + std::int64_t{m.y_size - 1} * m.x_stride + m.x_size;

    if (m.mem_scope == MemScope::kUop) {
      if (last_src > static_cast<std::int64_t>(prog.uops.size())) oob(k, "micro-op segment read");
      if (!opt.functional) return cycles;
      for (std::int64_t r = 0; r < rows; ++r)
        for (std::int64_t c = 0; c < width; ++c) {
          const std::int64_t row = r - m.y_pad_top, col = c - m.x_pad_left;
          const std::size_t dst = static_cast<std::size_t>(m.sram_base + r * width + c);
          const bool pad = row < 0 || row >= m.y_size || col < 0 || col >= m.x_size;
          uop_[dst] = pad ? MicroOp{} : prog.uops[static_cast<std::size_t>(m.dram_base + row * m.x_stride + col)];
          uop_valid_[dst] = true;
        }
      return cycles;
    }

    if (last_src * tile_bytes > static_cast<std::int64_t>(dram.size())) oob(k, "DRAM read");
    std::vector<std::int32_t>* sram = nullptr;
    std::int64_t elems = 0;
    int ebits = 0, hscope = 0;
    switch (m.mem_scope) {
      case MemScope::kInp: sram = &inp_; elems = p_.inp_tile_elems(); ebits = p_.inp_bits; hscope = kHInp; break;
      case MemScope::kWgt: sram = &wgt_; elems = p_.wgt_tile_elems(); ebits = p_.wgt_bits; hscope = kHWgt; break;
      case MemScope::kAcc: sram = &acc_; elems = p_.acc_tile_elems(); ebits = p_.acc_bits; hscope = kHAcc; break;
      default: throw SimError("instruction " + std::to_string(k) + ": LOAD cannot target " + scope_name(m.mem_scope));
    }
    if (opt.check_hazards)
      for (std::int64_t t = 0; t < rows * width; ++t)
        note_write(rep, hscope, m.sram_base + t, static_cast<int>(Module::kLoad), k, start, start + cycles);
    if (!opt.functional) return cycles;
    for (std::int64_t r = 0; r < rows; ++r)
      for (std::int64_t c = 0; c < width; ++c) {
        const std::int64_t row = r - m.y_pad_top, col = c - m.x_pad_left;
        std::int32_t* dst = sram->data() + (m.sram_base + r * width + c) * elems;
        if (row < 0 || row >= m.y_size || col < 0 || col >= m.x_size) {
          std::fill(dst, dst + elems, 0);
          continue;
        }
        const std::uint8_t* src = dram.data() + (m.dram_base + row * m.x_stride + col) * tile_bytes;
        for (std::int64_t e = 0; e < elems; ++e) dst[e] = load_element(src, e, ebits);
      }
    return cycles;
  }

  std::int64_t exec_store(int k, const StoreInsn& m, Dram& dram, const RunOptions& opt, ExecReport& rep,
                          std::int64_t start) {
    if (m.y_size == 0 || m.x_size == 0) return dma_cycles(0);
    if (m.mem_scope != MemScope::kOut) throw SimError("instruction " + std::to_string(k) + ": STORE must read OUT");
    const std::int64_t tile_bytes = p_.out_tile_bytes();
    const std::int64_t cycles = dma_cycles(std::int64_t{m.y_size} * m.x_size * tile_bytes);
    const std::int64_t n = std::int64_t{m.y_size} * m.x_size;
    if (m.sram_base + n > p_.acc_depth()) oob(k, "OUT SRAM read");
    const std::int64_t last_dst = std::int64_t{m.dram_base} + std::int64_t{m.y_size - 1} * m.x_stride + m.x_size;
    if (last_dst * tile_bytes > static_cast<std::int64_t>(dram.size())) oob(k, "DRAM write");
    if (opt.check_hazards)
      for (std::int64_t t = 0; t < n; ++t)
        note_read(rep, kHOut, m.sram_base + t, static_cast<int>(Module::kStore), k, start, start + cycles);
    if (!opt.functional) return cycles;
    const std::int64_t elems = p_.acc_tile_elems();
    for (std::int64_t r = 0; r < m.y_size; ++r)
      for (std::int64_t c = 0; c < m.x_size; ++c) {
        const std::int32_t* src = out_.data() + (m.sram_base + r * m.x_size + c) * elems;
        std::uint8_t* dst = dram.data() + (m.dram_base + r * m.x_stride + c) * tile_bytes;
        for (std::int64_t e = 0; e < elems; ++e) store_element(dst, e, p_.inp_bits, src[e]);
      }
    return cycles;
  }

  void write_acc(std::int64_t tile, const std::int32_t* vals) {
    const std::int64_t elems = p_.acc_tile_elems();
    std::int32_t* a = acc_.data() + tile * elems;
    std::int32_t* o = out_.data() + tile * elems;
    for (std::int64_t e = 0; e < elems; ++e) {
      a[e] = vals[e];
      o[e] = bits::wrap(vals[e], p_.inp_bits);
    }
  }

  std::int64_t exec_gemm(int k, const GemmInsn& g, const RunOptions& opt, ExecReport& rep, std::int64_t start) {
    const std::int64_t n_uop = std::int64_t{g.uop_end} - g.uop_bgn;
    const std::int64_t iters = std::int64_t{g.iter_out} * g.iter_in * n_uop;
    const std::int64_t cycles = std::max<std::int64_t>(1, bits::ceil_div(iters, t_.gemm_tiles_per_cycle));
    if (!g.reset) rep.gemm_ops += iters;
    if (!opt.functional && !opt.check_hazards) return cycles;
    const std::int64_t B = p_.batch, BI = p_.block_in, BO = p_.block_out;
    std::vector<std::int32_t> tmp(static_cast<std::size_t>(B * BO));
    const int cm = static_cast<int>(Module::kCompute);
    for (std::int64_t i0 = 0; i0 < g.iter_out; ++i0)
      for (std::int64_t i1 = 0; i1 < g.iter_in; ++i1)
        for (std::int64_t u = g.uop_bgn; u < g.uop_end; ++u) {
          if (u >= static_cast<std::int64_t>(uop_.size())) oob(k, "micro-op index");
          const MicroOp& op = uop_[static_cast<std::size_t>(u)];
          const std::int64_t a = op.acc_idx + i0 * g.dst_factor_out + i1 * g.dst_factor_in;
          if (a >= p_.acc_depth()) oob(k, "accumulator index " + std::to_string(a));
          if (g.reset) {
            if (opt.check_hazards) {
              note_write(rep, kHAcc, a, cm, k, start, start + cycles);
              note_write(rep, kHOut, a, cm, k, start, start + cycles);
            }
            if (opt.functional) {
              std::fill(tmp.begin(), tmp.end(), 0);
              write_acc(a, tmp.data());
            }
            continue;
          }
          const std::int64_t x = op.inp_idx + i0 * g.src_factor_out + i1 * g.src_factor_in;
          const std::int64_t w = op.wgt_idx + i0 * g.wgt_factor_out + i1 * g.wgt_factor_in;
          if (x >= p_.inp_depth()) oob(k, "input index " + std::to_string(x));
          if (w >= p_.wgt_depth()) oob(k, "weight index " + std::to_string(w));
          if (opt.check_hazards) {
            note_read(rep, kHInp, x, cm, k, start, start + cycles);
            note_read(rep, kHWgt, w, cm, k, start, start + cycles);
            note_read(rep, kHAcc, a, cm, k, start, start + cycles);
            note_write(rep, kHAcc, a, cm, k, start, start + cycles);
            note_write(rep, kHOut, a, cm, k, start, start + cycles);
          }
          if (!opt.functional) continue;
          const std::int32_t* in = inp_.data() + x * B * BI;
          const std::int32_t* wt = wgt_.data() + w * BO * BI;
          const std::int32_t* ac = acc_.data() + a * B * BO;
          for (std::int64_t b = 0; b < B; ++b)
            for (std::int64_t o = 0; o < BO; ++o) {
              std::int64_t sum = 0;
              for (std::int64_t i = 0; i < BI; ++i) sum += std::int64_t{in[b * BI + i]} * wt[o * BI + i];
              tmp[static_cast<std::size_t>(b * BO + o)] = bits::wrap(ac[b * BO + o] + sum, p_.acc_bits);
            }
          write_acc(a, tmp.data());
        }
    return cycles;
  }

  std::int32_t alu_element(AluOp op, std::int32_t a, std::int32_t b) const {
    const int w = p_.acc_bits;
    switch (op) {
      case AluOp::kMin: return a < b ? a : b;
      case AluOp::kMax: return a > b ? a : b;
      case AluOp::kAdd: return bits::wrap(std::int64_t{a} + std::int64_t{b}, w);
      case AluOp::kShr: {
        if (b < 0) {
          const std::int64_t left = -std::int64_t{b};
          if (left >= 64) return 0;
          return bits::wrap(static_cast<std::int64_t>(static_cast<std::uint64_t>(std::int64_t{a}) << left), w);
        }
        const std::int64_t right = std::min<std::int64_t>(b, 63);
        return bits::wrap(std::int64_t{a} >> right, w);
      }
    }
    return a;
  }

  std::int64_t exec_alu(int k, const AluInsn& n, const RunOptions& opt, ExecReport& rep, std::int64_t start) {
    const std::int64_t n_uop = std::int64_t{n.uop_end} - n.uop_bgn;
    const std::int64_t cycles = std::int64_t{n.iter_out} * n.iter_in * n_uop * p_.alu_tile_cycles();
    if (!opt.functional && !opt.check_hazards) return cycles;
    const std::int64_t elems = p_.acc_tile_elems();
    std::vector<std::int32_t> tmp(static_cast<std::size_t>(elems));
    const int cm = static_cast<int>(Module::kCompute);
    for (std::int64_t i0 = 0; i0 < n.iter_out; ++i0)
      for (std::int64_t i1 = 0; i1 < n.iter_in; ++i1)
        for (std::int64_t u = n.uop_bgn; u < n.uop_end; ++u) {
          if (u >= static_cast<std::int64_t>(uop_.size())) oob(k, "micro-op index");
          const MicroOp& op = uop_[static_cast<std::size_t>(u)];
          const std::int64_t d = op.acc_idx + i0 * n.dst_factor_out + i1 * n.dst_factor_in;
          const std::int64_t s = op.inp_idx + i0 * n.src_factor_out + i1 * n.src_factor_in;
          if (d >= p_.acc_depth()) oob(k, "ALU destination index " + std::to_string(d));
          if (!n.reset && !n.use_imm && s >= p_.acc_depth()) oob(k, "ALU source index " + std::to_string(s));
          if (opt.check_hazards) {
            if (!n.reset) note_read(rep, kHAcc, d, cm, k, start, start + cycles);
            if (!n.reset && !n.use_imm) note_read(rep, kHAcc, s, cm, k, start, start + cycles);
            note_write(rep, kHAcc, d, cm, k, start, start + cycles);
            note_write(rep, kHOut, d, cm, k, start, start + cycles);
          }
          if (!opt.functional) continue;
          if (n.reset) {
            std::fill(tmp.begin(), tmp.end(), 0);
          } else {
            const std::int32_t* dv = acc_.data() + d * elems;
            const std::int32_t* sv = acc_.data() + s * elems;
            for (std::int64_t e = 0; e < elems; ++e)
              tmp[static_cast<std::size_t>(e)] = alu_element(n.alu_opcode, dv[e], n.use_imm ? n.imm : sv[e]);
          }
          write_acc(d, tmp.data());
        }
    return cycles;
  }

  std::string deadlock_message(const std::vector<Instruction>& insns, const std::array<std::vector<int>, 3>& queue,
                               const std::array<std::size_t, 3>& head,
                               const std::array<std::deque<std::int64_t>, kNumQueues>& tokens) const {
    std::ostringstream os;
    os << "deadlock: no module can advance";
    for (int m = 0; m < 3; ++m) {
      os << "\n  " << module_name(static_cast<Module>(m)) << ": ";
      if (head[m] >= queue[m].size()) {
        os << "idle (queue drained)";
        continue;
      }
      const int k = queue[m][head[m]];
      os << "instruction " << k << " (" << opcode_name(insns[k].opcode()) << ") waiting on";
      for (Queue q : token_ops(insns[k]).pops)
        if (tokens[static_cast<int>(q)].empty()) os << ' ' << queue_name(q);
    }
    return os.str();
  }

  static std::string imbalance_message(const ExecReport& r) {
    std::string s = "token imbalance at FINISH:";
    for (int q = 0; q < kNumQueues; ++q)
      if (r.pushed[q] != r.popped[q])
        s += std::string(" ") + queue_name(static_cast<Queue>(q)) + " pushed " + std::to_string(r.pushed[q]) +
             " popped " + std::to_string(r.popped[q]) + ";";
    return s;
  }

  HardwareParams p_;
  TimingModel t_;
  std::vector<MicroOp> uop_;
  std::vector<bool> uop_valid_;
  std::vector<std::int32_t> inp_, wgt_, acc_, out_;
  std::array<std::vector<TileUse>, 4> hazard_;
};

/*! \brief One-shot pipelined run on a fresh machine. */
inline ExecReport run(const HardwareParams& p, const TimingModel& t, Dram& dram, const Program& prog,
                      const RunOptions& opt = {}) {
  SimMachine m(p, t);
  return m.run(dram, prog, opt);
}

inline ExecReport run_sequential(const HardwareParams& p, const TimingModel& t, Dram& dram, const Program& prog,
                                 const RunOptions& opt = {}) {
  SimMachine m(p, t);
  return m.run_sequential(dram, prog, opt);
}

}  // namespace vta
