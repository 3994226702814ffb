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
 * \file config.hpp
 * \brief Hardware design points, the resource/peak models and candidate pruning.
 */
#pragma once

#include <algorithm>
#include <compare>
#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "common.hpp"

namespace vta {

/*! \brief Widest buffers the micro-op index fields can address. */
inline constexpr std::int64_t kMaxInpDepth = std::int64_t{1} << 11;
inline constexpr std::int64_t kMaxAccDepth = std::int64_t{1} << 11;
inline constexpr std::int64_t kMaxWgtDepth = std::int64_t{1} << 10;
inline constexpr std::int64_t kMaxUopDepth = std::int64_t{1} << 13;
inline constexpr std::int64_t kUopBytes = 4;

/*!
 * \brief One accelerator design point.
 *
 * The GEMM intrinsic computes a (batch x block_in) by (block_in x block_out)
 * product per cycle. Buffer sizes are in bytes; depths are in tiles.
 */
struct HardwareParams {
  std::int64_t batch = 1;
  std::int64_t block_in = 16;
  std::int64_t block_out = 16;
  int inp_bits = 8;
  int wgt_bits = 8;
  int acc_bits = 32;
  std::int64_t uop_buf_bytes = 32 * 1024;
  std::int64_t inp_buf_bytes = 32 * 1024;
  std::int64_t wgt_buf_bytes = 256 * 1024;
  std::int64_t acc_buf_bytes = 128 * 1024;
  std::int64_t alu_lanes = 16;
  double freq_mhz = 100.0;

  auto operator<=>(const HardwareParams&) const = default;
  bool operator==(const HardwareParams&) const = default;

  std::int64_t inp_tile_elems() const { return batch * block_in; }
  std::int64_t wgt_tile_elems() const { return block_out * block_in; }
  std::int64_t acc_tile_elems() const { return batch * block_out; }

  std::int64_t inp_tile_bytes() const { return inp_tile_elems() * inp_bits / 8; }
  std::int64_t wgt_tile_bytes() const { return wgt_tile_elems() * wgt_bits / 8; }
  std::int64_t acc_tile_bytes() const { return acc_tile_elems() * acc_bits / 8; }
  /*! Output tiles hold accumulator-shaped data narrowed to the input precision. */
  std::int64_t out_tile_bytes() const { return acc_tile_elems() * inp_bits / 8; }

  std::int64_t uop_depth() const { return uop_buf_bytes / kUopBytes; }
  std::int64_t inp_depth() const { return inp_tile_bytes() > 0 ? inp_buf_bytes / inp_tile_bytes() : 0; }
  std::int64_t wgt_depth() const { return wgt_tile_bytes() > 0 ? wgt_buf_bytes / wgt_tile_bytes() : 0; }
  std::int64_t acc_depth() const { return acc_tile_bytes() > 0 ? acc_buf_bytes / acc_tile_bytes() : 0; }

  /*! Number of multiply-accumulates the GEMM core retires per cycle. */
  std::int64_t intrinsic_macs() const { return batch * block_in * block_out; }

  /*! ALU cycles to process one accumulator tile. */
  std::int64_t alu_tile_cycles() const { return bits::ceil_div(acc_tile_elems(), alu_lanes); }

  std::string intrinsic_name() const {
    return "(" + std::to_string(batch) + "," + std::to_string(block_in) + ")x(" +
           std::to_string(block_in) + "," + std::to_string(block_out) + ")";
  }
};

/*! \return every violated invariant of p, empty when p is a valid design point. */
inline std::vector<std::string> check_params(const HardwareParams& p) {
  std::vector<std::string> out;
  auto dim = [&](const char* name, std::int64_t v) {
    if (!bits::is_pow2(v)) out.push_back(std::string(name) + " must be a positive power of two");
  };
  dim("batch", p.batch);
  dim("block_in", p.block_in);
  dim("block_out", p.block_out);
  auto narrow = [&](const char* name, int v) {
    if (v != 1 && v != 2 && v != 4 && v != 8) out.push_back(std::string(name) + " must be one of 1,2,4,8");
  };
  narrow("inp_bits", p.inp_bits);
  narrow("wgt_bits", p.wgt_bits);
  if (p.acc_bits != 8 && p.acc_bits != 16 && p.acc_bits != 32) out.push_back("acc_bits must be one of 8,16,32");
  if (!out.empty()) return out;

  auto tile = [&](const char* name, std::int64_t elems, int width) {
    if ((elems * width) % 8 != 0) out.push_back(std::string(name) + " tile is not a whole number of bytes");
  };
  tile("inp", p.inp_tile_elems(), p.inp_bits);
  tile("wgt", p.wgt_tile_elems(), p.wgt_bits);
  tile("acc", p.acc_tile_elems(), p.acc_bits);
  tile("out", p.acc_tile_elems(), p.inp_bits);
  if (!out.empty()) return out;

  auto buffer = [&](const char* name, std::int64_t bytes, std::int64_t tile_bytes, std::int64_t max_depth) {
    if (bytes <= 0 || bytes % tile_bytes != 0) {
      out.push_back(std::string(name) + " must be a positive multiple of " + std::to_string(tile_bytes) + " bytes");
    } else if (bytes / tile_bytes > max_depth) {
      out.push_back(std::string(name) + " holds " + std::to_string(bytes / tile_bytes) +
                    " entries; micro-op fields address at most " + std::to_string(max_depth));
    }
  };
  buffer("uop_buf_bytes", p.uop_buf_bytes, kUopBytes, kMaxUopDepth);
  buffer("inp_buf_bytes", p.inp_buf_bytes, p.inp_tile_bytes(), kMaxInpDepth);
  buffer("wgt_buf_bytes", p.wgt_buf_bytes, p.wgt_tile_bytes(), kMaxWgtDepth);
  buffer("acc_buf_bytes", p.acc_buf_bytes, p.acc_tile_bytes(), kMaxAccDepth);
  if (p.alu_lanes < 1 || p.alu_lanes > p.batch * p.block_out) out.push_back("alu_lanes must be in [1, batch*block_out]");
  if (!(p.freq_mhz > 0.0)) out.push_back("freq_mhz must be positive");
  return out;
}

inline bool is_valid(const HardwareParams& p) { return check_params(p).empty(); }

inline void validate_params(const HardwareParams& p) {
  auto v = check_params(p);
  if (!v.empty()) throw ValidationError("invalid hardware parameters: " + v.front());
}

struct DeviceProfile {
  std::string name;
  std::int64_t dsp_total = 0;
  std::int64_t bram_kbits_total = 0;
  std::int64_t lut_total = 0;
  double max_freq_mhz = 0.0;
  double util_cap = 1.0;
};

struct ResourceEstimate {
  std::int64_t dsp = 0;
  std::int64_t bram_kbits = 0;
  std::int64_t lut = 0;
  bool operator==(const ResourceEstimate&) const = default;
};

/*! \brief Linear LUT proxy constants; device calibration lives in data, not code. */
struct ResourceModel {
  std::int64_t lut_base = 5000;
  std::int64_t lut_per_dsp = 40;
};

/*! \brief Allowed values per knob; the design space is their cartesian product. */
struct CandidateSpace {
  std::vector<std::int64_t> batch, block_in, block_out;
  std::vector<int> inp_bits, wgt_bits, acc_bits;
  std::vector<std::int64_t> uop_buf_bytes, inp_buf_bytes, wgt_buf_bytes, acc_buf_bytes;
  std::vector<std::int64_t> alu_lanes;
  std::vector<double> freq_mhz;

  static CandidateSpace singleton(const HardwareParams& p) {
    return {{p.batch}, {p.block_in}, {p.block_out}, {p.inp_bits}, {p.wgt_bits}, {p.acc_bits},
            {p.uop_buf_bytes}, {p.inp_buf_bytes}, {p.wgt_buf_bytes}, {p.acc_buf_bytes},
            {p.alu_lanes}, {p.freq_mhz}};
  }
};

namespace detail {
template <typename T>
std::vector<T> sorted_unique(std::vector<T> v) {
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
  return v;
}
}  // namespace detail

/*!
 * \brief Cartesian product of the space, keeping only valid design points.
 *
 * Knob values are sorted ascending, so the output is in lexicographic order
 * of the HardwareParams field order.
 */
inline std::vector<HardwareParams> enumerate_candidates(const CandidateSpace& s) {
  using detail::sorted_unique;
  const auto b = sorted_unique(s.batch), bi = sorted_unique(s.block_in), bo = sorted_unique(s.block_out);
  const auto ib = sorted_unique(s.inp_bits), wb = sorted_unique(s.wgt_bits), ab = sorted_unique(s.acc_bits);
  const auto ub = sorted_unique(s.uop_buf_bytes), nb = sorted_unique(s.inp_buf_bytes);
  const auto gb = sorted_unique(s.wgt_buf_bytes), cb = sorted_unique(s.acc_buf_bytes);
  const auto al = sorted_unique(s.alu_lanes);
  const auto fq = sorted_unique(s.freq_mhz);
  std::vector<HardwareParams> out;
  HardwareParams p;
  for (auto v0 : b) { p.batch = v0;
  for (auto v1 : bi) { p.block_in = v1;
  for (auto v2 : bo) { p.block_out = v2;
  for (auto v3 : ib) { p.inp_bits = v3;
  for (auto v4 : wb) { p.wgt_bits = v4;
  for (auto v5 : ab) { p.acc_bits = v5;
  for (auto v6 : ub) { p.uop_buf_bytes = v6;
  for (auto v7 : nb) { p.inp_buf_bytes = v7;
  for (auto v8 : gb) { p.wgt_buf_bytes = v8;
  for (auto v9 : cb) { p.acc_buf_bytes = v9;
  for (auto v10 : al) { p.alu_lanes = v10;
  for (auto v11 : fq) { p.freq_mhz = v11;
    if (is_valid(p)) out.push_back(p);
  }}}}}}}}}}}}
  return out;
}

inline ResourceEstimate estimate_resources(const HardwareParams& p, const ResourceModel& m = {}) {
  ResourceEstimate r;
  const std::int64_t per_mult = std::max(p.inp_bits, p.wgt_bits) <= 8 ? 1 : 2;
  r.dsp = p.batch * p.block_in * p.block_out * per_mult;
  const std::int64_t bytes = p.uop_buf_bytes + p.inp_buf_bytes + p.wgt_buf_bytes + p.acc_buf_bytes;
  r.bram_kbits = 8 * bytes / 1024;
  r.lut = r.dsp > 0 ? m.lut_base + m.lut_per_dsp * r.dsp : 0;
  return r;
}

/*! \brief Inclusive fit test against util_cap of every device resource and the clock limit. */
inline bool is_feasible(const HardwareParams& p, const DeviceProfile& d, const ResourceModel& m = {}) {
  const ResourceEstimate r = estimate_resources(p, m);
  auto fits = [&](std::int64_t used, std::int64_t total) {
    return static_cast<double>(used) <= d.util_cap * static_cast<double>(total);
  };
  return fits(r.dsp, d.dsp_total) && fits(r.bram_kbits, d.bram_kbits_total) && fits(r.lut, d.lut_total) &&
         p.freq_mhz <= d.max_freq_mhz;
}

/*! \brief Throughput with the GEMM core fully busy; multiply and add count as two ops. */
inline double peak_gops(const HardwareParams& p) {
  return 2.0 * static_cast<double>(p.batch * p.block_in * p.block_out) * p.freq_mhz / 1000.0;
}

inline std::vector<HardwareParams> prune_candidates(const std::vector<HardwareParams>& cands,
                                                    const DeviceProfile& d, std::size_t top_k,
                                                    const ResourceModel& m = {}) {
  if (top_k < 1) throw ValidationError("top_k must be at least 1");
  std::vector<HardwareParams> kept;
  for (const auto& c : cands)
    if (is_feasible(c, d, m)) kept.push_back(c);
  std::stable_sort(kept.begin(), kept.end(), [&](const HardwareParams& a, const HardwareParams& b) {
    const double pa = peak_gops(a), pb = peak_gops(b);
    if (pa != pb) return pa > pb;
    const auto ra = estimate_resources(a, m).bram_kbits, rb = estimate_resources(b, m).bram_kbits;
    if (ra != rb) return ra < rb;
    return a < b;
  });
  if (kept.size() > top_k) kept.resize(top_k);
  return kept;
}

// JSON field names match the struct members.

inline void to_json(nlohmann::json& j, const HardwareParams& p) {
  j = nlohmann::json{{"batch", p.batch},
                     {"block_in", p.block_in},
                     {"block_out", p.block_out},
                     {"inp_bits", p.inp_bits},
                     {"wgt_bits", p.wgt_bits},
                     {"acc_bits", p.acc_bits},
                     {"uop_buf_bytes", p.uop_buf_bytes},
                     {"inp_buf_bytes", p.inp_buf_bytes},
                     {"wgt_buf_bytes", p.wgt_buf_bytes},
                     {"acc_buf_bytes", p.acc_buf_bytes},
                     {"alu_lanes", p.alu_lanes},
                     {"freq_mhz", p.freq_mhz}};
}

inline void from_json(const nlohmann::json& j, HardwareParams& p) {
  j.at("batch").get_to(p.batch);
  j.at("block_in").get_to(p.block_in);
  j.at("block_out").get_to(p.block_out);
  j.at("inp_bits").get_to(p.inp_bits);
  j.at("wgt_bits").get_to(p.wgt_bits);
  j.at("acc_bits").get_to(p.acc_bits);
  j.at("uop_buf_bytes").get_to(p.uop_buf_bytes);
  j.at("inp_buf_bytes").get_to(p.inp_buf_bytes);
  j.at("wgt_buf_bytes").get_to(p.wgt_buf_bytes);
  j.at("acc_buf_bytes").get_to(p.acc_buf_bytes);
  j.at("alu_lanes").get_to(p.alu_lanes);
  j.at("freq_mhz").get_to(p.freq_mhz);
}

inline void to_json(nlohmann::json& j, const DeviceProfile& d) {
  j = nlohmann::json{{"name", d.name},
                     {"dsp_total", d.dsp_total},
                     {"bram_kbits_total", d.bram_kbits_total},
                     {"lut_total", d.lut_total},
                     {"max_freq_mhz", d.max_freq_mhz},
                     {"util_cap", d.util_cap}};
}

inline void from_json(const nlohmann::json& j, DeviceProfile& d) {
  j.at("name").get_to(d.name);
  j.at("dsp_total").get_to(d.dsp_total);
  j.at("bram_kbits_total").get_to(d.bram_kbits_total);
  j.at("lut_total").get_to(d.lut_total);
  j.at("max_freq_mhz").get_to(d.max_freq_mhz);
  j.at("util_cap").get_to(d.util_cap);
  if (d.dsp_total <= 0 || d.bram_kbits_total <= 0 || d.lut_total <= 0 || !(d.max_freq_mhz > 0))
    throw ValidationError("device profile '" + d.name + "': resource totals must be positive");
  if (!(d.util_cap > 0.0 && d.util_cap <= 1.0)) throw ValidationError("device profile util_cap must be in (0,1]");
}

inline void to_json(nlohmann::json& j, const ResourceEstimate& r) {
  j = nlohmann::json{{"dsp", r.dsp}, {"bram_kbits", r.bram_kbits}, {"lut", r.lut}};
}

inline void to_json(nlohmann::json& j, const CandidateSpace& s) {
  j = nlohmann::json{{"batch", s.batch},
                     {"block_in", s.block_in},
                     {"block_out", s.block_out},
                     {"inp_bits", s.inp_bits},
                     {"wgt_bits", s.wgt_bits},
                     {"acc_bits", s.acc_bits},
                     {"uop_buf_bytes", s.uop_buf_bytes},
                     {"inp_buf_bytes", s.inp_buf_bytes},
                     {"wgt_buf_bytes", s.wgt_buf_bytes},
                     {"acc_buf_bytes", s.acc_buf_bytes},
                     {"alu_lanes", s.alu_lanes},
                     {"freq_mhz", s.freq_mhz}};
}

inline void from_json(const nlohmann::json& j, CandidateSpace& s) {
  j.at("batch").get_to(s.batch);
  j.at("block_in").get_to(s.block_in);
  j.at("block_out").get_to(s.block_out);
  j.at("inp_bits").get_to(s.inp_bits);
  j.at("wgt_bits").get_to(s.wgt_bits);
  j.at("acc_bits").get_to(s.acc_bits);
  j.at("uop_buf_bytes").get_to(s.uop_buf_bytes);
  j.at("inp_buf_bytes").get_to(s.inp_buf_bytes);
  j.at("wgt_buf_bytes").get_to(s.wgt_buf_bytes);
  j.at("acc_buf_bytes").get_to(s.acc_buf_bytes);
  j.at("alu_lanes").get_to(s.alu_lanes);
  j.at("freq_mhz").get_to(s.freq_mhz);
}

}  // namespace vta
