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
 * \file asm.hpp
 * \brief Text assembly for task programs.
 *
 * One instruction per line: `OPCODE key=value ...`. Omitted fields are
 * zero, except iter_out/iter_in/uop_end which default to 1. Dependency
 * flags are written as `pop_prev=1` etc. Lines after an `@uops` directive
 * are micro-ops: `UOP acc_idx=a inp_idx=b wgt_idx=c`. `#` and `;` start
 * comments. The canonical form is what disassemble() prints.
 */
#pragma once

#include <cctype>
#include <charconv>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "isa.hpp"

namespace vta {

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

inline std::vector<std::string_view> split_ws(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i]))) ++i;
    std::size_t j = i;
    while (j < s.size() && !std::isspace(static_cast<unsigned char>(s[j]))) ++j;
    if (j > i) out.push_back(s.substr(i, j - i));
    i = j;
  }
  return out;
}

inline std::int64_t parse_int(std::string_view text, int line) {
  bool neg = false;
  std::string_view s = text;
  if (!s.empty() && (s.front() == '-' || s.front() == '+')) {
    neg = s.front() == '-';
    s.remove_prefix(1);
  }
  int base = 10;
  if (s.size() > 2 && s[0] == '0' && (s[1] == 'x' || s[1] == 'X')) {
    base = 16;
    s.remove_prefix(2);
  }
  std::uint64_t v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v, base);
  if (s.empty() || ec != std::errc() || ptr != s.data() + s.size() || v > (std::uint64_t{1} << 40))
    throw ParseError("bad integer '" + std::string(text) + "'", line);
  return neg ? -static_cast<std::int64_t>(v) : static_cast<std::int64_t>(v);
}

inline std::int64_t parse_symbol_or_int(std::string_view key, std::string_view text, int line) {
  if (key == "mem_scope") {
    for (int s = 0; s <= 4; ++s)
      if (text == scope_name(static_cast<MemScope>(s))) return s;
  }
  if (key == "alu_opcode") {
    for (int s = 0; s <= 3; ++s)
      if (text == alu_name(static_cast<AluOp>(s))) return s;
  }
  return parse_int(text, line);
}

using KeyValues = std::map<std::string, std::pair<std::string, bool>, std::less<>>;

inline KeyValues parse_pairs(const std::vector<std::string_view>& toks, int line) {
  KeyValues kv;
  for (std::size_t t = 1; t < toks.size(); ++t) {
    const auto eq = toks[t].find('=');
    if (eq == std::string_view::npos || eq == 0) throw ParseError("expected key=value, got '" + std::string(toks[t]) + "'", line);
    std::string key(toks[t].substr(0, eq));
    if (kv.count(key)) throw ParseError("duplicate key '" + key + "'", line);
    kv[key] = {std::string(toks[t].substr(eq + 1)), false};
  }
  return kv;
}

}  // namespace detail

inline Instruction assemble_line(std::string_view text, int line = 0) {
  const auto toks = detail::split_ws(text);
  if (toks.empty()) throw ParseError("empty instruction", line);
  Instruction insn;
  const std::string_view op = toks[0];
  if (op == "LOAD") insn.body = LoadInsn{};
  else if (op == "STORE") insn.body = StoreInsn{};
  else if (op == "GEMM") insn.body = GemmInsn{};
  else if (op == "FINISH") insn.body = FinishInsn{};
  else if (op == "ALU") insn.body = AluInsn{};
  else throw ParseError("unknown opcode '" + std::string(op) + "'", line);

  auto kv = detail::parse_pairs(toks, line);
  auto take = [&](const std::string& key) -> std::optional<std::string> {
    auto it = kv.find(key);
    if (it == kv.end()) return std::nullopt;
    it->second.second = true;
    return it->second.first;
  };
  auto flag = [&](const char* key, bool& dst) {
    if (auto v = take(key)) {
      const auto n = detail::parse_int(*v, line);
      if (n != 0 && n != 1) throw ParseError(std::string(key) + " must be 0 or 1", line);
      dst = n == 1;
    }
  };
  flag("pop_prev", insn.deps.pop_prev);
  flag("pop_next", insn.deps.pop_next);
  flag("push_prev", insn.deps.push_prev);
  flag("push_next", insn.deps.push_next);

  std::visit(
      [&](auto& body) {
        for_each_field(body, [&](const char* name, auto& field, int width, bool is_signed) {
          auto v = take(name);
          if (!v) return;
          const std::int64_t n = detail::parse_symbol_or_int(name, *v, line);
          if (!detail::field_fits(n, width, is_signed))
            throw ParseError(std::string(name) + "=" + std::to_string(n) + " does not fit in " +
                                 std::to_string(width) + " bits",
                             line);
          detail::set_field(field, n);
        });
      },
      insn.body);
  for (const auto& [key, val] : kv)
    if (!val.second) throw ParseError("unknown key '" + key + "' for " + std::string(op), line);
  auto inv = check_instruction(insn);
  if (!inv.empty()) throw ParseError(inv.front(), line);
  return insn;
}

inline MicroOp assemble_uop(std::string_view text, int line = 0) {
  auto toks = detail::split_ws(text);
  if (toks.empty() || toks[0] != "UOP") throw ParseError("expected 'UOP acc_idx=.. inp_idx=.. wgt_idx=..'", line);
  auto kv = detail::parse_pairs(toks, line);
  MicroOp u;
  auto field = [&](const char* key, std::uint32_t& dst, int width) {
    auto it = kv.find(key);
    if (it == kv.end()) return;
    it->second.second = true;
    const auto n = detail::parse_int(it->second.first, line);
    if (n < 0 || !bits::fits_unsigned(static_cast<std::uint64_t>(n), width))
      throw ParseError(std::string(key) + "=" + std::to_string(n) + " does not fit in " + std::to_string(width) + " bits",
                       line);
    dst = static_cast<std::uint32_t>(n);
  };
  field("acc_idx", u.acc_idx, kAccIdxBits);
  field("inp_idx", u.inp_idx, kInpIdxBits);
  field("wgt_idx", u.wgt_idx, kWgtIdxBits);
  for (const auto& [key, val] : kv)
    if (!val.second) throw ParseError("unknown key '" + key + "' for UOP", line);
  return u;
}

inline Program assemble(std::string_view text) {
  Program prog;
  bool in_uops = false;
  int line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    const auto cut = line.find_first_of("#;");
    if (cut != std::string_view::npos) line = line.substr(0, cut);
    line = detail::trim(line);
    if (line.empty()) continue;
    if (line == "@uops") {
      in_uops = true;
      continue;
    }
    if (in_uops) prog.uops.push_back(assemble_uop(line, line_no));
    else prog.insns.push_back(assemble_line(line, line_no));
  }
  return prog;
}

inline std::string disassemble_instruction(const Instruction& insn) {
  std::ostringstream os;
  os << opcode_name(insn.opcode());
  if (insn.deps.pop_prev) os << " pop_prev=1";
  if (insn.deps.pop_next) os << " pop_next=1";
  if (insn.deps.push_prev) os << " push_prev=1";
  if (insn.deps.push_next) os << " push_next=1";
  std::visit(
      [&](const auto& body) {
        for_each_field(body, [&](const char* name, const auto& field, int, bool) {
          os << ' ' << name << '=';
          using T = std::decay_t<decltype(field)>;
          if constexpr (std::is_same_v<T, MemScope>) os << scope_name(field);
          else if constexpr (std::is_same_v<T, AluOp>) os << alu_name(field);
          else os << detail::field_value(field);
        });
      },
      insn.body);
  return os.str();
}

inline std::string disassemble(const std::vector<Instruction>& insns, const std::vector<MicroOp>& uops) {
  std::ostringstream os;
  for (const auto& i : insns) os << disassemble_instruction(i) << '\n';
  if (!uops.empty()) {
    os << "@uops\n";
    for (const auto& u : uops)
      os << "UOP acc_idx=" << u.acc_idx << " inp_idx=" << u.inp_idx << " wgt_idx=" << u.wgt_idx << '\n';
  }
  return os.str();
}

inline std::string disassemble(const Program& prog) { return disassemble(prog.insns, prog.uops); }

}  // namespace vta
