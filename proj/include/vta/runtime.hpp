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
 * \file runtime.hpp
 * \brief JIT program assembly, micro-kernel caching and graph execution.
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
#include "compiler.hpp"
#include "config.hpp"
#include "isa.hpp"
#include "sim.hpp"
#include "tensor.hpp"

namespace vta {

/*!
 * \brief Content-keyed LRU cache of micro-kernels resident in the uop buffer.
 *
 * Placement is first-fit over free gaps; on a miss with no gap large
 * enough, least recently used kernels are evicted until one appears.
 */
class UopCache {
 public:
  explicit UopCache(std::int64_t capacity) : capacity_(capacity) {
    if (capacity_ < 1) throw CacheError("uop cache capacity must be positive");
  }

  struct Lookup {
    std::int64_t offset = 0;
    bool hit = false;
  };

  Lookup acquire(const std::vector<MicroOp>& uops) {
    const auto size = static_cast<std::int64_t>(uops.size());
    if (size < 1) throw CacheError("empty micro-kernel");
    if (size > capacity_)
      throw CacheError("micro-kernel of " + std::to_string(size) + " entries exceeds cache capacity " +
                       std::to_string(capacity_));
    ++tick_;
    auto it = entries_.find(uops);
    if (it != entries_.end()) {
      it->second.last_use = tick_;
      ++hits_;
      return {it->second.offset, true};
    }
    ++misses_;
    std::optional<std::int64_t> at;
    while (!(at = first_fit(size))) evict_lru();
    entries_.emplace(uops, Entry{*at, size, tick_});
    return {*at, false};
  }

  bool contains(const std::vector<MicroOp>& uops) const { return entries_.count(uops) != 0; }
  std::int64_t capacity() const { return capacity_; }
  std::int64_t hits() const { return hits_; }
  std::int64_t misses() const { return misses_; }
  std::int64_t evictions() const { return evictions_; }
  std::int64_t resident_entries() const {
    std::int64_t n = 0;
    for (const auto& [k, e] : entries_) n += e.size;
    return n;
  }

  void clear() {
    entries_.clear();
    hits_ = misses_ = evictions_ = 0;
  }

 private:
  struct Entry {
    std::int64_t offset, size, last_use;
  };

  std::optional<std::int64_t> first_fit(std::int64_t size) const {
    std::vector<std::pair<std::int64_t, std::int64_t>> used;
    for (const auto& [k, e] : entries_) used.emplace_back(e.offset, e.offset + e.size);
    std::sort(used.begin(), used.end());
    std::int64_t cursor = 0;
    for (const auto& [b, e] : used) {
      if (b - cursor >= size) return cursor;
      cursor = std::max(cursor, e);
    }
    if (capacity_ - cursor >= size) return cursor;
    return std::nullopt;
  }

  void evict_lru() {
    if (entries_.empty()) throw InternalError("uop cache cannot place a kernel that fits its capacity");
    auto victim = entries_.begin();
    for (auto it = entries_.begin(); it != entries_.end(); ++it)
      if (it->second.last_use < victim->second.last_use) victim = it;
    entries_.erase(victim);
    ++evictions_;
  }

  std::int64_t capacity_;
  std::map<std::vector<MicroOp>, Entry> entries_;
  std::int64_t tick_ = 0, hits_ = 0, misses_ = 0, evictions_ = 0;
};

/*! \brief Groups in issue order: round-robin over execution contexts. */
inline std::vector<std::size_t> interleave(const std::vector<InsnGroup>& groups) {
  std::map<int, std::vector<std::size_t>> per_ctx;
  for (std::size_t g = 0; g < groups.size(); ++g) per_ctx[groups[g].context].push_back(g);
  std::vector<std::size_t> order;
  order.reserve(groups.size());
  for (std::size_t round = 0; order.size() < groups.size(); ++round)
    for (const auto& [ctx, list] : per_ctx)
      if (round < list.size()) order.push_back(list[round]);
  return order;
}

struct CompileStats {
  std::int64_t cache_hits = 0;
  std::int64_t cache_misses = 0;
  std::int64_t uop_loads = 0;
  std::int64_t tokens = 0;
};

namespace detail {

struct TokenEdge {
  std::size_t producer, consumer;  ///< positions in issue order
  Queue queue;
};

/*!
 * \brief Dependency edges between groups of the same context.
 *
 * A load waits for the context's previous compute (its buffers are free),
 * a compute waits for its load and, after a store, for that store (the
 * accumulator is free), and a store waits for the compute before it.
 */
inline std::vector<TokenEdge> token_edges(const std::vector<InsnGroup>& groups, const std::vector<std::size_t>& order) {
  std::vector<TokenEdge> edges;
  struct CtxState {
    std::optional<std::size_t> last_load, last_compute, last_store;
    bool store_since_compute = false;
  };
  std::map<int, CtxState> st;
  for (std::size_t pos = 0; pos < order.size(); ++pos) {
    const InsnGroup& g = groups[order[pos]];
    CtxState& c = st[g.context];
    switch (g.stage) {
      case Stage::kLoad:
        if (c.last_compute) edges.push_back({*c.last_compute, pos, Queue::kC2L});
        c.last_load = pos;
        break;
      case Stage::kCompute:
        if (c.last_load && (!c.last_compute || *c.last_load > *c.last_compute))
          edges.push_back({*c.last_load, pos, Queue::kL2C});
        if (c.store_since_compute && c.last_store) edges.push_back({*c.last_store, pos, Queue::kS2C});
        c.last_compute = pos;
        c.store_since_compute = false;
        break;
      case Stage::kStore:
        if (!c.last_compute) throw InternalError("store group without a preceding compute group");
        edges.push_back({*c.last_compute, pos, Queue::kC2S});
        c.last_store = pos;
        c.store_since_compute = true;
        break;
    }
  }
  // Tokens are matched first-in first-out per queue, so producers must appear
  // in the same order as their consumers.
  for (int q = 0; q < kNumQueues; ++q) {
    std::optional<std::size_t> prev;
    std::vector<TokenEdge> sorted;
    for (const auto& e : edges)
      if (static_cast<int>(e.queue) == q) sorted.push_back(e);
    std::sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) { return a.consumer < b.consumer; });
    for (const auto& e : sorted) {
      if (prev && e.producer <= *prev)
        throw InternalError(std::string("token order on ") + queue_name(static_cast<Queue>(q)) + " is not FIFO");
      prev = e.producer;
    }
  }
  return edges;
}

inline void set_push(DepFlags& d, Queue q) {
  switch (q) {
    case Queue::kL2C: d.push_next = true; break;   // load -> compute
    case Queue::kC2L: d.push_prev = true; break;   // compute -> load
    case Queue::kC2S: d.push_next = true; break;   // compute -> store
    case Queue::kS2C: d.push_prev = true; break;   // store -> compute
  }
}

inline void set_pop(DepFlags& d, Queue q) {
  switch (q) {
    case Queue::kL2C: d.pop_prev = true; break;
    case Queue::kC2L: d.pop_next = true; break;
    case Queue::kC2S: d.pop_prev = true; break;
    case Queue::kS2C: d.pop_next = true; break;
  }
}

}  // namespace detail

/*!
 * \brief Assembles a lowered kernel into a runnable program.
 *
 * Micro-kernels are resolved through `cache`; misses insert a UOP load
 * in front of the consuming instruction and append the kernel to the
 * program's micro-op segment. The cache must mirror the uop buffer of
 * the machine that will run the program.
 */
inline Program build_command_stream(const LoweredKernel& k, UopCache& cache, CompileStats* stats = nullptr) {
  const std::vector<std::size_t> order = interleave(k.groups);
  const auto edges = detail::token_edges(k.groups, order);

  Program prog;
  std::map<int, std::int64_t> segment;  // kernel id -> offset in prog.uops
  std::vector<std::vector<Instruction>> issued(order.size());
  CompileStats local;
  for (std::size_t pos = 0; pos < order.size(); ++pos) {
    const InsnGroup& g = k.groups[order[pos]];
    auto& out = issued[pos];
    for (const KernelInsn& ki : g.insns) {
      Instruction insn = ki.insn;
      if (ki.kernel >= 0) {
        const auto& uops = k.kernels.at(static_cast<std::size_t>(ki.kernel)).uops;
        const UopCache::Lookup l = cache.acquire(uops);
        if (l.hit) {
          ++local.cache_hits;
        } else {
          ++local.cache_misses;
          auto seg = segment.find(ki.kernel);
          if (seg == segment.end()) {
            seg = segment.emplace(ki.kernel, static_cast<std::int64_t>(prog.uops.size())).first;
            prog.uops.insert(prog.uops.end(), uops.begin(), uops.end());
          }
          LoadInsn ld;
          ld.mem_scope = MemScope::kUop;
          ld.sram_base = static_cast<std::uint32_t>(l.offset);
          ld.dram_base = static_cast<std::uint32_t>(seg->second);
          ld.y_size = 1;
          ld.x_size = static_cast<std::uint32_t>(uops.size());
          ld.x_stride = ld.x_size;
          out.push_back(Instruction{{}, ld});
          ++local.uop_loads;
        }
        LoopNest* n = insn.nest();
        n->uop_bgn = static_cast<std::uint32_t>(l.offset);
        n->uop_end = static_cast<std::uint32_t>(l.offset + static_cast<std::int64_t>(uops.size()));
      }
      out.push_back(insn);
    }
  }
  for (const auto& e : edges) {
    detail::set_push(issued[e.producer].back().deps, e.queue);
    detail::set_pop(issued[e.consumer].front().deps, e.queue);
    ++local.tokens;
  }
  for (auto& grp : issued)
    for (auto& insn : grp) prog.insns.push_back(std::move(insn));
  prog.insns.push_back(Instruction{{}, FinishInsn{}});
  if (stats) *stats = local;
  return prog;
}

/*! \brief Lowers and assembles against an empty cache. */
inline Program compile(const OperatorSpec& s, const Schedule& sc, const HardwareParams& p,
                       CompileStats* stats = nullptr) {
  UopCache cache(p.uop_depth());
  return build_command_stream(lower(s, sc, p), cache, stats);
}

/*!
 * \brief Best-effort default: largest tiles that fit, preferring two
 *        contexts and output-block micro-op unrolling.
 */
inline std::optional<Schedule> default_schedule(const OperatorSpec& s, const HardwareParams& p) {
  const auto legal = legal_schedules(s, p);
  if (legal.empty()) return std::nullopt;
  auto key = [&](const Schedule& c) {
    return std::make_tuple(c.tile_oc * c.tile_ic * c.tile_h * c.tile_w, c.vthreads == 2, c.oc_unroll, c.tile_h,
                           c.tile_w, c.tile_oc);
  };
  return *std::max_element(legal.begin(), legal.end(),
                           [&](const Schedule& a, const Schedule& b) { return key(a) < key(b); });
}

/*!
 * \brief Cycle floor for an operator: the busier of compute (GEMM issue)
 *        and memory (every operand byte moved once).
 */
inline std::int64_t lower_bound_cycles(const OperatorSpec& s, const HardwareParams& p, const TimingModel& t) {
  const Geometry g = geometry(s, p);
  std::int64_t compute = 0;
  if (s.conv_like() || s.kind == OpKind::kConv2dTranspose) {
    const std::int64_t per_tile = p.intrinsic_macs();
    compute = bits::ceil_div(bits::ceil_div(mac_count(s), per_tile), t.gemm_tiles_per_cycle);
  } else {
    const std::int64_t taps = s.kind == OpKind::kMaxpool ? s.KH * s.KW : 1;
    compute = g.NB * g.CO * g.OH * g.OW * taps * p.alu_tile_cycles();
  }
  std::int64_t bytes = make_layout(s.input_dims(), p, s.conv_like() || s.kind == OpKind::kConv2dTranspose
                                                          ? Role::kInp : Role::kAcc).bytes();
  if (s.kind == OpKind::kElementwise) bytes *= 2;
  if (auto wd = s.weight_dims()) {
    auto w = *wd;
    if (w.size() == 2) w = {w[0], w[1], 1, 1};
    bytes += make_layout(w, p, Role::kWgt).bytes();
  }
  bytes += make_layout(s.output_dims(), p, Role::kOut).bytes();
  const std::int64_t memory = bits::ceil_div(bytes, t.dram_bytes_per_cycle);
  return std::max<std::int64_t>({compute, memory, 1});
}

/*! \brief Result of one accelerated operator. */
struct KernelRun {
  Tensor output;
  ExecReport report;
  CompileStats compile;
};

/*! \brief Lowers, assembles and runs one operator on `machine`, keeping `cache` in sync. */
inline KernelRun run_operator(const OperatorSpec& s, const Schedule& sc, const OperatorInputs& in, SimMachine& machine,
                              UopCache& cache, const RunOptions& opt = {}) {
  const LoweredKernel k = lower(s, sc, machine.params());
  KernelRun r;
  const Program prog = build_command_stream(k, cache, &r.compile);
  Dram dram = build_dram(k, in);
  r.report = machine.run(dram, prog, opt);
  r.output = read_output(k, dram);
  return r;
}

// ---------------------------------------------------------------------------
// Graphs

enum class Placement : std::uint8_t { kAuto, kDevice, kHost };

inline const char* placement_name(Placement p) {
  switch (p) {
    case Placement::kAuto: return "auto";
    case Placement::kDevice: return "device";
    case Placement::kHost: return "host";
  }
  return "?";
}

inline Placement parse_placement(const std::string& s) {
  if (s == "auto") return Placement::kAuto;
  if (s == "device") return Placement::kDevice;
  if (s == "host") return Placement::kHost;
  throw ParseError("unknown placement '" + s + "'");
}

struct GraphInput {
  std::string name;
  std::vector<std::int64_t> dims;
};

struct GraphNode {
  std::string name;
  OperatorSpec op;
  std::vector<std::string> inputs;
  Placement placement = Placement::kAuto;
  std::optional<Schedule> schedule;
};

/*! \brief Operator DAG in topological order; weights are generated from `seed`. */
struct Graph {
  std::vector<GraphInput> inputs;
  std::vector<GraphNode> nodes;
  std::vector<std::string> outputs;
  std::uint64_t seed = 0;
};

inline Graph parse_graph(const nlohmann::json& j) {
  Graph g;
  try {
    g.seed = j.value("seed", std::uint64_t{0});
    std::map<std::string, std::vector<std::int64_t>> known;
    for (const auto& x : j.at("inputs")) {
      GraphInput in{x.at("name").get<std::string>(), x.at("dims").get<std::vector<std::int64_t>>()};
      if (known.count(in.name)) throw ParseError("duplicate tensor name '" + in.name + "'");
      known[in.name] = in.dims;
      g.inputs.push_back(std::move(in));
    }
    for (const auto& x : j.at("nodes")) {
      GraphNode n;
      n.name = x.at("name").get<std::string>();
      n.op = x.at("op").get<OperatorSpec>();
      if (n.op.name.empty()) n.op.name = n.name;
      n.inputs = x.at("inputs").get<std::vector<std::string>>();
      n.placement = parse_placement(x.value("placement", std::string("auto")));
      if (x.contains("schedule")) n.schedule = x.at("schedule").get<Schedule>();
      if (static_cast<int>(n.inputs.size()) != n.op.num_data_inputs())
        throw ParseError("node '" + n.name + "' expects " + std::to_string(n.op.num_data_inputs()) + " inputs");
      for (const auto& in : n.inputs) {
        auto it = known.find(in);
        if (it == known.end()) throw ParseError("node '" + n.name + "' reads undefined tensor '" + in + "'");
        if (Tensor::count(it->second) != Tensor::count(n.op.input_dims()))
          throw ParseError("node '" + n.name + "' input '" + in + "' has shape " + shape_string(it->second) +
                           ", operator expects " + shape_string(n.op.input_dims()));
      }
      if (known.count(n.name)) throw ParseError("duplicate tensor name '" + n.name + "'");
      known[n.name] = n.op.output_dims();
      g.nodes.push_back(std::move(n));
    }
    g.outputs = j.at("outputs").get<std::vector<std::string>>();
    for (const auto& o : g.outputs)
      if (!known.count(o)) throw ParseError("graph output '" + o + "' is undefined");
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("graph: ") + e.what());
  }
  return g;
}

inline nlohmann::json graph_json(const Graph& g) {
  nlohmann::json j;
  j["seed"] = g.seed;
  j["inputs"] = nlohmann::json::array();
  for (const auto& in : g.inputs) j["inputs"].push_back({{"name", in.name}, {"dims", in.dims}});
  j["nodes"] = nlohmann::json::array();
  for (const auto& n : g.nodes) {
    nlohmann::json x{{"name", n.name}, {"op", n.op}, {"inputs", n.inputs}, {"placement", placement_name(n.placement)}};
    if (n.schedule) x["schedule"] = *n.schedule;
    j["nodes"].push_back(std::move(x));
  }
  j["outputs"] = g.outputs;
  return j;
}

/*! \brief Deterministic weights and bias of node `index`. */
inline OperatorInputs node_parameters(const Graph& g, std::size_t index) {
  const OperatorSpec& s = g.nodes.at(index).op;
  Rng rng(mix_seed(g.seed, 0x9e37u + index));
  OperatorInputs in;
  if (auto wd = s.weight_dims()) in.w = Tensor::random(*wd, DType::kI8, rng, -8, 8);
  if (s.has_bias()) in.bias = Tensor::random({s.OC}, DType::kI32, rng, -256, 256);
  return in;
}

/*! \brief Deterministic graph inputs drawn from `seed`. */
inline std::map<std::string, Tensor> random_graph_inputs(const Graph& g) {
  std::map<std::string, Tensor> out;
  Rng rng(mix_seed(g.seed, 0x1234u));
  for (const auto& in : g.inputs) out[in.name] = Tensor::random(in.dims, DType::kI8, rng, -128, 127);
  return out;
}

struct NodeReport {
  std::string name;
  Placement placement = Placement::kHost;
  std::optional<Schedule> schedule;
  std::int64_t cycles = 0;
  std::int64_t macs = 0;
  std::string reason;  ///< why a node ran on the host
};

struct GraphReport {
  std::int64_t total_cycles = 0;  ///< device cycles; host nodes are reported but not timed
  std::int64_t host_macs = 0;
  std::vector<NodeReport> nodes;
  std::int64_t cache_hits = 0, cache_misses = 0;
  std::map<std::string, Tensor> outputs;
};

inline nlohmann::json graph_report_json(const GraphReport& r) {
  nlohmann::json j;
  j["total_cycles"] = r.total_cycles;
  j["host_macs"] = r.host_macs;
  j["cache"] = {{"hits", r.cache_hits}, {"misses", r.cache_misses}};
  j["per_node"] = nlohmann::json::array();
  for (const auto& n : r.nodes) {
    nlohmann::json x{{"name", n.name}, {"placement", placement_name(n.placement)}, {"cycles", n.cycles},
                     {"macs", n.macs}};
    if (n.schedule) x["schedule"] = *n.schedule;
    if (!n.reason.empty()) x["reason"] = n.reason;
    j["per_node"].push_back(std::move(x));
  }
  return j;
}

struct GraphOptions {
  bool verify = true;  ///< compare each device result against the host reference
  bool allow_channel_pad = true;  ///< false: channels must be block multiples to map
  RunOptions run{};
};

/*!
 * \brief Runs a graph node by node on one persistent machine.
 *
 * The micro-op cache survives across nodes, so repeated kernels are not
 * reloaded. Nodes that cannot be mapped fall back to the host reference
 * under auto placement and are an error under device placement.
 */
inline GraphReport execute_graph(const Graph& g, const HardwareParams& p, const TimingModel& t,
                                 std::map<std::string, Tensor> tensors, const GraphOptions& opt = {}) {
  validate_params(p);
  SimMachine machine(p, t);
  UopCache cache(p.uop_depth());
  GraphReport rep;
  for (const auto& in : g.inputs) {
    auto it = tensors.find(in.name);
    if (it == tensors.end()) throw ValidationError("graph input '" + in.name + "' was not provided");
    if (it->second.dims() != in.dims)
      throw ShapeError("graph input '" + in.name + "' has shape " + shape_string(it->second.dims()) + ", expected " +
                       shape_string(in.dims));
  }
  for (std::size_t idx = 0; idx < g.nodes.size(); ++idx) {
    const GraphNode& n = g.nodes[idx];
    OperatorInputs in = node_parameters(g, idx);
    in.x = tensors.at(n.inputs.at(0)).reshaped(n.op.input_dims());
    if (n.inputs.size() > 1) in.x2 = tensors.at(n.inputs[1]).reshaped(n.op.input_dims());

    NodeReport nr;
    nr.name = n.name;
    nr.macs = mac_count(n.op);
    std::optional<Schedule> sched;
    if (n.placement != Placement::kHost) {
      if (auto why = unmappable_reason(n.op, p, opt.allow_channel_pad)) {
        nr.reason = *why;
      } else if (n.schedule) {
        auto problems = check_schedule(n.op, *n.schedule, p);
        if (problems.empty()) sched = n.schedule;
        else nr.reason = "schedule: " + problems.front();
      } else {
        sched = default_schedule(n.op, p);
        if (!sched) nr.reason = "no legal schedule";
      }
      if (!sched && n.placement == Placement::kDevice)
        throw ScheduleError("node '" + n.name + "' cannot run on the device: " + nr.reason);
    }
    Tensor out;
    if (sched) {
      KernelRun kr = run_operator(n.op, *sched, in, machine, cache, opt.run);
      out = std::move(kr.output);
      nr.placement = Placement::kDevice;
      nr.schedule = sched;
      nr.cycles = kr.report.total_cycles;
      rep.total_cycles += kr.report.total_cycles;
      rep.cache_hits += kr.compile.cache_hits;
      rep.cache_misses += kr.compile.cache_misses;
      if (opt.verify && opt.run.functional) {
        const Tensor want = reference(n.op, in, p.inp_bits);
        if (!(want == out)) throw SimError("node '" + n.name + "': device output differs from the host reference");
      }
    } else {
      out = reference(n.op, in, p.inp_bits);
      nr.placement = Placement::kHost;
      rep.host_macs += nr.macs;
    }
    tensors[n.name] = std::move(out);
    rep.nodes.push_back(std::move(nr));
  }
  for (const auto& o : g.outputs) rep.outputs[o] = tensors.at(o);
  return rep;
}

}  // namespace vta
