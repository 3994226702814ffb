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
 * \file workloads.hpp
 * \brief Bundled workload definitions and executable graphs.
 */
#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "common.hpp"
#include "compiler.hpp"
#include "runtime.hpp"

namespace vta {

/*! \brief Operators of a model with occurrence counts; tags mark reference layers. */
struct WorkloadDef {
  std::string name;
  std::vector<OperatorSpec> ops;
  std::map<std::string, std::string> tags;  ///< tag -> operator name
};

inline nlohmann::json workload_json(const WorkloadDef& w) {
  nlohmann::json j{{"name", w.name}, {"ops", w.ops}};
  if (!w.tags.empty()) j["tags"] = w.tags;
  return j;
}

inline WorkloadDef parse_workload(const nlohmann::json& j) {
  WorkloadDef w;
  try {
    w.name = j.value("name", std::string("workload"));
    for (const auto& x : j.at("ops")) w.ops.push_back(x.get<OperatorSpec>());
    if (j.contains("tags")) w.tags = j.at("tags").get<std::map<std::string, std::string>>();
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("workload: ") + e.what());
  }
  if (w.ops.empty()) throw ParseError("workload '" + w.name + "' has no operators");
  return w;
}

namespace detail {

inline OperatorSpec conv(std::string name, std::int64_t ic, std::int64_t oc, std::int64_t hw, std::int64_t k,
                         std::int64_t stride, std::int64_t pad, std::int64_t occurrence = 1) {
  OperatorSpec s;
  s.kind = OpKind::kConv2d;
  s.name = std::move(name);
  s.IC = ic;
  s.OC = oc;
  s.H = s.W = hw;
  s.KH = s.KW = k;
  s.stride = stride;
  s.pad = pad;
  s.occurrence = occurrence;
  s.shift = 8;
  s.relu = true;
  return s;
}

inline OperatorSpec grouped(std::string name, std::int64_t ic, std::int64_t oc, std::int64_t hw, std::int64_t groups,
                            std::int64_t stride, std::int64_t occurrence = 1) {
  OperatorSpec s = conv(std::move(name), ic, oc, hw, 3, stride, 1, occurrence);
  s.kind = OpKind::kGroupedConv2d;
  s.groups = groups;
  return s;
}

inline OperatorSpec transpose(std::string name, std::int64_t ic, std::int64_t oc, std::int64_t hw) {
  OperatorSpec s = conv(std::move(name), ic, oc, hw, 4, 2, 1);
  s.kind = OpKind::kConv2dTranspose;
  return s;
}

inline OperatorSpec dense(std::string name, std::int64_t n, std::int64_t in, std::int64_t out) {
  OperatorSpec s;
  s.kind = OpKind::kDense;
  s.name = std::move(name);
  s.N = n;
  s.IC = in;
  s.OC = out;
  s.shift = 8;
  return s;
}

inline OperatorSpec eltwise(std::string name, std::int64_t c, std::int64_t hw, AluOp op) {
  OperatorSpec s;
  s.kind = OpKind::kElementwise;
  s.name = std::move(name);
  s.IC = s.OC = c;
  s.H = s.W = hw;
  s.alu_op = op;
  s.relu = true;
  return s;
}

inline OperatorSpec maxpool(std::string name, std::int64_t c, std::int64_t hw, std::int64_t k, std::int64_t stride) {
  OperatorSpec s;
  s.kind = OpKind::kMaxpool;
  s.name = std::move(name);
  s.IC = s.OC = c;
  s.H = s.W = hw;
  s.KH = s.KW = k;
  s.stride = stride;
  return s;
}

}  // namespace detail

/*! \brief The 3x3 layer used for single-layer schedule exploration. */
inline OperatorSpec reference_layer() {
  return detail::conv("ref3x3", 256, 256, 14, 3, 1, 0);
}

/*!
 * \brief Convolution and schedule whose load and compute stages take about
 *        the same time at the default design point with one context.
 */
inline std::pair<OperatorSpec, Schedule> balanced_fixture() {
  OperatorSpec s = detail::conv("balanced", 64, 64, 14, 3, 1, 1);
  Schedule sc;
  sc.tile_oc = 1;
  sc.tile_ic = 1;
  sc.tile_h = 8;
  sc.tile_w = 8;
  sc.vthreads = 1;
  sc.oc_unroll = true;
  return {s, sc};
}

/*! \brief 1x1 convolution with a long reduction; nearly every compute cycle is a GEMM step. */
inline std::pair<OperatorSpec, Schedule> gemm_microbenchmark() {
  OperatorSpec s = detail::conv("gemm", 1024, 64, 8, 1, 1, 0);
  s.shift = 0;
  s.relu = false;
  Schedule sc;
  sc.tile_oc = 1;
  sc.tile_ic = 1;
  sc.tile_h = 1;
  sc.tile_w = 1;
  sc.vthreads = 1;
  sc.oc_unroll = true;
  return {s, sc};
}

inline std::map<std::string, WorkloadDef> builtin_workloads() {
  using detail::conv;
  std::map<std::string, WorkloadDef> w;

  // Distinct convolution shapes of ResNet-18 on 224x224 inputs.
  w["resnet18-layers"] = {"resnet18-layers",
                          {conv("conv1", 3, 64, 224, 7, 2, 3),
                           conv("layer1", 64, 64, 56, 3, 1, 1, 4),
                           conv("layer2_down", 64, 128, 56, 3, 2, 1),
                           conv("layer2", 128, 128, 28, 3, 1, 1, 3),
                           conv("layer2_proj", 64, 128, 56, 1, 2, 0),
                           conv("layer3_down", 128, 256, 28, 3, 2, 1),
                           conv("layer3", 256, 256, 14, 3, 1, 1, 3),
                           conv("layer3_proj", 128, 256, 28, 1, 2, 0),
                           conv("layer4_down", 256, 512, 14, 3, 2, 1),
                           conv("layer4", 512, 512, 7, 3, 1, 1, 3),
                           conv("layer4_proj", 256, 512, 14, 1, 2, 0),
                           reference_layer()},
                          {{"reference", "ref3x3"}}};

  w["mobilenetg-mini"] = {"mobilenetg-mini",
                          {detail::grouped("g1", 32, 32, 16, 2, 1, 2),
                           detail::grouped("g2", 64, 64, 8, 4, 1, 2),
                           detail::grouped("g3", 64, 128, 8, 4, 2),
                           conv("pw", 128, 128, 4, 1, 1, 0, 2)},
                          {}};

  w["dcgan-mini"] = {"dcgan-mini",
                     {detail::transpose("up1", 64, 32, 4),
                      detail::transpose("up2", 32, 16, 8),
                      detail::transpose("up3", 16, 16, 16),
                      detail::eltwise("act", 16, 32, AluOp::kMax)},
                     {}};

  w["toy-conv"] = {"toy-conv", {conv("c0", 32, 32, 8, 3, 1, 1)}, {}};

  w["toy-conv-mix"] = {"toy-conv-mix",
                       {conv("c3x3", 32, 32, 8, 3, 1, 1, 2),
                        conv("c1x1", 16, 32, 8, 1, 1, 0),
                        conv("c3x3_s2", 32, 64, 8, 3, 2, 1)},
                       {}};

  w["toy-grouped"] = {"toy-grouped",
                      {detail::grouped("g", 32, 32, 8, 2, 1), conv("dense_equiv", 32, 32, 8, 3, 1, 1)},
                      {}};

  w["toy-transpose"] = {"toy-transpose", {detail::transpose("t", 16, 16, 4)}, {}};

  w["toy-dense"] = {"toy-dense", {detail::dense("fc", 4, 64, 32)}, {}};

  w["toy-alu"] = {"toy-alu",
                  {detail::eltwise("add", 16, 8, AluOp::kAdd), detail::maxpool("pool", 16, 8, 2, 2)},
                  {}};
  return w;
}

inline WorkloadDef builtin_workload(const std::string& name) {
  auto all = builtin_workloads();
  auto it = all.find(name);
  if (it == all.end()) throw ParseError("unknown workload '" + name + "'");
  return it->second;
}

/*!
 * \brief Graph whose nodes are the workload's operators, each fed by its own input.
 *
 * Used to check that every workload round-trips through the graph format.
 */
inline Graph workload_graph(const WorkloadDef& w, std::uint64_t seed = 0) {
  Graph g;
  g.seed = seed;
  for (const auto& op : w.ops) {
    const int n_in = op.num_data_inputs();
    GraphNode node;
    node.name = op.name;
    node.op = op;
    for (int k = 0; k < n_in; ++k) {
      const std::string in = op.name + "_in" + std::to_string(k);
      g.inputs.push_back({in, op.input_dims()});
      node.inputs.push_back(in);
    }
    g.nodes.push_back(node);
    g.outputs.push_back(op.name);
  }
  return g;
}

/*!
 * \brief Small residual network on 32x32 inputs: stem, four basic blocks,
 *        pooling and a classifier.
 */
inline Graph resnet_tiny(std::uint64_t seed = 7) {
  using detail::conv;
  Graph g;
  g.seed = seed;
  g.inputs.push_back({"data", {1, 16, 32, 32}});
  auto add = [&](OperatorSpec op, std::vector<std::string> in) {
    g.nodes.push_back({op.name, op, std::move(in), Placement::kAuto, std::nullopt});
  };
  add(conv("stem", 16, 16, 32, 3, 1, 1), {"data"});
  std::string x = "stem";
  struct Block {
    std::int64_t ic, oc, hw, stride;
  };
  const Block blocks[] = {{16, 16, 32, 1}, {16, 32, 32, 2}, {32, 32, 16, 1}, {32, 64, 16, 2}};
  int b = 1;
  for (const auto& blk : blocks) {
    const std::string p = "b" + std::to_string(b++);
    const std::int64_t ohw = blk.hw / blk.stride;
    add(conv(p + "_c1", blk.ic, blk.oc, blk.hw, 3, blk.stride, 1), {x});
    add(conv(p + "_c2", blk.oc, blk.oc, ohw, 3, 1, 1), {p + "_c1"});
    std::string skip = x;
    if (blk.stride != 1 || blk.ic != blk.oc) {
      add(conv(p + "_proj", blk.ic, blk.oc, blk.hw, 1, blk.stride, 0), {x});
      skip = p + "_proj";
    }
    add(detail::eltwise(p + "_add", blk.oc, ohw, AluOp::kAdd), {p + "_c2", skip});
    x = p + "_add";
  }
  add(detail::maxpool("pool", 64, 8, 2, 2), {x});
  add(detail::dense("fc", 1, 64 * 4 * 4, 10), {"pool"});
  g.outputs = {"fc"};
  return g;
}

inline std::map<std::string, Graph> builtin_graphs() { return {{"resnet-tiny", resnet_tiny()}}; }

}  // namespace vta
