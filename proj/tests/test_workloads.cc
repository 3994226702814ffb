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
 * \file test_workloads.cc
 * \brief Built-in workloads and graphs: shapes, mappability and serialization.
 */
#include <gtest/gtest.h>

#include <fstream>
#include <set>

#include "oracle.hpp"
#include "vta/runtime.hpp"
#include "vta/workloads.hpp"

namespace {

using namespace vta;

/*! \brief Multiply-accumulates of a plain convolution, counted from the loop bounds. */
std::int64_t conv_macs(std::int64_t ic, std::int64_t oc, std::int64_t hw, std::int64_t k, std::int64_t stride,
                       std::int64_t pad) {
  const std::int64_t o = (hw + 2 * pad - k) / stride + 1;
  return ic * oc * k * k * o * o;
}

TEST(Workloads, AllOperatorsValidate) {
  for (const auto& [name, w] : builtin_workloads()) {
    EXPECT_EQ(w.name, name);
    EXPECT_FALSE(w.ops.empty()) << name;
    std::set<std::string> names;
    for (const auto& op : w.ops) {
      EXPECT_NO_THROW(op.validate()) << name << "/" << op.name;
      EXPECT_GE(op.occurrence, 1);
      EXPECT_TRUE(names.insert(op.name).second) << "duplicate " << op.name;
    }
    for (const auto& [tag, op] : w.tags) EXPECT_TRUE(names.count(op)) << tag;
  }
  EXPECT_THROW(builtin_workload("nope"), ParseError);
}

TEST(Workloads, ReferenceLayerTagged) {
  const WorkloadDef w = builtin_workload("resnet18-layers");
  ASSERT_EQ(w.tags.at("reference"), "ref3x3");
  const auto it = std::find_if(w.ops.begin(), w.ops.end(), [](const OperatorSpec& s) { return s.name == "ref3x3"; });
  ASSERT_NE(it, w.ops.end());
  EXPECT_EQ(it->occurrence, 1);
  EXPECT_EQ(op_count(*it), 2 * conv_macs(256, 256, 14, 3, 1, 0));
  EXPECT_EQ(op_count(reference_layer()), op_count(*it));
}

TEST(Workloads, ResnetConvolutionMacs) {
  // The network body without the reference entry: about 1.81 GMAC.
  std::int64_t macs = 0;
  for (const auto& op : builtin_workload("resnet18-layers").ops)
    if (op.name != "ref3x3") macs += op.occurrence * mac_count(op);
  const std::int64_t want = conv_macs(3, 64, 224, 7, 2, 3) + 4 * conv_macs(64, 64, 56, 3, 1, 1) +
                            conv_macs(64, 128, 56, 3, 2, 1) + 3 * conv_macs(128, 128, 28, 3, 1, 1) +
                            conv_macs(64, 128, 56, 1, 2, 0) + conv_macs(128, 256, 28, 3, 2, 1) +
                            3 * conv_macs(256, 256, 14, 3, 1, 1) + conv_macs(128, 256, 28, 1, 2, 0) +
                            conv_macs(256, 512, 14, 3, 2, 1) + 3 * conv_macs(512, 512, 7, 3, 1, 1) +
                            conv_macs(256, 512, 14, 1, 2, 0);
  EXPECT_EQ(macs, want);
  EXPECT_NEAR(static_cast<double>(macs) / 1e9, 1.81, 0.01);
}

TEST(Workloads, DcganIsTransposeAndAlu) {
  for (const auto& op : builtin_workload("dcgan-mini").ops)
    EXPECT_TRUE(op.kind == OpKind::kConv2dTranspose || op.kind == OpKind::kElementwise) << op.name;
}

TEST(Workloads, MobilenetHasGroupedConvolutions) {
  int grouped = 0;
  for (const auto& op : builtin_workload("mobilenetg-mini").ops)
    if (op.kind == OpKind::kGroupedConv2d && op.groups > 1) ++grouped;
  EXPECT_GE(grouped, 2);
}

TEST(Workloads, ToyOperatorsMapOnDefaultPoint) {
  const HardwareParams p;
  for (const auto& [name, w] : builtin_workloads()) {
    if (name.rfind("toy-", 0) != 0) continue;
    for (const auto& op : w.ops) {
      if (op.kind == OpKind::kElementwise && op.alu_op == AluOp::kShr) continue;
      EXPECT_FALSE(unmappable_reason(op, p).has_value()) << name << "/" << op.name;
      EXPECT_FALSE(legal_schedules(op, p).empty()) << name << "/" << op.name;
    }
  }
}

TEST(Workloads, JsonRoundTrip) {
  for (const auto& [name, w] : builtin_workloads()) {
    const nlohmann::json j = workload_json(w);
    const WorkloadDef back = parse_workload(nlohmann::json::parse(j.dump()));
    EXPECT_EQ(workload_json(back), j) << name;
  }
  EXPECT_THROW(parse_workload(nlohmann::json{{"name", "x"}, {"ops", nlohmann::json::array()}}), ParseError);
  EXPECT_THROW(parse_workload(nlohmann::json{{"name", "x"}}), ParseError);
}

TEST(Workloads, GraphsRunAndMatchOracle) {
  for (const std::string name : {"toy-conv", "toy-grouped", "toy-transpose", "toy-dense", "toy-alu"}) {
    const Graph g = workload_graph(builtin_workload(name), 5);
    EXPECT_EQ(graph_json(parse_graph(graph_json(g))), graph_json(g));
    const auto inputs = random_graph_inputs(g);
    GraphOptions opt;
    opt.verify = false;
    const GraphReport r = execute_graph(g, HardwareParams{}, TimingModel{}, inputs, opt);
    for (std::size_t k = 0; k < g.nodes.size(); ++k) {
      const auto& node = g.nodes[k];
      EXPECT_EQ(r.nodes[k].placement, Placement::kDevice) << name << "/" << node.name;
      OperatorInputs in = node_parameters(g, k);
      in.x = inputs.at(node.inputs[0]);
      if (node.inputs.size() > 1) in.x2 = inputs.at(node.inputs[1]);
      EXPECT_TRUE(oracle::equal(oracle::evaluate(node.op, in), r.outputs.at(node.name))) << name << "/" << node.name;
    }
  }
}

TEST(Graphs, ResnetTinyMatchesFixture) {
  std::ifstream in(std::string(VTA_TEST_DATA) + "/graphs/resnet_tiny.json");
  const nlohmann::json fixture = nlohmann::json::parse(in);
  EXPECT_EQ(graph_json(parse_graph(fixture)), graph_json(resnet_tiny()));
  EXPECT_EQ(builtin_graphs().count("resnet-tiny"), 1u);
}

TEST(Graphs, ResnetTinyIsTopological) {
  const Graph g = resnet_tiny();
  std::set<std::string> seen;
  for (const auto& i : g.inputs) seen.insert(i.name);
  for (const auto& n : g.nodes) {
    for (const auto& i : n.inputs) EXPECT_TRUE(seen.count(i)) << n.name << " reads " << i;
    seen.insert(n.name);
  }
  ASSERT_EQ(g.outputs, std::vector<std::string>{"fc"});
  EXPECT_EQ(g.nodes.back().op.output_dims(), (std::vector<std::int64_t>{1, 10}));
}

}  // namespace
