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
 * \file test_config.cc
 * \brief Design points, the resource model and candidate pruning.
 */
#include <gtest/gtest.h>

#include <fstream>

#include "vta/config.hpp"

namespace {

using namespace vta;

nlohmann::json load(const std::string& rel) {
  std::ifstream in(std::string(VTA_TEST_DATA) + "/" + rel);
  return nlohmann::json::parse(in);
}

HardwareParams point(std::int64_t b, std::int64_t bi, std::int64_t bo) {
  HardwareParams p;
  p.batch = b;
  p.block_in = bi;
  p.block_out = bo;
  return p;
}

CandidateSpace fixed_space() { return CandidateSpace::singleton(HardwareParams{}); }

/*! Buffer sizes that keep every block shape from 8 to 16 within the depth caps. */
CandidateSpace small_buffer_space() {
  CandidateSpace s = fixed_space();
  s.inp_buf_bytes = {16 * 1024};
  s.wgt_buf_bytes = {64 * 1024};
  s.acc_buf_bytes = {64 * 1024};
  s.alu_lanes = {8};
  return s;
}

TEST(Params, DefaultIsValid) {
  EXPECT_TRUE(check_params(HardwareParams{}).empty());
  EXPECT_EQ(HardwareParams{}.intrinsic_name(), "(1,16)x(16,16)");
}

TEST(Params, RejectsNonPowerOfTwoBlocks) {
  HardwareParams p = point(1, 12, 16);
  EXPECT_FALSE(is_valid(p));
  EXPECT_THROW(validate_params(p), ValidationError);
}

TEST(Params, RejectsBuffersThatAreNotWholeTiles) {
  HardwareParams p;
  p.inp_buf_bytes = 100;
  EXPECT_FALSE(is_valid(p));
}

TEST(Params, RejectsDepthBeyondAddressableEntries) {
  HardwareParams p;
  p.inp_buf_bytes = 16 * 4096;  // 4096 entries of 16 bytes, fields address 2048
  EXPECT_FALSE(is_valid(p));
  p.inp_buf_bytes = 16 * 2048;
  EXPECT_TRUE(is_valid(p));
}

TEST(Params, TileGeometry) {
  HardwareParams p = point(2, 16, 16);
  EXPECT_EQ(p.inp_tile_bytes(), 32);
  EXPECT_EQ(p.wgt_tile_bytes(), 256);
  EXPECT_EQ(p.acc_tile_bytes(), 128);
  EXPECT_EQ(p.out_tile_bytes(), 32);
  EXPECT_EQ(p.intrinsic_macs(), 512);
}

TEST(Params, JsonRoundTrip) {
  HardwareParams p = point(8, 8, 8);
  p.wgt_buf_bytes = 64 * 1024;
  p.freq_mhz = 150;
  const nlohmann::json j = p;
  EXPECT_EQ(j.get<HardwareParams>(), p);
  EXPECT_EQ(load("hw/b8_8x8.json").get<HardwareParams>().batch, 8);
}

TEST(Enumerate, ReferenceIntrinsicsAreMembers) {
  CandidateSpace s = fixed_space();
  s.batch = {2, 8};
  s.block_in = {16, 8};
  s.block_out = {16, 8};
  s.wgt_buf_bytes = {64 * 1024};
  const auto c = enumerate_candidates(s);
  auto has = [&](std::int64_t b, std::int64_t bi, std::int64_t bo) {
    return std::any_of(c.begin(), c.end(), [&](const HardwareParams& p) {
      return p.batch == b && p.block_in == bi && p.block_out == bo;
    });
  };
  EXPECT_TRUE(has(2, 16, 16));
  EXPECT_TRUE(has(8, 8, 8));
}

TEST(Enumerate, SingletonAndProduct) {
  EXPECT_EQ(enumerate_candidates(fixed_space()).size(), 1u);
  CandidateSpace s = small_buffer_space();
  s.batch = {1, 2};
  s.block_in = {8, 16};
  s.block_out = {8, 16};
  EXPECT_EQ(enumerate_candidates(s).size(), 8u);
  EXPECT_EQ(enumerate_candidates(load("spaces/toy8.json").get<CandidateSpace>()).size(), 8u);
}

TEST(Enumerate, EmptySpaceIsEmpty) {
  CandidateSpace s = fixed_space();
  s.batch.clear();
  EXPECT_TRUE(enumerate_candidates(s).empty());
}

TEST(Enumerate, LexicographicOrder) {
  CandidateSpace s = small_buffer_space();
  s.batch = {2, 1};
  s.block_out = {16, 8};
  const auto c = enumerate_candidates(s);
  ASSERT_EQ(c.size(), 4u);
  EXPECT_TRUE(std::is_sorted(c.begin(), c.end()));
}

TEST(Enumerate, FiltersInvalidPoints) {
  CandidateSpace s = fixed_space();
  s.block_in = {16, 24};
  EXPECT_EQ(enumerate_candidates(s).size(), 1u);
}

TEST(Resources, DspIsMultiplierCount) {
  EXPECT_EQ(estimate_resources(HardwareParams{}).dsp, 256);
  HardwareParams unit = point(1, 1, 1);
  EXPECT_EQ(estimate_resources(unit).dsp, 1);
}

TEST(Resources, BramFromBufferBytes) {
  HardwareParams p;
  p.uop_buf_bytes = p.inp_buf_bytes = p.wgt_buf_bytes = p.acc_buf_bytes = 32 * 1024;
  EXPECT_EQ(estimate_resources(p).bram_kbits, 1024);
}

TEST(Resources, LutLinearInDsp) {
  ResourceModel m;
  m.lut_base = 100;
  m.lut_per_dsp = 3;
  EXPECT_EQ(estimate_resources(HardwareParams{}, m).lut, 100 + 3 * 256);
}

TEST(Feasible, DspOverCap) {
  DeviceProfile d{"small", 220, 1 << 20, 1 << 20, 1000, 0.9};
  EXPECT_FALSE(is_feasible(HardwareParams{}, d));  // 256 > 198
}

TEST(Feasible, BoundaryIsInclusive) {
  const ResourceEstimate r = estimate_resources(HardwareParams{});
  DeviceProfile d{"exact", r.dsp, r.bram_kbits, r.lut, 100, 1.0};
  EXPECT_TRUE(is_feasible(HardwareParams{}, d));
  d.dsp_total -= 1;
  EXPECT_FALSE(is_feasible(HardwareParams{}, d));
}

TEST(Feasible, FrequencyLimit) {
  DeviceProfile d{"big", 1 << 20, 1 << 20, 1 << 22, 99, 1.0};
  EXPECT_FALSE(is_feasible(HardwareParams{}, d));
  d.max_freq_mhz = 100;
  EXPECT_TRUE(is_feasible(HardwareParams{}, d));
}

TEST(Peak, Formula) {
  EXPECT_DOUBLE_EQ(peak_gops(point(2, 16, 16)), 102.4);
  EXPECT_DOUBLE_EQ(peak_gops(point(8, 8, 8)), 102.4);
  HardwareParams unit = point(1, 1, 1);
  unit.freq_mhz = 1000;
  EXPECT_DOUBLE_EQ(peak_gops(unit), 2.0);
}

TEST(Prune, EightFeasibleCandidatesKeepAll) {
  const auto all = enumerate_candidates(load("spaces/toy8.json").get<CandidateSpace>());
  const auto dev = load("devices/ultra96.json").get<DeviceProfile>();
  const auto kept = prune_candidates(all, dev, 8);
  ASSERT_EQ(kept.size(), 8u);
  for (std::size_t k = 1; k < kept.size(); ++k) EXPECT_GE(peak_gops(kept[k - 1]), peak_gops(kept[k]));
}

TEST(Prune, AllInfeasibleIsEmpty) {
  DeviceProfile tiny{"tiny", 1, 1, 1, 1, 1.0};
  EXPECT_TRUE(prune_candidates({HardwareParams{}}, tiny, 4).empty());
}

TEST(Prune, TiesPreferSmallerBram) {
  HardwareParams a, b;
  a.wgt_buf_bytes = 256 * 1024;
  b.wgt_buf_bytes = 128 * 1024;
  DeviceProfile d{"big", 1 << 20, 1 << 20, 1 << 22, 1000, 1.0};
  const auto kept = prune_candidates({a, b}, d, 2);
  ASSERT_EQ(kept.size(), 2u);
  EXPECT_EQ(kept[0], b);
}

TEST(Prune, TopK) {
  const auto all = enumerate_candidates(load("spaces/toy8.json").get<CandidateSpace>());
  DeviceProfile d{"big", 1 << 20, 1 << 20, 1 << 22, 1000, 1.0};
  EXPECT_EQ(prune_candidates(all, d, 3).size(), 3u);
}

TEST(Devices, PynqRejectsLargeIntrinsics) {
  const auto dev = load("devices/pynq-z1.json").get<DeviceProfile>();
  EXPECT_FALSE(is_feasible(point(2, 16, 16), dev));
}

}  // namespace
