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
 * \file test_cli.cc
 * \brief End-to-end runs of vtactl: exit codes, file formats and reproducibility.
 */
#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "vta/tensor.hpp"
#include "vta/tuner.hpp"

namespace {

namespace fs = std::filesystem;
using namespace vta;

std::string data(const std::string& rel) { return std::string(VTA_TEST_DATA) + "/" + rel; }

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("vtactl_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()) + "_" +
            std::to_string(::getpid()));
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  /*! \brief Runs vtactl with `args`; stdout goes to `out` (if set) and stderr to err.txt. */
  int run(const std::string& args, const std::string& out = "") const {
    const std::string cmd = std::string(VTACTL_PATH) + " " + args + " >" + (out.empty() ? "/dev/null" : path(out)) +
                            " 2>" + path("err.txt");
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  }

  std::string err() const { return slurp(path("err.txt")); }

  fs::path dir_;
};

TEST_F(Cli, Version) {
  ASSERT_EQ(run("--version", "v.txt"), 0);
  const std::string v = slurp(path("v.txt"));
  EXPECT_NE(v.find("VTAP v1"), std::string::npos);
  EXPECT_NE(v.find("VTAT v1"), std::string::npos);
}

TEST_F(Cli, UsageErrorsExitOne) {
  EXPECT_EQ(run("run"), 1);
  EXPECT_EQ(run("frobnicate"), 1);
  EXPECT_EQ(run("run --program " + path("missing.vtap")), 1);
}

TEST_F(Cli, AssembleDisassembleRoundTrip) {
  ASSERT_EQ(run("asm " + data("programs/single_mac.vtasm") + " -o " + path("a.vtap")), 0) << err();
  ASSERT_EQ(run("disasm " + path("a.vtap") + " -o " + path("a.vtasm")), 0) << err();
  ASSERT_EQ(run("asm " + path("a.vtasm") + " -o " + path("b.vtap")), 0) << err();
  const std::string a = slurp(path("a.vtap"));
  EXPECT_EQ(a.substr(0, 4), "VTAP");
  EXPECT_EQ(a, slurp(path("b.vtap")));
  ASSERT_EQ(run("disasm " + path("b.vtap"), "c.vtasm"), 0);
  EXPECT_EQ(slurp(path("c.vtasm")), slurp(path("a.vtasm")));
}

TEST_F(Cli, BadMagicExitsOne) {
  const std::string junk("XXXX\x01\x00\x00\x00\x00\x00\x00\x00", 12);
  std::ofstream(path("bad.vtap"), std::ios::binary) << junk;
  EXPECT_EQ(run("disasm " + path("bad.vtap")), 1);
  EXPECT_EQ(run("run --program " + path("bad.vtap")), 1);
  EXPECT_NE(err().find("magic"), std::string::npos) << err();
}

TEST_F(Cli, InvalidProgramExitsTwo) {
  const std::string cfg = " --config " + data("hw/single_mac.json");
  EXPECT_EQ(run("validate" + cfg + " --program " + data("programs/no_finish.vtasm")), 2);
  EXPECT_EQ(run("run" + cfg + " --program " + data("programs/no_finish.vtasm")), 2);
  EXPECT_EQ(run("validate" + cfg + " --program " + data("programs/single_mac.vtasm")), 0) << err();
}

TEST_F(Cli, DeadlockExitsThree) {
  EXPECT_EQ(run("run --config " + data("hw/single_mac.json") + " --program " + data("programs/deadlock.vtasm")), 3);
  EXPECT_NE(err().find("deadlock"), std::string::npos) << err();
}

TEST_F(Cli, RunSingleMac) {
  const std::string base = "run --config " + data("hw/single_mac.json") + " --program " +
                           data("programs/single_mac.vtasm") + " --dram-in " + data("programs/single_mac_dram.vtat");
  ASSERT_EQ(run(base + " --dram-out " + path("out.vtat") + " --trace " + path("t.jsonl"), "rep.json"), 0) << err();
  const Dram dram = tensor_to_bytes(deserialize_tensor(
      [&] {
        const std::string s = slurp(path("out.vtat"));
        return std::vector<std::uint8_t>(s.begin(), s.end());
      }()));
  ASSERT_GE(dram.size(), 3u);
  EXPECT_EQ(dram[2], 12);
  const auto rep = nlohmann::json::parse(slurp(path("rep.json")));
  EXPECT_GT(rep.at("total_cycles").get<std::int64_t>(), 0);
  EXPECT_FALSE(slurp(path("t.jsonl")).empty());

  ASSERT_EQ(run(base + " --sequential --dram-out " + path("seq.vtat")), 0) << err();
  EXPECT_EQ(slurp(path("seq.vtat")), slurp(path("out.vtat")));
}

TEST_F(Cli, ExecGraph) {
  ASSERT_EQ(run("exec-graph --graph resnet-tiny --out " + path("g.json")), 0) << err();
  const auto j = nlohmann::json::parse(slurp(path("g.json")));
  EXPECT_EQ(j.at("per_node").size(), 17u);
  ASSERT_EQ(run("exec-graph --graph " + data("graphs/resnet_tiny.json") + " --out " + path("h.json")), 0) << err();
  EXPECT_EQ(slurp(path("g.json")), slurp(path("h.json")));
  EXPECT_EQ(run("exec-graph --graph nonsense"), 1);
}

TEST_F(Cli, TuneIsDeterministic) {
  const std::string base = "tune --workload toy-conv-mix --budget 6 --seed 4";
  ASSERT_EQ(run(base + " --csv " + path("a.csv") + " --out " + path("a.json")), 0) << err();
  ASSERT_EQ(run(base + " --jobs 3 --csv " + path("b.csv") + " --out " + path("b.json")), 0) << err();
  EXPECT_EQ(slurp(path("a.csv")), slurp(path("b.csv")));
  EXPECT_EQ(slurp(path("a.json")), slurp(path("b.json")));
  EXPECT_EQ(parse_trial_csv(slurp(path("a.csv"))).size(), 18u);
  EXPECT_EQ(run("tune --workload toy-conv --seed 1 --strategy sideways"), 1);
}

TEST_F(Cli, EmptyExplorationExitsFour) {
  std::ofstream(path("tiny.json")) << R"({"name": "tiny", "dsp_total": 1, "bram_kbits_total": 1, "lut_total": 1,
                                        "max_freq_mhz": 10.0, "util_cap": 1.0})";
  EXPECT_EQ(run("explore --space " + data("spaces/toy8.json") + " --device " + path("tiny.json") +
                " --workload toy-conv --seed 1"),
            4);
}

TEST_F(Cli, ExploreAndReport) {
  const std::string base = "explore --space " + data("spaces/toy8.json") + " --device " +
                           data("devices/ultra96.json") + " --workload toy-conv --budget 3 --seed 9";
  ASSERT_EQ(run(base + " --csv " + path("a.csv") + " --out " + path("a.json")), 0) << err();
  ASSERT_EQ(run(base + " --jobs 2 --csv " + path("b.csv") + " --out " + path("b.json")), 0) << err();
  EXPECT_EQ(slurp(path("a.csv")), slurp(path("b.csv")));
  EXPECT_EQ(slurp(path("a.json")), slurp(path("b.json")));
  const auto rep = nlohmann::json::parse(slurp(path("a.json")));
  EXPECT_FALSE(rep.at("empty").get<bool>());
  EXPECT_TRUE(rep.at("winner").contains("params"));

  ASSERT_EQ(run("report --log " + path("a.csv") + " --series " + path("s.csv") + " --explore " + path("a.json") +
                " --survivors " + path("r.csv")),
            0)
      << err();
  std::istringstream series(slurp(path("s.csv")));
  std::string line;
  std::getline(series, line);
  std::string prev_key;
  std::int64_t prev = 0;
  int rows = 0;
  while (std::getline(series, line)) {
    const auto f = split_csv_line(line);
    ASSERT_EQ(f.size(), 4u);
    const std::string key = f[0] + "/" + f[1];
    const std::int64_t b = std::stoll(f[3]);
    if (key == prev_key) {
      EXPECT_LE(b, prev) << line;
    }
    prev_key = key;
    prev = b;
    ++rows;
  }
  EXPECT_GT(rows, 0);
  EXPECT_EQ(slurp(path("r.csv")).rfind("round,candidate_id,score_us,kept,measurements\n", 0), 0u);
}

}  // namespace
