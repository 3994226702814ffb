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
 * \file vtactl.cc
 * \brief Command-line driver: assembler, simulator, graph runner and tuner.
 *
 * Machine-readable results go to stdout or to the named output files; all
 * diagnostics go to stderr.
 */
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "vta/vta.hpp"

namespace {

using namespace vta;

enum ExitCode { kOk = 0, kIoOrParse = 1, kInvalid = 2, kExecution = 3, kEmpty = 4 };

std::string read_text(const std::string& path) {
  const auto bytes = read_file(path);
  return {bytes.begin(), bytes.end()};
}

void write_text(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    std::cout.flush();
    return;
  }
  write_file(path, std::vector<std::uint8_t>(text.begin(), text.end()));
}

nlohmann::json read_json(const std::string& path) {
  try {
    return nlohmann::json::parse(read_text(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(path + ": " + e.what());
  }
}

template <typename T>
T read_object(const std::string& path) {
  try {
    return read_json(path).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path + ": " + e.what());
  }
}

HardwareParams load_params(const std::string& path) {
  HardwareParams p = path.empty() ? HardwareParams{} : read_object<HardwareParams>(path);
  validate_params(p);
  return p;
}

TimingModel load_timing(const std::string& path) {
  TimingModel t = path.empty() ? TimingModel{} : read_object<TimingModel>(path);
  validate_timing(t);
  return t;
}

/*! \brief Accepts either a VTAP container or assembly text. */
Program load_program(const std::string& path) {
  const auto bytes = read_file(path);
  if (bytes.size() >= 4 && std::string(bytes.begin(), bytes.begin() + 4) == "VTAP") return deserialize_program(bytes);
  const std::string text(bytes.begin(), bytes.end());
  const bool binary = std::any_of(text.begin(), text.end(), [](char c) {
    return c != '\n' && c != '\r' && c != '\t' && (static_cast<unsigned char>(c) < 0x20 || c == 0x7f);
  });
  if (binary) throw ParseError(path + ": bad magic");
  return assemble(text);
}

WorkloadDef load_workload(const std::string& name) {
  if (std::filesystem::exists(name)) return parse_workload(read_json(name));
  return builtin_workload(name);
}

Graph load_graph(const std::string& name) {
  if (std::filesystem::exists(name)) return parse_graph(read_json(name));
  auto all = builtin_graphs();
  auto it = all.find(name);
  if (it == all.end()) throw ParseError("unknown graph '" + name + "'");
  return it->second;
}

int cmd_asm(const std::string& in, const std::string& out) {
  const Program prog = assemble(read_text(in));
  write_file(out, serialize_program(prog));
  std::cerr << "assembled " << prog.insns.size() << " instructions, " << prog.uops.size() << " micro-ops\n";
  return kOk;
}

int cmd_disasm(const std::string& in, const std::string& out) {
  const Program prog = deserialize_program(read_file(in));
  write_text(out, disassemble(prog));
  return kOk;
}

int cmd_validate(const std::string& config, const std::string& program) {
  const HardwareParams p = load_params(config);
  const Program prog = load_program(program);
  const auto violations = validate_program(prog, p);
  for (const auto& v : violations) std::cout << v.to_string() << "\n";
  if (!violations.empty()) {
    std::cerr << violations.size() << " violation(s)\n";
    return kInvalid;
  }
  std::cerr << "ok\n";
  return kOk;
}

struct RunArgs {
  std::string config, timing, program, dram_in, dram_out, trace, out;
  bool sequential = false;
  bool hazards = false;
};

int cmd_run(const RunArgs& a) {
  const HardwareParams p = load_params(a.config);
  const TimingModel t = load_timing(a.timing);
  const Program prog = load_program(a.program);
  Dram dram;
  if (!a.dram_in.empty()) dram = tensor_to_bytes(deserialize_tensor(read_file(a.dram_in)));
  const auto violations = validate_program(prog, p);
  if (!violations.empty()) {
    for (const auto& v : violations) std::cerr << v.to_string() << "\n";
    return kInvalid;
  }
  SimMachine machine(p, t);
  RunOptions opt;
  opt.check_hazards = a.hazards;
  opt.record_trace = !a.trace.empty();
  ExecReport rep;
  try {
    rep = a.sequential ? machine.run_sequential(dram, prog, opt) : machine.run(dram, prog, opt);
  } catch (const SimError& e) {
    std::cerr << "execution failed: " << e.what() << "\n";
    return kExecution;
  }
  for (const auto& w : rep.warnings) std::cerr << "warning: " << w << "\n";
  if (!a.dram_out.empty()) write_file(a.dram_out, serialize_tensor(bytes_to_tensor(dram)));
  if (!a.trace.empty()) write_text(a.trace, trace_jsonl(rep));
  write_text(a.out, report_json(rep).dump(2) + "\n");
  return kOk;
}

struct GraphArgs {
  std::string config, timing, graph, out, outputs_dir;
  std::optional<std::uint64_t> seed;
  bool no_channel_pad = false;
};

int cmd_exec_graph(const GraphArgs& a) {
  const HardwareParams p = load_params(a.config);
  const TimingModel t = load_timing(a.timing);
  Graph g = load_graph(a.graph);
  if (a.seed) g.seed = *a.seed;
  GraphOptions opt;
  opt.allow_channel_pad = !a.no_channel_pad;
  opt.run.record_trace = false;
  GraphReport rep;
  try {
    rep = execute_graph(g, p, t, random_graph_inputs(g), opt);
  } catch (const SimError& e) {
    std::cerr << "execution failed: " << e.what() << "\n";
    return kExecution;
  } catch (const ScheduleError& e) {
    std::cerr << "execution failed: " << e.what() << "\n";
    return kExecution;
  }
  if (!a.outputs_dir.empty()) {
    std::filesystem::create_directories(a.outputs_dir);
    for (const auto& [name, tensor] : rep.outputs)
      write_file((std::filesystem::path(a.outputs_dir) / (name + ".vtat")).string(), serialize_tensor(tensor));
  }
  std::cerr << "graph " << a.graph << ": " << rep.total_cycles << " device cycles, " << rep.host_macs
            << " host MACs\n";
  write_text(a.out, graph_report_json(rep).dump(2) + "\n");
  return kOk;
}

struct TuneArgs {
  std::string config, timing, workload, op, strategy = "random", csv, out;
  std::uint64_t seed = 0;
  int budget = 32;
  int jobs = 1;
};

int cmd_tune(const TuneArgs& a) {
  const HardwareParams p = load_params(a.config);
  const TimingModel t = load_timing(a.timing);
  const WorkloadDef w = load_workload(a.workload);
  if (a.budget < 1) throw ValidationError("--budget must be at least 1");
  TunerOptions topt;
  topt.strategy = parse_strategy(a.strategy);

  std::vector<std::size_t> ops;
  for (std::size_t o = 0; o < w.ops.size(); ++o)
    if (a.op.empty() || w.ops[o].name == a.op) ops.push_back(o);
  if (ops.empty()) throw ValidationError("workload '" + w.name + "' has no operator '" + a.op + "'");

  std::vector<std::optional<TunerState>> states(ops.size());
  detail::parallel_for(ops.size(), a.jobs, [&](std::size_t i) {
    TunerState st(w.ops[ops[i]], p, mix_seed(a.seed, ops[i]), topt);
    if (st.tunable()) st.step(t, a.budget);
    states[i] = std::move(st);
  });

  std::vector<TrialLog> log;
  nlohmann::json result{{"workload", w.name}, {"strategy", a.strategy}, {"budget", a.budget}, {"seed", a.seed}};
  result["operators"] = nlohmann::json::array();
  for (std::size_t i = 0; i < ops.size(); ++i) {
    const TunerState& st = *states[i];
    const int o = static_cast<int>(ops[i]);
    for (const auto& r : st.log())
      log.push_back({0, 0, o, r.trial, r.sched, r.cycles, r.best_cycles, r.wallclock_ms});
    nlohmann::json entry{{"operator_id", o},
                         {"name", st.spec().name},
                         {"legal_schedules", st.legal().size()},
                         {"trials", st.trials()}};
    if (st.has_best()) {
      entry["schedule"] = *st.best();
      entry["cycles"] = st.best_cycles();
    } else {
      entry["schedule"] = nullptr;
      entry["cycles"] = nullptr;
      std::cerr << "operator '" << st.spec().name << "' has no legal schedule; it runs on the host\n";
    }
    result["operators"].push_back(entry);
  }
  if (!a.csv.empty()) write_text(a.csv, trial_csv(log));
  write_text(a.out, result.dump(2) + "\n");
  return kOk;
}

struct ExploreArgs {
  std::string space, device, workload, timing, csv, out;
  std::uint64_t seed = 0;
  int budget = 16;
  int jobs = 1;
  std::size_t top_k = 8;
  std::string strategy = "random";
};

int cmd_explore(const ExploreArgs& a) {
  const auto cands = parse_space(read_json(a.space));
  const DeviceProfile device = read_object<DeviceProfile>(a.device);
  const WorkloadDef w = load_workload(a.workload);
  const TimingModel t = load_timing(a.timing);
  if (a.budget < 1) throw ValidationError("--budget must be at least 1");
  ExploreOptions opt;
  opt.top_k = a.top_k;
  opt.sha.budget_per_round = a.budget;
  opt.sha.seed = a.seed;
  opt.sha.jobs = a.jobs;
  opt.sha.tuner.strategy = parse_strategy(a.strategy);
  const ExploreResult r = explore(cands, device, w, t, opt);
  const nlohmann::json report = explore_report_json(r, w, opt);
  if (!a.csv.empty()) write_text(a.csv, trial_csv(r.sha ? r.sha->log : std::vector<TrialLog>{}));
  write_text(a.out, report.dump(2) + "\n");
  std::cerr << "enumerated " << r.enumerated << ", kept " << r.candidates.size() << " after pruning\n";
  if (!r.sha) {
    std::cerr << "no feasible candidate\n";
    return kEmpty;
  }
  std::cerr << "winner: candidate " << r.sha->winner() << " after " << r.sha->measurements << " measurements\n";
  return kOk;
}

int cmd_report(const std::string& log, const std::string& exploration, const std::string& series,
               const std::string& survivors) {
  if (log.empty() && exploration.empty()) throw ValidationError("report needs --log and/or --explore");
  if (!log.empty()) write_text(series, best_cycles_series_csv(parse_trial_csv(read_text(log))));
  if (!exploration.empty()) write_text(survivors, survivor_table_csv(read_json(exploration)));
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Tensor accelerator simulator, compiler and design-space tuner"};
  app.require_subcommand(0, 1);
  bool version = false;
  app.add_flag("--version", version, "Print tool and file format versions");

  std::string in_path, out_path, config, program;

  auto* asm_cmd = app.add_subcommand("asm", "Assemble text into a program container");
  asm_cmd->add_option("input", in_path, "Assembly text")->required();
  asm_cmd->add_option("-o,--out", out_path, "Output container")->required();

  auto* disasm_cmd = app.add_subcommand("disasm", "Print a program container as assembly");
  disasm_cmd->add_option("input", in_path, "Program container")->required();
  disasm_cmd->add_option("-o,--out", out_path, "Output text (default stdout)");

  auto* validate_cmd = app.add_subcommand("validate", "Check a program against a design point");
  validate_cmd->add_option("--config", config, "Hardware parameters JSON (default design if omitted)");
  validate_cmd->add_option("--program", program, "Program container or assembly")->required();

  RunArgs run;
  auto* run_cmd = app.add_subcommand("run", "Simulate a program");
  run_cmd->add_option("--config", run.config, "Hardware parameters JSON");
  run_cmd->add_option("--timing", run.timing, "Timing model JSON");
  run_cmd->add_option("--program", run.program, "Program container or assembly")->required();
  run_cmd->add_option("--dram-in", run.dram_in, "Initial DRAM tensor container");
  run_cmd->add_option("--dram-out", run.dram_out, "Final DRAM tensor container");
  run_cmd->add_option("--trace", run.trace, "Per-instruction trace (JSONL)");
  run_cmd->add_option("--out", run.out, "Report JSON (default stdout)");
  run_cmd->add_flag("--sequential", run.sequential, "Run instructions one at a time in program order");
  run_cmd->add_flag("--check-hazards", run.hazards, "Report SRAM hazards between modules");

  GraphArgs graph;
  std::uint64_t graph_seed = 0;
  auto* graph_cmd = app.add_subcommand("exec-graph", "Compile and run a workload graph");
  graph_cmd->add_option("--config", graph.config, "Hardware parameters JSON");
  graph_cmd->add_option("--timing", graph.timing, "Timing model JSON");
  graph_cmd->add_option("--graph", graph.graph, "Graph JSON or builtin graph name")->required();
  auto* graph_seed_opt = graph_cmd->add_option("--seed", graph_seed, "Seed for inputs and parameters");
  graph_cmd->add_option("--out", graph.out, "Report JSON (default stdout)");
  graph_cmd->add_option("--outputs", graph.outputs_dir, "Directory for output tensor containers");
  graph_cmd->add_flag("--no-channel-pad", graph.no_channel_pad, "Run non block-aligned layers on the host");

  TuneArgs tune;
  auto* tune_cmd = app.add_subcommand("tune", "Tune the operators of a workload on one design point");
  tune_cmd->add_option("--config", tune.config, "Hardware parameters JSON");
  tune_cmd->add_option("--timing", tune.timing, "Timing model JSON");
  tune_cmd->add_option("--workload", tune.workload, "Workload JSON or builtin name")->required();
  tune_cmd->add_option("--op", tune.op, "Tune only this operator");
  tune_cmd->add_option("--budget", tune.budget, "Trials per operator");
  tune_cmd->add_option("--strategy", tune.strategy, "random or anneal");
  tune_cmd->add_option("--seed", tune.seed, "Search seed")->required();
  tune_cmd->add_option("--jobs", tune.jobs, "Parallel workers")->check(CLI::PositiveNumber);
  tune_cmd->add_option("--csv", tune.csv, "Tuning log CSV");
  tune_cmd->add_option("--out", tune.out, "Result JSON (default stdout)");

  ExploreArgs ex;
  auto* explore_cmd = app.add_subcommand("explore", "Prune a design space and run successive halving");
  explore_cmd->add_option("--space", ex.space, "Candidate space JSON")->required();
  explore_cmd->add_option("--device", ex.device, "Device profile JSON")->required();
  explore_cmd->add_option("--workload", ex.workload, "Workload JSON or builtin name")->required();
  explore_cmd->add_option("--timing", ex.timing, "Timing model JSON");
  explore_cmd->add_option("--seed", ex.seed, "Search seed")->required();
  explore_cmd->add_option("--jobs", ex.jobs, "Parallel workers")->check(CLI::PositiveNumber);
  explore_cmd->add_option("--budget", ex.budget, "Trials per operator per round");
  explore_cmd->add_option("--top-k", ex.top_k, "Candidates kept after pruning");
  explore_cmd->add_option("--strategy", ex.strategy, "random or anneal");
  explore_cmd->add_option("--csv", ex.csv, "Tuning log CSV");
  explore_cmd->add_option("--out", ex.out, "Report JSON (default stdout)");

  std::string log, exploration, series, survivors;
  auto* report_cmd = app.add_subcommand("report", "Turn tuning logs into plot series");
  report_cmd->add_option("--log", log, "Tuning log CSV");
  report_cmd->add_option("--explore", exploration, "Exploration report JSON");
  report_cmd->add_option("--series", series, "Best-cycles series CSV (default stdout)");
  report_cmd->add_option("--survivors", survivors, "Round score table CSV (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kIoOrParse;
  }

  try {
    if (version) {
      std::cout << "vtactl " << kVersion << "\n"
                << "program container VTAP v" << kProgramVersion << "\n"
                << "tensor container VTAT v" << kTensorVersion << "\n";
      return kOk;
    }
    if (asm_cmd->parsed()) return cmd_asm(in_path, out_path);
    if (disasm_cmd->parsed()) return cmd_disasm(in_path, out_path);
    if (validate_cmd->parsed()) return cmd_validate(config, program);
    if (run_cmd->parsed()) return cmd_run(run);
    if (graph_cmd->parsed()) {
      if (graph_seed_opt->count() > 0) graph.seed = graph_seed;
      return cmd_exec_graph(graph);
    }
    if (tune_cmd->parsed()) return cmd_tune(tune);
    if (explore_cmd->parsed()) return cmd_explore(ex);
    if (report_cmd->parsed()) return cmd_report(log, exploration, series, survivors);
    std::cerr << app.help();
    return kIoOrParse;
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kIoOrParse;
  } catch (const ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kIoOrParse;
  } catch (const DecodeError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kIoOrParse;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kIoOrParse;
  } catch (const ValidationError& e) {
    std::cerr << "invalid: " << e.what() << "\n";
    return kInvalid;
  } catch (const EncodeError& e) {
    std::cerr << "invalid: " << e.what() << "\n";
    return kInvalid;
  } catch (const ShapeError& e) {
    std::cerr << "invalid: " << e.what() << "\n";
    return kInvalid;
  } catch (const std::exception& e) {
    std::cerr << "execution failed: " << e.what() << "\n";
    return kExecution;
  }
}
