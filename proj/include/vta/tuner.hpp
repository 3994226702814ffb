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
 * \file tuner.hpp
 * \brief Schedule search per operator and successive-halving hardware selection.
 */
#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <exception>
#include <limits>
#include <map>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <tuple>
#include <vector>

#include <json.hpp>

#include "common.hpp"
#include "compiler.hpp"
#include "config.hpp"
#include "runtime.hpp"
#include "sim.hpp"
#include "workloads.hpp"

namespace vta {

struct Measurement {
  Schedule sched;
  bool feasible = false;
  std::int64_t cycles = 0;
  double wallclock_ms = 0.0;  ///< modeled device time: cycles at the design clock
  std::string error;
};

/*! \brief Timing-only simulation of one schedule with a cold micro-op cache. */
inline Measurement measure(const OperatorSpec& s, const Schedule& sc, const HardwareParams& p, const TimingModel& t) {
  Measurement m;
  m.sched = sc;
  try {
    const LoweredKernel k = lower(s, sc, p);
    UopCache cache(p.uop_depth());
    const Program prog = build_command_stream(k, cache);
    SimMachine machine(p, t);
    Dram dram(static_cast<std::size_t>(k.dram_bytes), 0);
    RunOptions opt;
    opt.functional = false;
    opt.record_trace = false;
    opt.validate = false;
    const ExecReport r = machine.run(dram, prog, opt);
    m.cycles = r.total_cycles;
    m.feasible = m.cycles > 0;
    m.wallclock_ms = static_cast<double>(m.cycles) / (p.freq_mhz * 1000.0);
  } catch (const Error& e) {
    m.feasible = false;
    m.error = e.what();
  }
  return m;
}

enum class Strategy : std::uint8_t { kRandom, kAnneal };

inline Strategy parse_strategy(const std::string& s) {
  if (s == "random") return Strategy::kRandom;
  if (s == "anneal") return Strategy::kAnneal;
  throw ParseError("unknown strategy '" + s + "'");
}

inline const char* strategy_name(Strategy s) { return s == Strategy::kRandom ? "random" : "anneal"; }

struct TunerOptions {
  Strategy strategy = Strategy::kRandom;
  double anneal_t0 = 1.0;
  double anneal_decay = 0.9;
};

struct TrialRecord {
  int trial = 0;  ///< 1-based, cumulative over the operator's tuning
  Schedule sched;
  std::int64_t cycles = 0;       ///< -1 when infeasible
  std::int64_t best_cycles = 0;  ///< best so far including this trial
  double wallclock_ms = 0.0;
};

/*!
 * \brief Resumable search state for one operator on one design point.
 *
 * Random search walks a seeded permutation of the legal schedules and
 * samples with replacement once it is exhausted. Annealing starts from a
 * random schedule and moves one knob one step along its value list.
 */
class TunerState {
 public:
  TunerState(OperatorSpec spec, HardwareParams p, std::uint64_t seed, TunerOptions opt = {})
      : spec_(std::move(spec)), p_(p), opt_(opt), rng_(seed), temperature_(opt.anneal_t0) {
    legal_ = legal_schedules(spec_, p_);
    for (std::size_t k = 0; k < legal_.size(); ++k) index_[legal_[k]] = k;
    order_.resize(legal_.size());
    for (std::size_t k = 0; k < order_.size(); ++k) order_[k] = k;
    rng_.shuffle(order_);
    knobs_ = knob_values(spec_, p_);
  }

  const OperatorSpec& spec() const { return spec_; }
  const HardwareParams& params() const { return p_; }
  const std::vector<Schedule>& legal() const { return legal_; }
  bool tunable() const { return !legal_.empty(); }
  int trials() const { return static_cast<int>(log_.size()); }
  const std::vector<TrialRecord>& log() const { return log_; }
  std::optional<Schedule> best() const { return best_; }
  std::int64_t best_cycles() const { return best_cycles_; }
  bool has_best() const { return best_.has_value(); }

  /*! \brief Runs `n` more trials. Throws ScheduleError if nothing is legal. */
  void step(const TimingModel& t, int n) {
    if (legal_.empty()) throw ScheduleError("operator '" + spec_.name + "' has no legal schedule; it runs on the host");
    for (int k = 0; k < n; ++k) {
      const std::size_t pick = opt_.strategy == Strategy::kRandom ? next_random() : next_anneal();
      const Measurement m = measure_cached(pick, t);
      TrialRecord r;
      r.trial = trials() + 1;
      r.sched = legal_[pick];
      r.cycles = m.feasible ? m.cycles : -1;
      r.wallclock_ms = m.wallclock_ms;
      if (m.feasible && m.cycles < best_cycles_) {
        best_cycles_ = m.cycles;
        best_ = legal_[pick];
      }
      r.best_cycles = best_ ? best_cycles_ : -1;
      if (opt_.strategy == Strategy::kAnneal) accept(pick, m);
      log_.push_back(r);
    }
  }

 private:
  std::size_t next_random() {
    if (cursor_ < order_.size()) return order_[cursor_++];
    return static_cast<std::size_t>(rng_.below(legal_.size()));
  }

  /*! \brief Index of a legal neighbor of the current schedule, or a random restart. */
  std::size_t next_anneal() {
    if (!current_) return static_cast<std::size_t>(rng_.below(legal_.size()));
    const Schedule cur = legal_[*current_];
    for (int attempt = 0; attempt < 16; ++attempt) {
      Schedule s = cur;
      const int knob = static_cast<int>(rng_.below(6));
      const int dir = rng_.below(2) ? 1 : -1;
      auto shift = [&](std::int64_t& v, const std::vector<std::int64_t>& vals) {
        auto it = std::find(vals.begin(), vals.end(), v);
        if (it == vals.end()) return false;
        const auto pos = static_cast<std::int64_t>(it - vals.begin()) + dir;
        if (pos < 0 || pos >= static_cast<std::int64_t>(vals.size())) return false;
        v = vals[static_cast<std::size_t>(pos)];
        return true;
      };
      bool moved = false;
      switch (knob) {
        case 0: moved = shift(s.tile_oc, knobs_.oc); break;
        case 1: moved = shift(s.tile_ic, knobs_.ic); break;
        case 2: moved = shift(s.tile_h, knobs_.h); break;
        case 3: moved = shift(s.tile_w, knobs_.w); break;
        case 4: s.vthreads = 3 - s.vthreads; moved = true; break;
        case 5: moved = knobs_.oc_unroll.size() > 1; s.oc_unroll = !s.oc_unroll; break;
      }
      if (!moved) continue;
      auto it = index_.find(s);
      if (it != index_.end()) return it->second;
    }
    return static_cast<std::size_t>(rng_.below(legal_.size()));
  }

  void accept(std::size_t pick, const Measurement& m) {
    if (!m.feasible) return;
    bool take = !current_;
    if (!take) {
      const double delta = static_cast<double>(m.cycles - current_cycles_) / static_cast<double>(current_cycles_);
      take = delta <= 0 || rng_.uniform() < std::exp(-delta / std::max(temperature_, 1e-12));
    }
    if (take) {
      current_ = pick;
      current_cycles_ = m.cycles;
    }
    temperature_ *= opt_.anneal_decay;
  }

  Measurement measure_cached(std::size_t pick, const TimingModel& t) {
    auto it = measured_.find(pick);
    if (it != measured_.end()) return it->second;
    Measurement m = measure(spec_, legal_[pick], p_, t);
    measured_.emplace(pick, m);
    return m;
  }

  OperatorSpec spec_;
  HardwareParams p_;
  TunerOptions opt_;
  Rng rng_;
  std::vector<Schedule> legal_;
  std::map<Schedule, std::size_t> index_;
  KnobValues knobs_;
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
  std::map<std::size_t, Measurement> measured_;
  std::optional<std::size_t> current_;
  std::int64_t current_cycles_ = 0;
  double temperature_;
  std::optional<Schedule> best_;
  std::int64_t best_cycles_ = std::numeric_limits<std::int64_t>::max();
  std::vector<TrialRecord> log_;
};

/*! \brief Convenience: tune one operator for `budget` trials from a fresh state. */
inline TunerState tune_operator(const OperatorSpec& s, const HardwareParams& p, const TimingModel& t, int budget,
                                std::uint64_t seed, TunerOptions opt = {}) {
  if (budget < 1) throw Error("tuning budget must be at least 1");
  TunerState st(s, p, seed, opt);
  st.step(t, budget);
  return st;
}

// ---------------------------------------------------------------------------
// Successive halving

/*! \brief One row of the tuning log. */
struct TrialLog {
  int round = 0;
  int candidate_id = 0;
  int operator_id = 0;
  int trial = 0;
  Schedule sched;
  std::int64_t cycles = 0;
  std::int64_t best_cycles = 0;
  double wallclock_ms = 0.0;

  auto key() const { return std::make_tuple(round, candidate_id, operator_id, trial); }
};

struct ShaOptions {
  int budget_per_round = 16;
  std::uint64_t seed = 0;
  int jobs = 1;
  double pessimism = 3.0;  ///< un-tuned operators score lower bound x pessimism
  TunerOptions tuner{};
};

struct ShaRound {
  int round = 0;
  std::vector<int> survivors;       ///< candidate ids tuned this round
  std::map<int, double> scores;     ///< candidate id -> score after the round
  std::vector<int> kept;            ///< candidates advancing
  std::int64_t measurements = 0;    ///< cumulative
};

struct ShaResult {
  std::vector<int> ranking;  ///< winner first
  std::vector<ShaRound> rounds;
  std::vector<TrialLog> log;  ///< sorted by (round, candidate, operator, trial)
  std::int64_t measurements = 0;
  std::map<int, std::vector<std::optional<Schedule>>> best_schedules;  ///< per candidate, per operator
  std::map<int, std::vector<std::int64_t>> best_cycles;               ///< -1 when untuned
  int winner() const { return ranking.empty() ? -1 : ranking.front(); }
};

/*!
 * \brief Weighted latency estimate of a workload on a design point, in
 *        microseconds so candidates at different clocks compare fairly.
 */
inline double workload_score(const std::vector<TunerState>& states, const HardwareParams& p, const TimingModel& t,
                             double pessimism) {
  double cycles = 0.0;
  bool any = false;
  for (const auto& st : states) {
    const OperatorSpec& s = st.spec();
    if (st.tunable()) any = true;
    const double c = st.has_best() ? static_cast<double>(st.best_cycles())
                                   : pessimism * static_cast<double>(lower_bound_cycles(s, p, t));
    cycles += static_cast<double>(s.occurrence) * c;
  }
  if (!any) return std::numeric_limits<double>::infinity();
  return cycles / p.freq_mhz;
}

namespace detail {

/*! \brief Runs fn(i) for i in [0, n) on up to `jobs` threads. */
template <typename F>
void parallel_for(std::size_t n, int jobs, F&& fn) {
  if (jobs <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  std::exception_ptr err;
  std::mutex err_mu;
  const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(jobs), n);
  for (std::size_t w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(err_mu);
          if (!err) err = std::current_exception();
        }
      }
    });
  for (auto& th : pool) th.join();
  if (err) std::rethrow_exception(err);
}

}  // namespace detail

/*!
 * \brief Successive halving over hardware candidates.
 *
 * Each round grants every surviving candidate budget_per_round more trials
 * on every tunable operator, rescores, and keeps the best ceil(n/2); ties
 * go to the lower candidate index. A single candidate gets one round.
 */
inline ShaResult successive_halving(const std::vector<HardwareParams>& cands, const WorkloadDef& w,
                                    const TimingModel& t, const ShaOptions& opt) {
  if (cands.empty()) throw Error("successive halving needs at least one candidate");
  if (w.ops.empty()) throw Error("workload is empty");
  if (opt.budget_per_round < 1) throw Error("budget_per_round must be at least 1");

  const int n_ops = static_cast<int>(w.ops.size());
  std::vector<std::vector<TunerState>> states(cands.size());
  for (std::size_t c = 0; c < cands.size(); ++c)
    for (int o = 0; o < n_ops; ++o)
      states[c].emplace_back(w.ops[static_cast<std::size_t>(o)], cands[c],
                             mix_seed(opt.seed, c * 1000003u + static_cast<std::uint64_t>(o)), opt.tuner);

  ShaResult res;
  std::vector<int> survivors(cands.size());
  for (std::size_t c = 0; c < cands.size(); ++c) survivors[c] = static_cast<int>(c);
  std::vector<std::vector<int>> eliminated;  // per round, in score order

  for (int round = 1;; ++round) {
    ShaRound r;
    r.round = round;
    r.survivors = survivors;
    struct Task {
      int cand, op;
    };
    std::vector<Task> tasks;
    for (int c : survivors)
      for (int o = 0; o < n_ops; ++o)
        if (states[static_cast<std::size_t>(c)][static_cast<std::size_t>(o)].tunable()) tasks.push_back({c, o});
    detail::parallel_for(tasks.size(), opt.jobs, [&](std::size_t i) {
      states[static_cast<std::size_t>(tasks[i].cand)][static_cast<std::size_t>(tasks[i].op)].step(t,
                                                                                                 opt.budget_per_round);
    });
    for (const auto& task : tasks) {
      const TunerState& st = states[static_cast<std::size_t>(task.cand)][static_cast<std::size_t>(task.op)];
      const auto& lg = st.log();
      for (std::size_t k = lg.size() - static_cast<std::size_t>(opt.budget_per_round); k < lg.size(); ++k)
        res.log.push_back({round, task.cand, task.op, lg[k].trial, lg[k].sched, lg[k].cycles, lg[k].best_cycles,
                           lg[k].wallclock_ms});
    }
    res.measurements += static_cast<std::int64_t>(tasks.size()) * opt.budget_per_round;
    r.measurements = res.measurements;

    for (int c : survivors)
      r.scores[c] = workload_score(states[static_cast<std::size_t>(c)], cands[static_cast<std::size_t>(c)], t,
                                   opt.pessimism);
    std::vector<int> ranked = survivors;
    std::stable_sort(ranked.begin(), ranked.end(), [&](int a, int b) {
      if (r.scores[a] != r.scores[b]) return r.scores[a] < r.scores[b];
      return a < b;
    });
    if (survivors.size() <= 1) {
      r.kept = ranked;
      res.rounds.push_back(r);
      break;
    }
    std::size_t keep = (ranked.size() + 1) / 2;
    // Candidates that map nothing never advance while any candidate maps something.
    const auto finite = static_cast<std::size_t>(
        std::count_if(ranked.begin(), ranked.end(), [&](int c) { return std::isfinite(r.scores[c]); }));
    if (finite > 0) keep = std::min(keep, finite);
    r.kept.assign(ranked.begin(), ranked.begin() + static_cast<std::ptrdiff_t>(keep));
    eliminated.emplace_back(ranked.begin() + static_cast<std::ptrdiff_t>(keep), ranked.end());
    survivors = r.kept;
    res.rounds.push_back(r);
    if (survivors.size() == 1) {
      // The winner is decided; record the final (degenerate) round without more trials.
      ShaRound last;
      last.round = round + 1;
      last.survivors = survivors;
      last.kept = survivors;
      last.scores[survivors[0]] = r.scores[survivors[0]];
      last.measurements = res.measurements;
      res.rounds.push_back(last);
      break;
    }
  }
  res.ranking = res.rounds.back().kept;
  for (auto it = eliminated.rbegin(); it != eliminated.rend(); ++it)
    res.ranking.insert(res.ranking.end(), it->begin(), it->end());

  std::sort(res.log.begin(), res.log.end(), [](const TrialLog& a, const TrialLog& b) { return a.key() < b.key(); });
  for (std::size_t c = 0; c < cands.size(); ++c)
    for (const auto& st : states[c]) {
      res.best_schedules[static_cast<int>(c)].push_back(st.best());
      res.best_cycles[static_cast<int>(c)].push_back(st.has_best() ? st.best_cycles() : -1);
    }
  return res;
}

/*! \brief Fixed-format decimal for logs, so output bytes do not depend on locale or platform. */
inline std::string format_ms(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

inline std::string csv_quote(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

inline std::string trial_csv(const std::vector<TrialLog>& log) {
  std::ostringstream os;
  os << "round,candidate_id,operator_id,trial,knobs_json,cycles,best_cycles,wallclock_ms\n";
  for (const auto& r : log)
    os << r.round << ',' << r.candidate_id << ',' << r.operator_id << ',' << r.trial << ','
       << csv_quote(nlohmann::json(r.sched).dump()) << ',' << r.cycles << ',' << r.best_cycles << ','
       << format_ms(r.wallclock_ms) << '\n';
  return os.str();
}

/*! \brief Splits one CSV record, honoring double-quoted fields. */
inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

inline std::vector<TrialLog> parse_trial_csv(const std::string& text) {
  std::vector<TrialLog> out;
  std::istringstream is(text);
  std::string line;
  if (!std::getline(is, line) || line.rfind("round,candidate_id", 0) != 0) throw ParseError("not a tuning log");
  int lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto f = split_csv_line(line);
    if (f.size() != 8) throw ParseError("tuning log line " + std::to_string(lineno) + ": expected 8 fields");
    try {
      TrialLog r;
      r.round = std::stoi(f[0]);
      r.candidate_id = std::stoi(f[1]);
      r.operator_id = std::stoi(f[2]);
      r.trial = std::stoi(f[3]);
      r.sched = nlohmann::json::parse(f[4]).get<Schedule>();
      r.cycles = std::stoll(f[5]);
      r.best_cycles = std::stoll(f[6]);
      r.wallclock_ms = std::stod(f[7]);
      out.push_back(r);
    } catch (const std::exception& e) {
      throw ParseError("tuning log line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Exploration

struct ExploreOptions {
  std::size_t top_k = 8;
  ShaOptions sha{};
  ResourceModel resources{};
};

struct ExploreResult {
  std::size_t enumerated = 0;
  std::vector<HardwareParams> candidates;  ///< after pruning, candidate id = index
  std::optional<ShaResult> sha;
  std::optional<HardwareParams> winner() const {
    if (!sha || sha->winner() < 0) return std::nullopt;
    return candidates[static_cast<std::size_t>(sha->winner())];
  }
};

/*!
 * \brief Candidate list from a space file: either per-knob value lists
 *        (cartesian product) or an explicit "candidates" array.
 */
inline std::vector<HardwareParams> parse_space(const nlohmann::json& j) {
  try {
    if (j.contains("candidates")) {
      std::vector<HardwareParams> out;
      for (const auto& c : j.at("candidates")) {
        HardwareParams p = c.get<HardwareParams>();
        validate_params(p);
        out.push_back(p);
      }
      return out;
    }
    return enumerate_candidates(j.get<CandidateSpace>());
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("space: ") + e.what());
  }
}

/*! \brief Prune enumerated candidates against the device, then successive halving. */
inline ExploreResult explore(const std::vector<HardwareParams>& all, const DeviceProfile& device,
                             const WorkloadDef& w, const TimingModel& t, const ExploreOptions& opt) {
  ExploreResult r;
  r.enumerated = all.size();
  r.candidates = prune_candidates(all, device, opt.top_k, opt.resources);
  if (r.candidates.empty()) return r;
  r.sha = successive_halving(r.candidates, w, t, opt.sha);
  return r;
}

inline ExploreResult explore(const CandidateSpace& space, const DeviceProfile& device, const WorkloadDef& w,
                             const TimingModel& t, const ExploreOptions& opt) {
  return explore(enumerate_candidates(space), device, w, t, opt);
}

inline nlohmann::json explore_report_json(const ExploreResult& r, const WorkloadDef& w, const ExploreOptions& opt) {
  nlohmann::json j;
  j["workload"] = w.name;
  j["enumerated"] = r.enumerated;
  j["budget_per_round"] = opt.sha.budget_per_round;
  j["seed"] = opt.sha.seed;
  j["candidates"] = nlohmann::json::array();
  for (std::size_t c = 0; c < r.candidates.size(); ++c)
    j["candidates"].push_back({{"id", c},
                               {"params", r.candidates[c]},
                               {"peak_gops", peak_gops(r.candidates[c])},
                               {"resources", estimate_resources(r.candidates[c], opt.resources)}});
  if (!r.sha) {
    j["winner"] = nullptr;
    j["empty"] = true;
    return j;
  }
  const ShaResult& s = *r.sha;
  j["empty"] = false;
  j["winner"] = {{"id", s.winner()}, {"params", r.candidates[static_cast<std::size_t>(s.winner())]}};
  j["ranking"] = s.ranking;
  j["measurements"] = s.measurements;
  j["rounds"] = nlohmann::json::array();
  for (const auto& rd : s.rounds) {
    nlohmann::json scores = nlohmann::json::array();
    for (const auto& [c, v] : rd.scores)
      scores.push_back({{"candidate_id", c}, {"score_us", std::isfinite(v) ? nlohmann::json(v) : nlohmann::json()}});
    j["rounds"].push_back({{"round", rd.round},
                           {"survivors", rd.survivors},
                           {"kept", rd.kept},
                           {"scores", scores},
                           {"measurements", rd.measurements}});
  }
  nlohmann::json best = nlohmann::json::array();
  const int win = s.winner();
  for (std::size_t o = 0; o < w.ops.size(); ++o) {
    const auto& sched = s.best_schedules.at(win)[o];
    best.push_back({{"operator_id", o},
                    {"name", w.ops[o].name},
                    {"schedule", sched ? nlohmann::json(*sched) : nlohmann::json()},
                    {"cycles", s.best_cycles.at(win)[o]}});
  }
  j["winner_schedules"] = best;
  return j;
}

// ---------------------------------------------------------------------------
// Plot series

/*! \brief Best-so-far cycles against trial count, one series per (candidate, operator). */
inline std::string best_cycles_series_csv(std::vector<TrialLog> log) {
  std::stable_sort(log.begin(), log.end(), [](const TrialLog& a, const TrialLog& b) {
    return std::make_tuple(a.candidate_id, a.operator_id, a.trial) <
           std::make_tuple(b.candidate_id, b.operator_id, b.trial);
  });
  std::ostringstream os;
  os << "candidate_id,operator_id,trial,best_cycles\n";
  for (const auto& r : log)
    os << r.candidate_id << ',' << r.operator_id << ',' << r.trial << ',' << r.best_cycles << '\n';
  return os.str();
}

/*! \brief Per-round score table from an exploration report. */
inline std::string survivor_table_csv(const nlohmann::json& report) {
  std::ostringstream os;
  os << "round,candidate_id,score_us,kept,measurements\n";
  try {
    for (const auto& rd : report.at("rounds")) {
      const auto kept = rd.at("kept").get<std::vector<int>>();
      for (const auto& sc : rd.at("scores")) {
        const int c = sc.at("candidate_id").get<int>();
        const auto& v = sc.at("score_us");
        os << rd.at("round").get<int>() << ',' << c << ',' << (v.is_null() ? std::string("inf") : format_ms(v.get<double>()))
           << ',' << (std::find(kept.begin(), kept.end(), c) != kept.end() ? 1 : 0) << ','
           << rd.at("measurements").get<std::int64_t>() << '\n';
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("exploration report: ") + e.what());
  }
  return os.str();
}

}  // namespace vta
