/* Copyright 2026 The InferSim Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <numeric>
#include <queue>
#include <set>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "infersim/errors.hpp"
#include "infersim/hardware.hpp"
#include "infersim/model.hpp"

namespace infersim {

struct PipelineConfig {
  int stages = 1;        // P
  int mb_prompt = 1;     // micro-batch count while processing the prompt
  int mb_gen = 1;        // micro-batch count during token generation

  void validate() const {
    if (stages < 1 || mb_prompt < 1 || mb_gen < 1)
      throw ConfigError("pipeline config fields must be >= 1");
  }
};

// Default per the schedule design: as many generation micro-batches as
// pipeline stages, twice that for the prompt.
inline PipelineConfig default_pipeline_config(int stages) {
  return PipelineConfig{stages, 2 * stages, stages};
}

enum class ScheduleMode { baseline, dynamic_queue, hybrid };

// One (micro_batch, token, stage) execution unit. token 0 is the prompt
// pass; each later token is one generation pass.
struct WorkUnit {
  int micro_batch = 0;
  int token = 0;
  int stage = 0;
  std::int64_t mb_size = 1;
  Phase phase = Phase::prompt;
  std::vector<int> deps;  // indices into LogicalSchedule::units
};

struct LogicalSchedule {
  PipelineConfig cfg;
  ScheduleMode mode = ScheduleMode::dynamic_queue;
  int tokens = 1;
  bool has_remainder = false;  // batch not divisible by a micro-batch count
  std::vector<WorkUnit> units;

  int unit_index(int mb, int token, int stage) const {
    for (int i = 0; i < static_cast<int>(units.size()); ++i)
      if (units[i].micro_batch == mb && units[i].token == token &&
          units[i].stage == stage)
        return i;
    throw ConfigError("unit not found");
  }
};

namespace detail {

inline std::vector<std::int64_t> split_batch(std::int64_t batch, int parts) {
  std::vector<std::int64_t> sizes;
  const std::int64_t base = batch / parts;
  const std::int64_t extra = batch % parts;
  for (int i = 0; i < parts; ++i) {
    const std::int64_t sz = base + (i < extra ? 1 : 0);
    if (sz > 0) sizes.push_back(sz);
  }
  return sizes;
}

}  // namespace detail

// Builds the dependency DAG. Unit (m, t, s) depends on (m, t, s-1), and
// for s = 0, t > 0 on (m, t-1, P-1) — the autoregressive loop-back.
// baseline further serializes: token t starts only after every micro-batch
// finished token t-1 (full pipeline flush). hybrid runs the prompt with
// mb_prompt micro-batches, then regroups into mb_gen micro-batches behind a
// phase-boundary barrier. baseline and dynamic use mb_gen throughout.
inline LogicalSchedule build_schedule(const PipelineConfig& cfg,
                                      const SeqWorkload& workload,
                                      ScheduleMode mode) {
  cfg.validate();
  if (workload.gen_tokens < 1)
    throw ConfigError("schedule requires gen_tokens >= 1");
  if (workload.batch < 1)
    throw ConfigError("schedule requires batch >= 1");

  LogicalSchedule sched;
  sched.cfg = cfg;
  sched.mode = mode;
  sched.tokens = static_cast<int>(workload.gen_tokens);

  const int prompt_parts =
      mode == ScheduleMode::hybrid ? cfg.mb_prompt : cfg.mb_gen;
  const auto prompt_sizes = detail::split_batch(workload.batch, prompt_parts);
  const auto gen_sizes = detail::split_batch(workload.batch, cfg.mb_gen);
  sched.has_remainder =
      workload.batch % prompt_parts != 0 || workload.batch % cfg.mb_gen != 0;

  const int P = cfg.stages;
  auto mb_count = [&](int t) {
    return static_cast<int>(t == 0 ? prompt_sizes.size() : gen_sizes.size());
  };
  // Unit ids, laid out token-major so indices are easy to precompute.
  std::vector<int> token_base(sched.tokens + 1, 0);
  for (int t = 0; t < sched.tokens; ++t)
    token_base[t + 1] = token_base[t] + mb_count(t) * P;
  auto id_of = [&](int m, int t, int s) { return token_base[t] + m * P + s; };

  sched.units.resize(token_base[sched.tokens]);
  for (int t = 0; t < sched.tokens; ++t) {
    const auto& sizes = t == 0 ? prompt_sizes : gen_sizes;
    const Phase phase = t == 0 ? Phase::prompt : Phase::generation;
    for (int m = 0; m < mb_count(t); ++m) {
      for (int s = 0; s < P; ++s) {
        WorkUnit& u = sched.units[id_of(m, t, s)];
        u.micro_batch = m;
        u.token = t;
        u.stage = s;
        u.mb_size = sizes[m];
        u.phase = phase;
        if (s > 0) {
          u.deps.push_back(id_of(m, t, s - 1));
        } else if (t > 0) {
          const bool barrier =
              mode == ScheduleMode::baseline ||
              (mode == ScheduleMode::hybrid && t == 1);
          if (barrier) {
            for (int pm = 0; pm < mb_count(t - 1); ++pm)
              u.deps.push_back(id_of(pm, t - 1, P - 1));
          } else {
            if (m < mb_count(t - 1))
              u.deps.push_back(id_of(m, t - 1, P - 1));
          }
        }
      }
    }
  }
  return sched;
}

struct ScheduleEvent {
  int stage = 0;
  double start = 0.0;
  double duration = 0.0;
  int micro_batch = 0;
  int token_index = 0;  // 0 = prompt
  Phase phase = Phase::prompt;

  double end() const { return start + duration; }
};

struct SimTimeline {
  std::vector<ScheduleEvent> events;
  int stages = 1;
  double total_latency = 0.0;
  // Idle gaps strictly between a stage's first and last event, summed.
  double bubble_time = 0.0;
  // Idle share of stages x total span, fill/drain included.
  double bubble_fraction = 0.0;
  double prompt_latency = 0.0;
  double generation_latency = 0.0;
};

using StageTimeFn = std::function<double(Phase, std::int64_t mb_size)>;

// Deterministic list scheduling: every stage runs one unit at a time, FIFO
// among ready units with ties broken by ascending (token, micro_batch).
inline SimTimeline simulate(const LogicalSchedule& sched,
                            const StageTimeFn& stage_time) {
  const int P = sched.cfg.stages;
  const int n = static_cast<int>(sched.units.size());

  std::vector<int> pending(n);
  std::vector<std::vector<int>> successors(n);
  for (int i = 0; i < n; ++i) {
    pending[i] = static_cast<int>(sched.units[i].deps.size());
    for (int d : sched.units[i].deps) successors[d].push_back(i);
  }

  // Ready units keyed (token, micro_batch); arrival time kept per unit.
  std::vector<std::set<std::pair<std::pair<int, int>, int>>> ready(P);
  std::vector<double> arrival(n, 0.0);
  auto push_ready = [&](int u, double t) {
    arrival[u] = t;
    ready[sched.units[u].stage].insert(
        {{sched.units[u].token, sched.units[u].micro_batch}, u});
  };
  for (int i = 0; i < n; ++i)
    if (pending[i] == 0) push_ready(i, 0.0);

  std::vector<double> stage_free(P, 0.0);
  std::vector<int> stage_running(P, -1);
  // Completion events: (time, stage).
  using Completion = std::pair<double, int>;
  std::priority_queue<Completion, std::vector<Completion>, std::greater<>>
      completions;
  std::vector<int> finish_unit(P, -1);

  std::vector<ScheduleEvent> events;
  events.reserve(n);
  int scheduled = 0;

  auto dispatch = [&](int s, double now) {
    if (stage_running[s] != -1 || ready[s].empty()) return;
    const int u = ready[s].begin()->second;
    ready[s].erase(ready[s].begin());
    const WorkUnit& unit = sched.units[u];
    const double start = std::max({now, stage_free[s], arrival[u]});
    const double dur = stage_time(unit.phase, unit.mb_size);
    if (!(dur > 0.0)) throw ConfigError("stage_time must be positive");
    events.push_back(ScheduleEvent{s, start, dur, unit.micro_batch,
                                   unit.token, unit.phase});
    stage_running[s] = u;
    finish_unit[s] = static_cast<int>(events.size()) - 1;
    stage_free[s] = start + dur;
    completions.push({start + dur, s});
    ++scheduled;
  };

  for (int s = 0; s < P; ++s) dispatch(s, 0.0);
  while (!completions.empty()) {
    const double now = completions.top().first;
    // Retire everything finishing now, then dispatch in stage order.
    while (!completions.empty() && completions.top().first == now) {
      const int s = completions.top().second;
      completions.pop();
      const int u = stage_running[s];
      stage_running[s] = -1;
      for (int succ : successors[u])
        if (--pending[succ] == 0) push_ready(succ, now);
    }
    for (int s = 0; s < P; ++s) dispatch(s, now);
  }
  if (scheduled != n)
    throw ConfigError("dependency cycle in schedule");  // cannot happen

  SimTimeline tl;
  tl.events = std::move(events);
  tl.stages = P;
  double busy = 0.0;
  std::vector<double> first(P, std::numeric_limits<double>::infinity());
  std::vector<double> last(P, 0.0), stage_busy(P, 0.0);
  for (const auto& e : tl.events) {
    tl.total_latency = std::max(tl.total_latency, e.end());
    first[e.stage] = std::min(first[e.stage], e.start);
    last[e.stage] = std::max(last[e.stage], e.end());
    stage_busy[e.stage] += e.duration;
    busy += e.duration;
    if (e.phase == Phase::prompt)
      tl.prompt_latency = std::max(tl.prompt_latency, e.end());
  }
  for (int s = 0; s < P; ++s)
    if (first[s] < last[s])
      tl.bubble_time += (last[s] - first[s]) - stage_busy[s];
  tl.bubble_fraction =
      tl.total_latency > 0.0 ? 1.0 - busy / (P * tl.total_latency) : 0.0;
  tl.generation_latency = tl.total_latency - tl.prompt_latency;
  return tl;
}

// KV-cache offload planning over a simulated timeline.
//
// Model: every device in the topology executes the timeline in tensor
// parallel lockstep and holds its slice of all `num_layers` layers' KV;
// kv_bytes_per_layer is the per-device slice size. A timeline event spans a
// full forward pass, so layer l's use window is the l-th of num_layers equal
// sub-intervals of each event. Offloads go out right after a layer's use;
// the restore must complete before the next use. Devices in one PCIe share
// pair schedule on a shared link timeline, earliest-deadline-first, which
// makes the plan contention-free by construction.
struct OffloadAction {
  enum class Direction { to_host, to_device };
  int device = 0;
  int layer = 0;
  std::int64_t bytes = 0;
  double window_start = 0.0;
  double window_end = 0.0;
  Direction direction = Direction::to_host;
};

struct KvOffloadPlan {
  std::vector<OffloadAction> actions;
  bool feasible = true;
  int violating_layer = -1;
  std::string reason;
};

inline KvOffloadPlan plan_kv_offload(const SimTimeline& timeline,
                                     const Topology& topo, int num_layers,
                                     std::int64_t kv_bytes_per_layer,
                                     std::int64_t threshold_bytes) {
  if (num_layers < 1) throw ConfigError("num_layers must be >= 1");
  if (kv_bytes_per_layer < 0 || threshold_bytes < 0)
    throw ConfigError("byte counts must be non-negative");

  KvOffloadPlan plan;
  const std::int64_t resident = num_layers * kv_bytes_per_layer;
  if (resident <= threshold_bytes) return plan;  // nothing to do

  // Layers each device offloads: its parity class, ascending, until the
  // remainder fits under the threshold.
  const int devices = topo.device_count();
  std::vector<std::vector<int>> layers_of(devices);
  for (int d = 0; d < devices; ++d) {
    std::int64_t kept = resident;
    for (int l = d % 2; l < num_layers && kept > threshold_bytes; l += 2) {
      layers_of[d].push_back(l);
      kept -= kv_bytes_per_layer;
    }
  }

  // Per-device trace: events sorted by time.
  std::vector<ScheduleEvent> trace = timeline.events;
  std::sort(trace.begin(), trace.end(),
            [](const ScheduleEvent& a, const ScheduleEvent& b) {
              if (a.start != b.start) return a.start < b.start;
              if (a.stage != b.stage) return a.stage < b.stage;
              return std::make_pair(a.token_index, a.micro_batch) <
                     std::make_pair(b.token_index, b.micro_batch);
            });
  if (trace.size() < 2) return plan;  // no reuse gap, nothing to schedule

  auto use_begin = [&](const ScheduleEvent& e, int layer) {
    return e.start + e.duration * layer / num_layers;
  };
  auto use_end = [&](const ScheduleEvent& e, int layer) {
    return e.start + e.duration * (layer + 1) / num_layers;
  };

  // Link groups: each PCIe share pair is one link; unpaired devices get one
  // of their own.
  std::vector<int> link_of(devices);
  std::iota(link_of.begin(), link_of.end(), 0);
  for (const auto& [a, b] : topo.pcie_share_pairs) link_of[b] = link_of[a];

  struct Transfer {
    double release;   // offload may start here (layer's use ended)
    double deadline;  // restore must be done here (next use starts)
    int device;
    int layer;
    int gap;  // index of the gap in the trace
  };
  std::vector<Transfer> transfers;
  for (int d = 0; d < devices; ++d)
    for (int l : layers_of[d])
      for (std::size_t i = 0; i + 1 < trace.size(); ++i)
        transfers.push_back(Transfer{use_end(trace[i], l),
                                     use_begin(trace[i + 1], l), d, l,
                                     static_cast<int>(i)});
  std::sort(transfers.begin(), transfers.end(),
            [](const Transfer& a, const Transfer& b) {
              return std::tie(a.deadline, a.release, a.device, a.layer) <
                     std::tie(b.deadline, b.release, b.device, b.layer);
            });

  // Earliest-deadline-first packing on each shared link proves feasibility;
  // a second pass then slides every restore as late as its deadline and the
  // following transfer allow, so the offloaded span actually frees memory.
  const double dur = kv_bytes_per_layer / topo.pcie.bandwidth;
  std::map<int, double> link_free;
  std::map<int, std::vector<std::size_t>> link_actions;
  std::vector<double> restore_deadline;
  for (const auto& t : transfers) {
    double& free_at = link_free[link_of[t.device]];
    const double off_start = std::max(t.release, free_at);
    const double off_end = off_start + dur;
    const double res_end = off_end + dur;
    if (res_end > t.deadline) {
      plan.feasible = false;
      plan.violating_layer = t.layer;
      plan.reason = "restore of layer " + std::to_string(t.layer) +
                    " on device " + std::to_string(t.device) +
                    " misses its reuse deadline";
      plan.actions.clear();
      return plan;
    }
    free_at = res_end;
    auto& idx = link_actions[link_of[t.device]];
    idx.push_back(plan.actions.size());
    plan.actions.push_back(OffloadAction{t.device, t.layer,
                                         kv_bytes_per_layer, off_start,
                                         off_end,
                                         OffloadAction::Direction::to_host});
    idx.push_back(plan.actions.size());
    plan.actions.push_back(OffloadAction{t.device, t.layer,
                                         kv_bytes_per_layer, off_end, res_end,
                                         OffloadAction::Direction::to_device});
    restore_deadline.push_back(t.deadline);
    restore_deadline.push_back(t.deadline);
  }
  for (auto& [link, idx] : link_actions) {
    double next_start = std::numeric_limits<double>::infinity();
    for (auto it = idx.rbegin(); it != idx.rend(); ++it) {
      OffloadAction& a = plan.actions[*it];
      if (a.direction == OffloadAction::Direction::to_device) {
        const double end =
            std::max(a.window_end,
                     std::min(restore_deadline[*it], next_start));
        a.window_start = end - dur;
        a.window_end = end;
      }
      next_start = a.window_start;
    }
  }
  return plan;
}

// Plain-text Gantt: one row per stage, events in time order.
inline std::string render_gantt(const SimTimeline& timeline) {
  std::vector<std::vector<const ScheduleEvent*>> rows(timeline.stages);
  for (const auto& e : timeline.events) rows[e.stage].push_back(&e);
  for (auto& row : rows)
    std::sort(row.begin(), row.end(),
              [](const ScheduleEvent* a, const ScheduleEvent* b) {
                return a->start < b->start;
              });
  std::ostringstream os;
  for (int s = 0; s < timeline.stages; ++s) {
    os << "stage " << s << " |";
    for (const auto* e : rows[s])
      os << " m" << e->micro_batch << ".t" << e->token_index << "["
         << e->start << "," << e->end() << ")";
    os << "\n";
  }
  return os.str();
}

}  // namespace infersim
