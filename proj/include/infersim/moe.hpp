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
#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "infersim/errors.hpp"
#include "infersim/hardware.hpp"
#include "infersim/model.hpp"

namespace infersim {

constexpr int kDroppedToken = -1;

// Top-1 routing result: forward table plus the inverse expert->token table
// built by a single scan, capped at capacity c_e per expert.
struct GateAssignment {
  std::vector<int> token_to_expert;            // expert id or kDroppedToken
  std::vector<std::vector<int>> expert_to_token;  // per expert, token order
  std::int64_t capacity = 0;                   // c_e

  std::int64_t assigned_tokens() const {
    std::int64_t n = 0;
    for (const auto& list : expert_to_token) n += list.size();
    return n;
  }
};

inline std::int64_t expert_capacity(std::int64_t tokens,
                                    std::int64_t num_experts,
                                    double capacity_factor) {
  return static_cast<std::int64_t>(
      std::ceil(capacity_factor * static_cast<double>(tokens) /
                static_cast<double>(num_experts)));
}

// Argmax gating (ties to the lowest expert index); tokens beyond an
// expert's capacity are dropped in ascending token order.
inline GateAssignment gate_top1(const std::vector<std::vector<double>>& logits,
                                double capacity_factor) {
  const std::int64_t s = static_cast<std::int64_t>(logits.size());
  std::int64_t e = s > 0 ? static_cast<std::int64_t>(logits[0].size()) : 1;
  if (e < 1) throw ConfigError("logits need at least one expert column");
  GateAssignment assign;
  assign.capacity = expert_capacity(s, e, capacity_factor);
  assign.expert_to_token.resize(e);
  assign.token_to_expert.resize(s, kDroppedToken);
  for (std::int64_t t = 0; t < s; ++t) {
    if (static_cast<std::int64_t>(logits[t].size()) != e)
      throw ConfigError("ragged logits");
    int best = 0;
    for (int j = 0; j < e; ++j) {
      if (!std::isfinite(logits[t][j]))
        throw ConfigError("non-finite logit");
      if (logits[t][j] > logits[t][best]) best = j;
    }
    if (static_cast<std::int64_t>(assign.expert_to_token[best].size()) <
        assign.capacity) {
      assign.token_to_expert[t] = best;
      assign.expert_to_token[best].push_back(static_cast<int>(t));
    }
  }
  return assign;
}

// Per-expert contiguous token blocks of width M; unfilled slots stay zero.
struct ScatterBuffer {
  std::vector<std::vector<std::vector<double>>> blocks;  // E x c_e x M
  std::vector<std::int64_t> fill;                        // tokens per expert

  ScatterBuffer(std::int64_t experts, std::int64_t capacity, std::int64_t m)
      : blocks(experts,
               std::vector<std::vector<double>>(
                   capacity, std::vector<double>(m, 0.0))),
        fill(experts, 0) {}
};

using ExpertFn =
    std::function<std::vector<double>(int expert, const std::vector<double>&)>;

struct MoEResult {
  std::vector<std::vector<double>> output;  // S x M
  std::int64_t op_count = 0;
};

// Table-based dispatch: copy each assigned token into its expert block,
// apply the expert, copy back. Dropped tokens pass through on the residual
// path. op_count counts element copies: 2 * assigned * M.
inline MoEResult scatter_gather_dense(
    const std::vector<std::vector<double>>& tokens,
    const GateAssignment& assign, const ExpertFn& expert_fn) {
  const std::int64_t s = static_cast<std::int64_t>(tokens.size());
  if (static_cast<std::int64_t>(assign.token_to_expert.size()) != s)
    throw ConfigError("assignment does not match token count");
  const std::int64_t e =
      static_cast<std::int64_t>(assign.expert_to_token.size());
  const std::int64_t m = s > 0 ? static_cast<std::int64_t>(tokens[0].size())
                               : 0;
  MoEResult result;
  result.output = tokens;  // residual default
  ScatterBuffer buffer(e, assign.capacity, m);
  for (std::int64_t ex = 0; ex < e; ++ex) {
    const auto& list = assign.expert_to_token[ex];
    for (std::size_t slot = 0; slot < list.size(); ++slot) {
      const int tok = list[slot];
      if (tok < 0 || tok >= s || assign.token_to_expert[tok] != ex)
        throw ConfigError("inconsistent expert_to_token table");
      buffer.blocks[ex][slot] = tokens[tok];
      buffer.fill[ex] = static_cast<std::int64_t>(slot) + 1;
      result.op_count += m;  // scatter copy
    }
  }
  for (std::int64_t ex = 0; ex < e; ++ex) {
    for (std::int64_t slot = 0; slot < buffer.fill[ex]; ++slot) {
      const std::vector<double> out =
          expert_fn(static_cast<int>(ex), buffer.blocks[ex][slot]);
      const int tok = assign.expert_to_token[ex][slot];
      result.output[tok] = out;
      result.op_count += m;  // gather copy
    }
  }
  return result;
}

// Literal one-hot reference: token->expert one-hot, cumsum for the
// within-expert position, a dense [S,E,c_e] dispatch tensor, einsum scatter
// and gather (each S*E*c_e*M multiply-adds, all counted), with dropped
// tokens taking the residual path. Output must match the table-based path
// bit for bit.
inline MoEResult sparse_oracle(const std::vector<std::vector<double>>& tokens,
                               const std::vector<std::vector<double>>& logits,
                               double capacity_factor,
                               const ExpertFn& expert_fn) {
  const std::int64_t s = static_cast<std::int64_t>(tokens.size());
  if (logits.size() != tokens.size())
    throw ConfigError("logits and tokens row counts differ");
  const std::int64_t e =
      s > 0 ? static_cast<std::int64_t>(logits[0].size()) : 1;
  const std::int64_t m = s > 0 ? static_cast<std::int64_t>(tokens[0].size())
                               : 0;
  const std::int64_t cap = expert_capacity(s, e, capacity_factor);

  // Gating: one-hot argmax, ties to the lowest index.
  std::vector<std::vector<double>> onehot(s, std::vector<double>(e, 0.0));
  for (std::int64_t t = 0; t < s; ++t) {
    int best = 0;
    for (int j = 0; j < static_cast<int>(e); ++j) {
      if (!std::isfinite(logits[t][j]))
        throw ConfigError("non-finite logit");
      if (logits[t][j] > logits[t][best]) best = j;
    }
    onehot[t][best] = 1.0;
  }
  // Exclusive cumsum down the token axis gives each token its position in
  // its expert's block; positions at or past capacity are masked out.
  std::vector<std::vector<double>> position(s, std::vector<double>(e, 0.0));
  std::vector<double> running(e, 0.0);
  for (std::int64_t t = 0; t < s; ++t)
    for (std::int64_t j = 0; j < e; ++j) {
      position[t][j] = running[j];
      running[j] += onehot[t][j];
    }
  // dispatch[t][j][c] = 1 iff token t goes to expert j at slot c.
  std::vector<double> dispatch(s * e * cap, 0.0);
  auto d_at = [&](std::int64_t t, std::int64_t j, std::int64_t c) -> double& {
    return dispatch[(t * e + j) * cap + c];
  };
  for (std::int64_t t = 0; t < s; ++t)
    for (std::int64_t j = 0; j < e; ++j) {
      const std::int64_t pos = static_cast<std::int64_t>(position[t][j]);
      if (onehot[t][j] == 1.0 && pos < cap) d_at(t, j, pos) = 1.0;
    }

  MoEResult result;
  result.output = tokens;
  // Scatter einsum: buffer[j][c][k] = sum_t dispatch[t][j][c] * tokens[t][k].
  std::vector<std::vector<std::vector<double>>> buffer(
      e, std::vector<std::vector<double>>(cap, std::vector<double>(m, 0.0)));
  for (std::int64_t t = 0; t < s; ++t)
    for (std::int64_t j = 0; j < e; ++j)
      for (std::int64_t c = 0; c < cap; ++c)
        for (std::int64_t k = 0; k < m; ++k) {
          buffer[j][c][k] += d_at(t, j, c) * tokens[t][k];
          ++result.op_count;
        }
  // Expert application on every (padded) slot.
  std::vector<std::vector<std::vector<double>>> expert_out(
      e, std::vector<std::vector<double>>(cap));
  for (std::int64_t j = 0; j < e; ++j)
    for (std::int64_t c = 0; c < cap; ++c)
      expert_out[j][c] = expert_fn(static_cast<int>(j), buffer[j][c]);
  // Gather einsum: out[t][k] = sum_{j,c} dispatch[t][j][c] * expert_out.
  for (std::int64_t t = 0; t < s; ++t) {
    bool assigned = false;
    std::vector<double> gathered(m, 0.0);
    for (std::int64_t j = 0; j < e; ++j)
      for (std::int64_t c = 0; c < cap; ++c) {
        const double d = d_at(t, j, c);
        if (d == 1.0) assigned = true;
        for (std::int64_t k = 0; k < m; ++k) {
          gathered[k] += d * expert_out[j][c][k];
          ++result.op_count;
        }
      }
    if (assigned) result.output[t] = gathered;
  }
  return result;
}

// Device grid for combined tensor slicing and expert parallelism.
// device id = ep_rank * L + tp_rank; the non-expert parameters are sharded
// L ways and replicated across the p/L data-parallel groups.
struct RankGrid {
  int p = 1;          // total devices
  int L = 1;          // tensor-slicing degree
  int ep_degree = 1;  // expert-parallel degree, p = L * ep_degree
  int dp_degree = 1;  // non-expert data parallelism, = p / L

  static RankGrid make(int p, int L) {
    if (p < 1 || L < 1 || p % L != 0)
      throw ConfigError("grid requires p >= 1 divisible by L");
    return RankGrid{p, L, p / L, p / L};
  }

  int tp_rank(int dev) const { return dev % L; }
  int ep_rank(int dev) const { return dev / L; }
  int device_of(int tp, int ep) const { return ep * L + tp; }
};

enum class PccStepKind { local_split, grouped_alltoall, allgather,
                         local_transform };
enum class PccDirection { forward, reverse };

struct PccStep {
  PccStepKind kind;
  std::vector<std::vector<int>> groups;
};

struct PCCPlan {
  PccDirection direction = PccDirection::forward;
  std::vector<PccStep> steps;
};

// Parallelism-coordinated all-to-all: the exchange runs only inside the L
// groups of p/L devices that share a tensor-slicing rank (replicated data
// makes the other lanes redundant); the reverse direction allgathers across
// each of the p/L tensor-parallel groups of L afterwards.
inline PCCPlan pcc_plan(const RankGrid& grid,
                        PccDirection direction = PccDirection::forward) {
  if (grid.p != grid.L * grid.ep_degree)
    throw ConfigError("grid: p must equal L * ep_degree");
  PCCPlan plan;
  plan.direction = direction;
  std::vector<std::vector<int>> alltoall_groups(grid.L);
  for (int tp = 0; tp < grid.L; ++tp)
    for (int ep = 0; ep < grid.ep_degree; ++ep)
      alltoall_groups[tp].push_back(grid.device_of(tp, ep));
  std::vector<std::vector<int>> allgather_groups(grid.ep_degree);
  for (int ep = 0; ep < grid.ep_degree; ++ep)
    for (int tp = 0; tp < grid.L; ++tp)
      allgather_groups[ep].push_back(grid.device_of(tp, ep));

  plan.steps.push_back({PccStepKind::local_split, {}});
  plan.steps.push_back({PccStepKind::grouped_alltoall, alltoall_groups});
  if (direction == PccDirection::reverse)
    plan.steps.push_back({PccStepKind::allgather, allgather_groups});
  plan.steps.push_back({PccStepKind::local_transform, {}});
  return plan;
}

struct Payload {
  std::int64_t id = 0;
  int dest_expert = 0;
};

struct Delivery {
  std::int64_t payload_id = 0;
  int dest_expert = 0;
  int src_ep_rank = 0;

  auto key() const { return std::tie(payload_id, dest_expert, src_ep_rank); }
  bool operator<(const Delivery& o) const { return key() < o.key(); }
  bool operator==(const Delivery& o) const { return key() == o.key(); }
};

namespace detail {

inline int owner_ep_rank(int expert, int num_experts, const RankGrid& grid) {
  if (num_experts % grid.ep_degree != 0)
    throw ConfigError("num_experts must be divisible by ep_degree");
  const int per_rank = num_experts / grid.ep_degree;
  if (expert < 0 || expert >= num_experts)
    throw ConfigError("payload routed to unknown expert");
  return expert / per_rank;
}

}  // namespace detail

// Routes token payloads through the PCC steps. Inputs must be replicated
// across tensor ranks (same payload list for every device of an ep rank).
// Every payload lands exactly once on each device of the owning expert's
// tensor group.
inline std::vector<std::vector<Delivery>> pcc_simulate(
    const PCCPlan& plan, const std::vector<std::vector<Payload>>& payloads,
    const RankGrid& grid, int num_experts) {
  if (static_cast<int>(payloads.size()) != grid.p)
    throw ConfigError("payloads must cover every device");
  for (int ep = 0; ep < grid.ep_degree; ++ep) {
    const auto& base = payloads[grid.device_of(0, ep)];
    for (int tp = 1; tp < grid.L; ++tp) {
      const auto& other = payloads[grid.device_of(tp, ep)];
      bool same = base.size() == other.size();
      for (std::size_t i = 0; same && i < base.size(); ++i)
        same = base[i].id == other[i].id &&
               base[i].dest_expert == other[i].dest_expert;
      if (!same)
        throw ConfigError("inputs not replicated across tensor ranks");
    }
  }

  std::vector<std::vector<Delivery>> held(grid.p);
  for (const auto& step : plan.steps) {
    switch (step.kind) {
      case PccStepKind::local_split:
        // Bucket by destination ep rank; buckets stay on the device until
        // the grouped exchange.
        for (int dev = 0; dev < grid.p; ++dev)
          for (const auto& pl : payloads[dev])
            held[dev].push_back(Delivery{
                pl.id, pl.dest_expert,
                grid.ep_rank(dev)});
        break;
      case PccStepKind::grouped_alltoall: {
        std::vector<std::vector<Delivery>> next(grid.p);
        for (const auto& group : step.groups)
          for (int src : group)
            for (const auto& d : held[src]) {
              const int dst_ep =
                  detail::owner_ep_rank(d.dest_expert, num_experts, grid);
              // Stay in this group's lane: same tp rank, target ep rank.
              const int dst = grid.device_of(grid.tp_rank(src), dst_ep);
              next[dst].push_back(d);
            }
        held = std::move(next);
        break;
      }
      case PccStepKind::allgather: {
        // Id-level reassembly: the lanes of a tensor group carry slices of
        // the same tokens, so the gather merges and dedupes.
        std::vector<std::vector<Delivery>> next(grid.p);
        for (const auto& group : step.groups) {
          std::vector<Delivery> merged;
          for (int dev : group)
            merged.insert(merged.end(), held[dev].begin(), held[dev].end());
          std::sort(merged.begin(), merged.end());
          merged.erase(std::unique(merged.begin(), merged.end()),
                       merged.end());
          for (int dev : group) next[dev] = merged;
        }
        held = std::move(next);
        break;
      }
      case PccStepKind::local_transform:
        for (auto& list : held) std::sort(list.begin(), list.end());
        break;
    }
  }
  return held;
}

// Independent check: the unoptimized global all-to-all addresses the owner
// device directly from every replica lane.
inline std::vector<std::vector<Delivery>> baseline_alltoall_simulate(
    const std::vector<std::vector<Payload>>& payloads, const RankGrid& grid,
    int num_experts) {
  if (static_cast<int>(payloads.size()) != grid.p)
    throw ConfigError("payloads must cover every device");
  std::vector<std::vector<Delivery>> delivered(grid.p);
  for (int dev = 0; dev < grid.p; ++dev)
    for (const auto& pl : payloads[dev]) {
      const int dst_ep =
          detail::owner_ep_rank(pl.dest_expert, num_experts, grid);
      const int dst = grid.device_of(grid.tp_rank(dev), dst_ep);
      delivered[dst].push_back(
          Delivery{pl.id, pl.dest_expert, grid.ep_rank(dev)});
    }
  for (auto& list : delivered) std::sort(list.begin(), list.end());
  return delivered;
}

// Closed-form latency. The grouped exchange touches p/L peers instead of p:
// forward = (p/L)*C1 + C2, reverse adds the L-rank allgather term, baseline
// = p*C1 + C2.
inline double pcc_latency(const RankGrid& grid, double c1, double c2,
                          double c3, PccDirection direction) {
  if (c1 < 0.0 || c2 < 0.0 || c3 < 0.0)
    throw ConfigError("latency constants must be non-negative");
  const double groups = static_cast<double>(grid.p) / grid.L;
  double t = groups * c1 + c2;
  if (direction == PccDirection::reverse) t += grid.L * c3;
  return t;
}

inline double baseline_alltoall_latency(const RankGrid& grid, double c1,
                                        double c2) {
  return static_cast<double>(grid.p) * c1 + c2;
}

// Parameter placement for combined tensor/expert/data parallelism.
struct ExpertShard {
  int expert = 0;
  int shard_index = 0;
  int shard_count = 1;
};

struct DevicePlacement {
  int device = 0;
  int tp_rank = 0;
  int ep_rank = 0;
  std::int64_t non_expert_bytes = 0;
  std::int64_t expert_bytes = 0;
  std::vector<ExpertShard> experts;
};

struct Placement {
  std::vector<DevicePlacement> devices;
  int expert_slicing = 1;  // tensor ranks each expert is split across
};

// Non-expert parameters: sharded L ways, replicated across the p/L groups.
// Expert parameters: split across ep ranks; within an ep group the
// experts-per-group spread over the L tensor slots, slicing each expert
// across L / experts_per_group ranks when experts are scarce.
inline Placement orchestrate(const ModelConfig& cfg, const RankGrid& grid,
                             const Topology& topo) {
  cfg.validate();
  if (!cfg.moe) throw ConfigError("orchestrate requires an MoE model");
  const std::int64_t experts = cfg.moe->num_experts;
  if (experts % grid.ep_degree != 0)
    throw ConfigError("num_experts must be divisible by ep_degree");
  const std::int64_t per_group = experts / grid.ep_degree;
  std::int64_t slicing = 1;
  std::int64_t whole_per_device = per_group;
  if (per_group >= grid.L) {
    if (per_group % grid.L != 0)
      throw ConfigError("experts per group must divide over tensor ranks");
    whole_per_device = per_group / grid.L;
  } else {
    if (grid.L % per_group != 0)
      throw ConfigError("tensor ranks must divide over experts per group");
    slicing = grid.L / per_group;
    whole_per_device = 0;
  }

  // The dense FFN of each expert layer lives in the expert pool, so the
  // non-expert remainder is everything else.
  const std::int64_t expert_total_bytes =
      expert_param_count(cfg) * cfg.dtype_bytes;
  const std::int64_t expert_unit_bytes = expert_total_bytes / experts;
  const std::int64_t non_expert_bytes = param_bytes(cfg) - expert_total_bytes;

  Placement placement;
  placement.expert_slicing = static_cast<int>(slicing);
  for (int dev = 0; dev < grid.p; ++dev) {
    DevicePlacement d;
    d.device = dev;
    d.tp_rank = grid.tp_rank(dev);
    d.ep_rank = grid.ep_rank(dev);
    d.non_expert_bytes = non_expert_bytes / grid.L;
    const std::int64_t first_expert = d.ep_rank * per_group;
    if (whole_per_device > 0) {
      for (std::int64_t i = 0; i < whole_per_device; ++i) {
        const int ex =
            static_cast<int>(first_expert + d.tp_rank * whole_per_device + i);
        d.experts.push_back(ExpertShard{ex, 0, 1});
        d.expert_bytes += expert_unit_bytes;
      }
    } else {
      // tp slots map to (expert, shard) pairs: shard-major within an expert.
      const std::int64_t ex = first_expert + d.tp_rank / slicing;
      const int shard = static_cast<int>(d.tp_rank % slicing);
      d.experts.push_back(ExpertShard{static_cast<int>(ex), shard,
                                      static_cast<int>(slicing)});
      d.expert_bytes += expert_unit_bytes / slicing;
    }
    const std::int64_t total = d.non_expert_bytes + d.expert_bytes;
    if (total > topo.device.mem_bytes)
      throw InfeasibleError("device " + std::to_string(dev) + " needs " +
                            std::to_string(total) + " bytes, memory is " +
                            std::to_string(topo.device.mem_bytes));
    placement.devices.push_back(std::move(d));
  }
  return placement;
}

}  // namespace infersim
