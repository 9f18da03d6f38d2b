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
#include <span>
#include <string>
#include <vector>

#include "infersim/hardware.hpp"
#include "infersim/model.hpp"

namespace infersim {

// Roofline estimate for one (possibly fused) kernel launch group.
// total assumes compute fully overlaps the weight/activation reads.
struct KernelCost {
  double compute_time = 0.0;
  double memory_time = 0.0;
  double launch_overhead = 0.0;
  double total = 0.0;

  bool memory_bound() const { return memory_time >= compute_time; }
};

enum class CollectiveKind { allreduce, allgather, alltoall, broadcast, p2p };

inline KernelCost kernel_time(double flops, double bytes_moved,
                              const DeviceSpec& device, int dtype_bytes,
                              std::int64_t fused_launches = 1,
                              bool cuda_graph = false) {
  if (flops < 0.0 || bytes_moved < 0.0 || fused_launches < 1)
    throw ConfigError("kernel_time: negative work or zero launches");
  KernelCost cost;
  cost.compute_time = flops > 0.0 ? flops / device.peak_flops(dtype_bytes) : 0.0;
  cost.memory_time = bytes_moved / device.mem_bw;
  cost.launch_overhead =
      cuda_graph ? 0.0 : fused_launches * device.kernel_launch_overhead;
  cost.total =
      std::max(cost.compute_time, cost.memory_time) + cost.launch_overhead;
  return cost;
}

// Picks the link for a collective: inter-node if the group spans nodes,
// conservative for the whole operation.
inline const LinkSpec& group_link(const Topology& topo,
                                  std::span<const int> group) {
  const int node0 = topo.node_of(group.front());
  for (int dev : group)
    if (topo.node_of(dev) != node0) return topo.inter;
  return topo.intra;
}

// Fixed algorithms: ring allreduce, ring allgather, pairwise alltoall,
// pipelined broadcast, single-hop p2p. Singleton groups cost nothing.
inline double collective_time(CollectiveKind kind, double bytes_per_rank,
                              std::span<const int> group,
                              const Topology& topo) {
  if (group.empty()) throw ConfigError("collective over empty group");
  if (bytes_per_rank < 0.0) throw ConfigError("negative payload");
  for (int dev : group)
    if (dev < 0 || dev >= topo.device_count())
      throw ConfigError("unknown device id " + std::to_string(dev));
  const double n = static_cast<double>(group.size());
  if (group.size() == 1) return 0.0;
  const LinkSpec& link = group_link(topo, group);
  const double bw = link.bandwidth;
  const double lat = link.latency;
  switch (kind) {
    case CollectiveKind::allreduce:
      return 2.0 * (n - 1.0) / n * bytes_per_rank / bw + (n - 1.0) * lat;
    case CollectiveKind::allgather:
      return (n - 1.0) / n * bytes_per_rank / bw + (n - 1.0) * lat;
    case CollectiveKind::alltoall:
      return (n - 1.0) * (bytes_per_rank / n) / bw + (n - 1.0) * lat;
    case CollectiveKind::broadcast:
      return bytes_per_rank / bw + (n - 1.0) * lat;
    case CollectiveKind::p2p:
      return bytes_per_rank / bw + lat;
  }
  throw ConfigError("unknown collective kind");
}

inline double collective_time(CollectiveKind kind, double bytes_per_rank,
                              const std::vector<int>& group,
                              const Topology& topo) {
  return collective_time(kind, bytes_per_rank,
                         std::span<const int>(group.data(), group.size()),
                         topo);
}

struct ParallelismPlan {
  int tp = 1;
  int pp = 1;
};

// Per-token generation floor: the parameters resident on one device must be
// read once per token, so latency is bounded by bytes-per-device / mem_bw.
inline double min_latency_bound(const ModelConfig& cfg,
                                const ParallelismPlan& plan,
                                const Topology& topo) {
  if (plan.tp < 1 || plan.pp < 1)
    throw ConfigError("parallel degrees must be >= 1");
  const double per_device_bytes =
      static_cast<double>(param_bytes(cfg)) / (plan.tp * plan.pp);
  if (per_device_bytes > static_cast<double>(topo.device.mem_bytes))
    throw InfeasibleError("plan does not fit: " +
                          std::to_string(per_device_bytes) +
                          " bytes per device");
  return per_device_bytes / topo.device.mem_bw;
}

}  // namespace infersim
