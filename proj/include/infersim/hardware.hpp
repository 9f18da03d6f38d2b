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

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "infersim/errors.hpp"

namespace infersim {

enum class LinkKind { intra_node, inter_node, pcie };

struct LinkSpec {
  double bandwidth = 0.0;  // bytes/sec
  double latency = 0.0;    // seconds
  LinkKind kind = LinkKind::intra_node;
};

struct DeviceSpec {
  std::int64_t mem_bytes = 0;
  double mem_bw = 0.0;  // bytes/sec
  std::map<int, double> peak_flops_by_dtype;  // dtype_bytes -> FLOPs/sec
  int sm_count = 0;
  double kernel_launch_overhead = 5e-6;  // free parameter, configurable

  double peak_flops(int dtype_bytes) const {
    auto it = peak_flops_by_dtype.find(dtype_bytes);
    if (it == peak_flops_by_dtype.end())
      throw ConfigError("no peak FLOPs entry for dtype_bytes=" +
                        std::to_string(dtype_bytes));
    return it->second;
  }

  void validate() const {
    if (mem_bytes <= 0 || mem_bw <= 0.0 || sm_count <= 0)
      throw ConfigError("device fields must be positive");
    if (kernel_launch_overhead < 0.0)
      throw ConfigError("kernel_launch_overhead must be non-negative");
    for (const auto& [dt, fl] : peak_flops_by_dtype)
      if (fl <= 0.0) throw ConfigError("peak FLOPs must be positive");
    // Narrower dtypes never have a lower peak.
    auto peak_or = [&](int dt, double fallback) {
      auto it = peak_flops_by_dtype.find(dt);
      return it == peak_flops_by_dtype.end() ? fallback : it->second;
    };
    const double fp32 = peak_or(4, 0.0);
    const double fp16 = peak_or(2, fp32);
    const double int8 = peak_or(1, fp16);
    if (!(int8 >= fp16 && fp16 >= fp32))
      throw ConfigError("peak FLOPs must satisfy int8 >= fp16 >= fp32");
  }
};

enum class MemTier { dram, nvme };

struct TierSpec {
  std::int64_t capacity = 0;  // bytes
  double bandwidth = 0.0;     // bytes/sec into GPU memory
};

// Homogeneous cluster: num_nodes x gpus_per_node identical devices.
// Global device id = node * gpus_per_node + local index.
struct Topology {
  std::string name;
  int num_nodes = 1;
  int gpus_per_node = 1;
  DeviceSpec device;
  LinkSpec intra;
  LinkSpec inter;
  LinkSpec pcie;
  std::vector<std::pair<int, int>> pcie_share_pairs;
  std::map<MemTier, TierSpec> tiers;

  int device_count() const { return num_nodes * gpus_per_node; }

  int node_of(int dev) const {
    if (dev < 0 || dev >= device_count())
      throw ConfigError("invalid device id " + std::to_string(dev));
    return dev / gpus_per_node;
  }

  const TierSpec& tier(MemTier t) const {
    auto it = tiers.find(t);
    if (it == tiers.end()) throw ConfigError("memory tier not configured");
    return it->second;
  }

  void validate() const {
    if (num_nodes < 1 || gpus_per_node < 1)
      throw ConfigError("node and GPU counts must be >= 1");
    device.validate();
    if (intra.bandwidth < inter.bandwidth)
      throw ConfigError("intra-node bandwidth must be >= inter-node");
    std::vector<int> seen;
    for (const auto& [a, b] : pcie_share_pairs) {
      if (a < 0 || b < 0 || a >= device_count() || b >= device_count())
        throw ConfigError("pcie_share_pair references unknown device");
      for (int d : {a, b}) {
        for (int s : seen)
          if (s == d)
            throw ConfigError("device in more than one PCIe share pair");
        seen.push_back(d);
      }
    }
  }
};

// Default PCIe sharing: consecutive device pairs (2i, 2i+1) share one link.
inline std::vector<std::pair<int, int>> default_pcie_pairs(int device_count) {
  std::vector<std::pair<int, int>> pairs;
  for (int d = 0; d + 1 < device_count; d += 2) pairs.emplace_back(d, d + 1);
  return pairs;
}

inline Topology build_topology(int num_nodes, int gpus_per_node,
                               const DeviceSpec& device, const LinkSpec& intra,
                               const LinkSpec& inter, const LinkSpec& pcie,
                               std::map<MemTier, TierSpec> tiers = {}) {
  Topology topo;
  topo.num_nodes = num_nodes;
  topo.gpus_per_node = gpus_per_node;
  topo.device = device;
  topo.intra = intra;
  topo.inter = inter;
  topo.pcie = pcie;
  topo.intra.kind = LinkKind::intra_node;
  topo.inter.kind = LinkKind::inter_node;
  topo.pcie.kind = LinkKind::pcie;
  topo.tiers = std::move(tiers);
  topo.pcie_share_pairs = default_pcie_pairs(topo.device_count());
  topo.validate();
  return topo;
}

inline const LinkSpec& link_between(const Topology& topo, int a, int b) {
  if (a == b) throw ConfigError("link_between requires distinct devices");
  if (a < 0 || b < 0 || a >= topo.device_count() || b >= topo.device_count())
    throw ConfigError("invalid device id");
  return topo.node_of(a) == topo.node_of(b) ? topo.intra : topo.inter;
}

}  // namespace infersim
