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
#include <numeric>
#include <string>
#include <vector>

#include "infersim/costmodel.hpp"
#include "infersim/hardware.hpp"
#include "infersim/model.hpp"

namespace infersim {

// Layer-streaming plan: weights pinned in DRAM or NVMe, a small GPU-resident
// window (current layer + prefetch), optionally fetched in partitions across
// the GPUs and reassembled over the fast interconnect.
struct OffloadPlan {
  MemTier pin_tier = MemTier::dram;
  int prefetch_depth = 1;
  int resident_layers = 2;  // >= 1 + prefetch_depth
  bool partitioned_fetch = false;
  std::vector<int> fetch_group;

  void validate() const {
    if (resident_layers < 1 + prefetch_depth)
      throw ConfigError("resident_layers must cover 1 + prefetch_depth");
    if (prefetch_depth < 0) throw ConfigError("negative prefetch_depth");
  }
};

// Per-layer transformer weight bytes (the streamed unit).
inline std::int64_t layer_weight_bytes(const ModelConfig& cfg) {
  return 12 * cfg.hidden_dim * cfg.hidden_dim * cfg.dtype_bytes;
}

inline OffloadPlan make_offload_plan(const ModelConfig& cfg,
                                     const Topology& topo) {
  cfg.validate();
  if (cfg.num_layers < 1) throw ConfigError("model has no layers to stream");
  const std::int64_t total = param_bytes(cfg);
  const std::int64_t layer = layer_weight_bytes(cfg);
  if (layer > topo.device.mem_bytes)
    throw InfeasibleError("a single layer exceeds GPU memory");
  OffloadPlan plan;
  if (total <= topo.tier(MemTier::dram).capacity) {
    plan.pin_tier = MemTier::dram;
  } else if (total <= topo.tier(MemTier::nvme).capacity) {
    plan.pin_tier = MemTier::nvme;
  } else {
    throw InfeasibleError("model exceeds NVMe capacity");
  }
  plan.prefetch_depth = 1;
  plan.resident_layers = 2;
  plan.fetch_group.resize(topo.device_count());
  std::iota(plan.fetch_group.begin(), plan.fetch_group.end(), 0);
  plan.partitioned_fetch = plan.fetch_group.size() > 1;
  plan.validate();
  return plan;
}

// Largest batch whose resident window + KV cache (full context) + transient
// activations fit in device memory. Monotone non-increasing in
// resident_layers: a smaller weight window leaves more room for inputs.
inline std::int64_t max_batch(const ModelConfig& cfg, const OffloadPlan& plan,
                              const DeviceSpec& device) {
  cfg.validate();
  plan.validate();
  const std::int64_t resident =
      std::min<std::int64_t>(plan.resident_layers, cfg.num_layers) *
          layer_weight_bytes(cfg) +
      cfg.vocab_size * cfg.hidden_dim * cfg.dtype_bytes;  // embeddings stay
  auto bytes_for = [&](std::int64_t b) {
    const SeqWorkload w{b, cfg.max_seq, 0};
    const std::int64_t act =
        4 * b * cfg.max_seq * cfg.hidden_dim * cfg.dtype_bytes;
    return resident + kv_cache_bytes(cfg, w) + act;
  };
  if (bytes_for(1) > device.mem_bytes)
    throw InfeasibleError("no feasible batch size: batch 1 needs " +
                          std::to_string(bytes_for(1)) + " bytes");
  std::int64_t lo = 1, hi = 2;
  while (bytes_for(hi) <= device.mem_bytes) {
    lo = hi;
    hi *= 2;
  }
  while (lo + 1 < hi) {
    const std::int64_t mid = lo + (hi - lo) / 2;
    (bytes_for(mid) <= device.mem_bytes ? lo : hi) = mid;
  }
  return lo;
}

struct ThroughputReport {
  enum class Bound { compute, fetch };
  double compute_time_per_layer = 0.0;
  double fetch_time_per_layer = 0.0;
  double per_layer_time = 0.0;
  double total_time = 0.0;      // one token-generation pass over all layers
  double tokens_per_sec = 0.0;
  double achieved_flops = 0.0;
  Bound bound = Bound::fetch;
};

// Streaming throughput for one generation pass. With prefetch the fetch of
// the next layer overlaps the current layer's compute (max); without it they
// serialize (sum). Partitioned fetch splits each layer across the fetch
// group and pays one intra-node allgather to reassemble. One initial fetch
// fills the pipeline.
inline ThroughputReport offload_throughput(const ModelConfig& cfg,
                                           const OffloadPlan& plan,
                                           const SeqWorkload& workload,
                                           const Topology& topo) {
  cfg.validate();
  plan.validate();
  workload.validate(cfg);
  ThroughputReport report;
  const double layer_bytes = static_cast<double>(layer_weight_bytes(cfg));
  const double tier_bw = topo.tier(plan.pin_tier).bandwidth;
  const std::size_t group = std::max<std::size_t>(1, plan.fetch_group.size());
  double fetch = layer_bytes / tier_bw;
  if (plan.partitioned_fetch && group > 1) {
    fetch /= static_cast<double>(group);
    fetch += collective_time(CollectiveKind::allgather,
                             layer_bytes / static_cast<double>(group),
                             plan.fetch_group, topo);
  }
  const double flops = layer_flops(cfg, workload, Phase::generation);
  const double compute = flops / topo.device.peak_flops(cfg.dtype_bytes);
  report.compute_time_per_layer = compute;
  report.fetch_time_per_layer = fetch;
  report.per_layer_time = plan.prefetch_depth >= 1 ? std::max(compute, fetch)
                                                   : compute + fetch;
  report.total_time =
      static_cast<double>(cfg.num_layers) * report.per_layer_time + fetch;
  report.tokens_per_sec =
      report.total_time > 0.0 ? workload.batch / report.total_time : 0.0;
  report.achieved_flops = report.total_time > 0.0
                              ? cfg.num_layers * flops / report.total_time
                              : 0.0;
  report.bound = compute >= fetch ? ThroughputReport::Bound::compute
                                  : ThroughputReport::Bound::fetch;
  return report;
}

}  // namespace infersim
