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
#include <random>
#include <vector>

#include "infersim/hardware.hpp"

namespace testutil {

// Integer-valued doubles keep reduction reorderings exact.
inline std::vector<double> random_int_matrix(std::mt19937& rng,
                                             std::int64_t rows,
                                             std::int64_t cols, int lo = -8,
                                             int hi = 8) {
  std::uniform_int_distribution<int> dist(lo, hi);
  std::vector<double> m(rows * cols);
  for (auto& v : m) v = static_cast<double>(dist(rng));
  return m;
}

inline infersim::DeviceSpec test_device(double mem_bw = 1.55e12,
                                        std::int64_t mem_bytes = 40'000'000'000,
                                        int sm_count = 108) {
  infersim::DeviceSpec d;
  d.mem_bytes = mem_bytes;
  d.mem_bw = mem_bw;
  d.sm_count = sm_count;
  d.kernel_launch_overhead = 5e-6;
  d.peak_flops_by_dtype[4] = 19.5e12;
  d.peak_flops_by_dtype[2] = 312e12;
  d.peak_flops_by_dtype[1] = 624e12;
  return d;
}

inline infersim::Topology test_topology(int nodes = 1, int gpus = 8) {
  infersim::LinkSpec intra{600e9, 2e-6, infersim::LinkKind::intra_node};
  infersim::LinkSpec inter{25e9, 5e-6, infersim::LinkKind::inter_node};
  infersim::LinkSpec pcie{25e9, 5e-6, infersim::LinkKind::pcie};
  std::map<infersim::MemTier, infersim::TierSpec> tiers{
      {infersim::MemTier::dram, {1'000'000'000'000, 25e9}},
      {infersim::MemTier::nvme, {15'000'000'000'000, 16e9}}};
  return infersim::build_topology(nodes, gpus, test_device(), intra, inter,
                                  pcie, tiers);
}

}  // namespace testutil
