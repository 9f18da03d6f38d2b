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

#include <catch2/catch_amalgamated.hpp>
#include <cmath>
#include <random>
#include <vector>

#include "helpers.hpp"
#include "infersim/costmodel.hpp"

using namespace infersim;

TEST_CASE("memory time dominates a zero-compute kernel", "[costmodel]") {
  DeviceSpec dev = testutil::test_device(/*mem_bw=*/2e12);
  const KernelCost cost = kernel_time(0.0, 2e9, dev, 2);
  REQUIRE(cost.compute_time == 0.0);
  REQUIRE(cost.memory_time == 2e9 / 2e12);
  REQUIRE(cost.total == cost.memory_time + dev.kernel_launch_overhead);
  REQUIRE(cost.memory_bound());
}

TEST_CASE("weight-read floor of a 350GB model at 2TB/s", "[costmodel]") {
  DeviceSpec dev = testutil::test_device(/*mem_bw=*/2e12);
  const KernelCost cost = kernel_time(0.0, 350e9, dev, 2);
  REQUIRE(cost.memory_time == 0.175);
}

TEST_CASE("cuda graph removes exactly the launch term", "[costmodel]") {
  DeviceSpec dev = testutil::test_device();
  for (std::int64_t launches : {1, 4, 17}) {
    const KernelCost with = kernel_time(1e12, 1e9, dev, 2, launches, false);
    const KernelCost without = kernel_time(1e12, 1e9, dev, 2, launches, true);
    REQUIRE(with.total - without.total ==
            launches * dev.kernel_launch_overhead);
    REQUIRE(without.launch_overhead == 0.0);
  }
}

TEST_CASE("kernel_time is monotone in work and launches", "[costmodel]") {
  DeviceSpec dev = testutil::test_device();
  std::mt19937 rng(17);
  std::uniform_real_distribution<double> work(0.0, 1e13);
  for (int i = 0; i < 200; ++i) {
    const double f = work(rng), b = work(rng);
    const KernelCost base = kernel_time(f, b, dev, 2, 2);
    REQUIRE(kernel_time(f * 2, b, dev, 2, 2).total >= base.total);
    REQUIRE(kernel_time(f, b * 2, dev, 2, 2).total >= base.total);
    REQUIRE(kernel_time(f, b, dev, 2, 3).total >= base.total);
  }
}

TEST_CASE("singleton groups communicate for free", "[costmodel]") {
  const Topology topo = testutil::test_topology(2, 8);
  const std::vector<int> solo{3};
  for (auto kind : {CollectiveKind::allreduce, CollectiveKind::allgather,
                    CollectiveKind::alltoall, CollectiveKind::broadcast,
                    CollectiveKind::p2p}) {
    REQUIRE(collective_time(kind, 1e9, solo, topo) == 0.0);
  }
}

TEST_CASE("ring allreduce formula on two ranks", "[costmodel]") {
  Topology topo = testutil::test_topology(1, 2);
  topo.intra.bandwidth = 1e11;
  const std::vector<int> group{0, 1};
  const double t =
      collective_time(CollectiveKind::allreduce, 1e9, group, topo);
  REQUIRE(t == 2.0 * 0.5 * 1e9 / 1e11 + topo.intra.latency);
  REQUIRE(t == Catch::Approx(0.01 + topo.intra.latency));
}

TEST_CASE("alltoall follows the pairwise message formula", "[costmodel]") {
  Topology topo = testutil::test_topology(16, 8);
  const double b = 4e8;
  auto time_for = [&](int n) {
    std::vector<int> group(n);
    for (int i = 0; i < n; ++i) group[i] = i;
    return collective_time(CollectiveKind::alltoall, b, group, topo);
  };
  const LinkSpec& link = topo.inter;  // groups of 16+ span nodes here
  for (int n : {16, 128}) {
    REQUIRE(time_for(n) ==
            (n - 1) * (b / n) / link.bandwidth + (n - 1) * link.latency);
  }
  REQUIRE(time_for(128) > time_for(16));
}

TEST_CASE("collectives use the slowest spanned link", "[costmodel]") {
  const Topology topo = testutil::test_topology(2, 8);
  const std::vector<int> same_node{0, 1, 2};
  const std::vector<int> cross{0, 1, 8};
  const double intra =
      collective_time(CollectiveKind::allgather, 1e9, same_node, topo);
  const double inter =
      collective_time(CollectiveKind::allgather, 1e9, cross, topo);
  REQUIRE(inter > intra);
  REQUIRE_THROWS_AS(
      collective_time(CollectiveKind::allgather, 1e9, std::vector<int>{0, 99},
                      topo),
      ConfigError);
}

TEST_CASE("collective time is monotone in bytes and group size",
          "[costmodel]") {
  const Topology topo = testutil::test_topology(4, 8);
  std::mt19937 rng(23);
  std::uniform_real_distribution<double> bytes(0.0, 1e10);
  for (auto kind : {CollectiveKind::allreduce, CollectiveKind::allgather,
                    CollectiveKind::alltoall}) {
    for (int i = 0; i < 50; ++i) {
      const double b = bytes(rng);
      std::uniform_int_distribution<int> size(1, 31);
      const int n = size(rng);
      std::vector<int> group(n), bigger(n + 1);
      for (int j = 0; j < n; ++j) group[j] = j;
      for (int j = 0; j <= n; ++j) bigger[j] = j;
      REQUIRE(collective_time(kind, b * 2, group, topo) >=
              collective_time(kind, b, group, topo));
      REQUIRE(collective_time(kind, b, bigger, topo) >=
              collective_time(kind, b, group, topo));
    }
  }
}

TEST_CASE("min latency bound divides by the parallel degree", "[costmodel]") {
  ModelConfig cfg;
  cfg.name = "LM-175B";
  cfg.hidden_dim = 12288;
  cfg.num_layers = 96;
  cfg.num_heads = 96;
  Topology topo = testutil::test_topology(1, 8);
  topo.device.mem_bw = 2e12;
  topo.device.mem_bytes = 400'000'000'000;  // fits at TP=1 for the bound

  const double tp1 = min_latency_bound(cfg, {1, 1}, topo);
  REQUIRE(tp1 == static_cast<double>(param_bytes(cfg)) / 2e12);
  REQUIRE(std::abs(tp1 - 0.175) / 0.175 < 0.01);
  REQUIRE(min_latency_bound(cfg, {2, 1}, topo) == tp1 / 2);
  REQUIRE(min_latency_bound(cfg, {2, 2}, topo) == tp1 / 4);
}

TEST_CASE("zero-parameter model has a zero bound", "[costmodel]") {
  ModelConfig cfg;
  cfg.hidden_dim = 1;
  cfg.num_layers = 0;
  cfg.num_heads = 1;
  cfg.vocab_size = 0;
  const Topology topo = testutil::test_topology(1, 1);
  REQUIRE(min_latency_bound(cfg, {1, 1}, topo) == 0.0);
}

TEST_CASE("infeasible plans are rejected", "[costmodel]") {
  ModelConfig cfg;
  cfg.name = "LM-175B";
  cfg.hidden_dim = 12288;
  cfg.num_layers = 96;
  cfg.num_heads = 96;
  const Topology topo = testutil::test_topology(1, 8);  // 40GB devices
  REQUIRE_THROWS_AS(min_latency_bound(cfg, {1, 1}, topo), InfeasibleError);
  REQUIRE(min_latency_bound(cfg, {16, 1}, topo) > 0.0);
}
