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
#include <random>

#include "helpers.hpp"
#include "infersim/hardware.hpp"

using namespace infersim;

TEST_CASE("topologies enumerate devices across nodes", "[hardware]") {
  const Topology topo = testutil::test_topology(2, 8);
  REQUIRE(topo.device_count() == 16);
  REQUIRE(topo.node_of(0) == 0);
  REQUIRE(topo.node_of(7) == 0);
  REQUIRE(topo.node_of(8) == 1);
  REQUIRE(topo.node_of(15) == 1);
  REQUIRE_THROWS_AS(topo.node_of(16), ConfigError);
}

TEST_CASE("single-device topology is valid", "[hardware]") {
  const Topology topo = testutil::test_topology(1, 1);
  REQUIRE(topo.device_count() == 1);
  REQUIRE(topo.pcie_share_pairs.empty());
}

TEST_CASE("zero counts are rejected", "[hardware]") {
  const Topology good = testutil::test_topology(1, 2);
  REQUIRE_THROWS_AS(build_topology(0, 8, good.device, good.intra, good.inter,
                                   good.pcie, good.tiers),
                    ConfigError);
  REQUIRE_THROWS_AS(build_topology(1, 0, good.device, good.intra, good.inter,
                                   good.pcie, good.tiers),
                    ConfigError);
}

TEST_CASE("link_between picks intra vs inter by node", "[hardware]") {
  const Topology topo = testutil::test_topology(2, 8);
  REQUIRE(link_between(topo, 0, 1).kind == LinkKind::intra_node);
  REQUIRE(link_between(topo, 0, 8).kind == LinkKind::inter_node);
  REQUIRE(link_between(topo, 7, 8).kind == LinkKind::inter_node);
  REQUIRE_THROWS_AS(link_between(topo, 0, 0), ConfigError);
  REQUIRE_THROWS_AS(link_between(topo, 0, 99), ConfigError);
}

TEST_CASE("link_between is symmetric", "[hardware]") {
  const Topology topo = testutil::test_topology(3, 4);
  std::mt19937 rng(5);
  std::uniform_int_distribution<int> dev(0, topo.device_count() - 1);
  for (int i = 0; i < 200; ++i) {
    const int a = dev(rng);
    int b = dev(rng);
    if (a == b) continue;
    REQUIRE(link_between(topo, a, b).kind == link_between(topo, b, a).kind);
  }
}

TEST_CASE("default PCIe pairs cover each device at most once", "[hardware]") {
  for (int gpus : {1, 2, 4, 7, 8, 16}) {
    const Topology topo = testutil::test_topology(1, gpus);
    std::vector<int> seen;
    for (const auto& [a, b] : topo.pcie_share_pairs) {
      REQUIRE(b == a + 1);
      REQUIRE(a % 2 == 0);
      seen.push_back(a);
      seen.push_back(b);
    }
    std::sort(seen.begin(), seen.end());
    REQUIRE(std::adjacent_find(seen.begin(), seen.end()) == seen.end());
  }
}

TEST_CASE("device peak ordering is validated", "[hardware]") {
  DeviceSpec bad = testutil::test_device();
  bad.peak_flops_by_dtype[1] = 1e12;  // int8 below fp16
  REQUIRE_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("intra bandwidth must dominate inter", "[hardware]") {
  const Topology good = testutil::test_topology(1, 2);
  LinkSpec slow_intra{1e9, 1e-6, LinkKind::intra_node};
  LinkSpec fast_inter{2e9, 1e-6, LinkKind::inter_node};
  REQUIRE_THROWS_AS(build_topology(1, 2, good.device, slow_intra, fast_inter,
                                   good.pcie, good.tiers),
                    ConfigError);
}
