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
#include <set>

#include "infersim/fusion.hpp"
#include "infersim/json_io.hpp"

using namespace infersim;

namespace {

OpNode simple_node(const std::string& name, OpKind kind, int tiles,
                   std::int64_t out_elems) {
  OpNode n;
  n.name = name;
  n.kind = kind;
  n.iter_dims = {{"token", tiles}};
  n.tileable_dims = {"token"};
  n.out_elems = out_elems;
  n.tile_count = tiles;
  return n;
}

// Brute-force traffic oracle: run the graph unfused (every intermediate hits
// global memory) and fused (only region boundaries do), subtract.
std::int64_t traffic_difference(const OpGraph& g,
                                const std::vector<FusionRegion>& regions) {
  std::vector<int> region_of(g.nodes.size());
  for (int r = 0; r < static_cast<int>(regions.size()); ++r)
    for (int id : regions[r].node_ids) region_of[id] = r;

  std::int64_t unfused = 0, fused = 0;
  for (int n = 0; n < static_cast<int>(g.nodes.size()); ++n) {
    const std::int64_t out = g.nodes[n].out_elems * g.dtype_bytes;
    unfused += out;  // every node writes its output
    bool writes_fused = g.out_edges(n).empty();  // graph outputs always do
    for (const auto* e : g.out_edges(n))
      if (region_of[e->to] != region_of[n]) writes_fused = true;
    if (writes_fused) fused += out;
  }
  for (const auto& e : g.edges) {
    const std::int64_t bytes = g.edge_bytes(e);
    unfused += bytes;  // every consumer reads from global memory
    if (region_of[e.from] != region_of[e.to]) fused += bytes;
  }
  return unfused - fused;
}

}  // namespace

TEST_CASE("one-to-one token tiling is fusable", "[fusion]") {
  OpGraph g;
  g.nodes.push_back(simple_node("layernorm_mean", OpKind::reduction, 4, 16));
  g.nodes.push_back(simple_node("subtract", OpKind::elementwise, 4, 16));
  GraphEdge e{0, 1, {}};
  for (int t = 0; t < 4; ++t) e.tile_dep[t] = {t};
  g.edges.push_back(e);
  REQUIRE(fusable(g, g.edges[0]));
}

TEST_CASE("full reduction over producer tiles is not fusable", "[fusion]") {
  OpGraph g;
  g.nodes.push_back(simple_node("gemm_out", OpKind::gemm, 4, 64));
  g.nodes.push_back(simple_node("reduce_hidden", OpKind::reduction, 1, 4));
  GraphEdge e{0, 1, {}};
  e.tile_dep[0] = {0, 1, 2, 3};
  g.edges.push_back(e);
  REQUIRE_FALSE(fusable(g, g.edges[0]));

  // Missing consumer tiles count as zero dependencies and block fusion too.
  GraphEdge partial{0, 1, {}};
  g.edges[0] = partial;
  REQUIRE_FALSE(fusable(g, g.edges[0]));
}

TEST_CASE("transpose with a permuted tile map is fusable", "[fusion]") {
  // 4x4 matrix in 2x2 tiles: consumer tile (i,j) reads producer tile (j,i).
  OpGraph g;
  g.nodes.push_back(simple_node("producer", OpKind::elementwise, 4, 16));
  g.nodes.push_back(simple_node("transpose", OpKind::transpose, 4, 16));
  GraphEdge e{0, 1, {}};
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) e.tile_dep[i * 2 + j] = {j * 2 + i};
  g.edges.push_back(e);
  REQUIRE(fusable(g, g.edges[0]));
}

TEST_CASE("small-batch partition yields the four regions in order",
          "[fusion]") {
  const OpGraph g = canonical_layer_graph(1600, 1);
  const auto regions = partition_layer(g, BatchRegime::small_batch);
  REQUIRE(regions.size() == 4);
  auto names = [&](const FusionRegion& r) {
    std::vector<std::string> out;
    for (int id : r.node_ids) out.push_back(g.nodes[id].name);
    return out;
  };
  REQUIRE(names(regions[0]) ==
          std::vector<std::string>{"input_layernorm", "qkv_gemm"});
  REQUIRE(names(regions[1]) ==
          std::vector<std::string>{"attn_transpose", "attention"});
  REQUIRE(names(regions[2]) ==
          std::vector<std::string>{"post_attn_layernorm", "intermediate_gemm"});
  REQUIRE(names(regions[3]) ==
          std::vector<std::string>{"bias_add", "residual_add"});
}

TEST_CASE("large-batch partition isolates every gemm", "[fusion]") {
  const OpGraph g = canonical_layer_graph(1600, 32);
  const auto regions = partition_layer(g, BatchRegime::large_batch);
  for (const auto& r : regions) {
    const bool has_gemm =
        std::any_of(r.node_ids.begin(), r.node_ids.end(), [&](int id) {
          return g.nodes[id].kind == OpKind::gemm;
        });
    if (has_gemm) REQUIRE(r.node_ids.size() == 1);
  }
  // Non-gemm runs still fuse.
  bool found_fused = false;
  for (const auto& r : regions) found_fused |= r.node_ids.size() > 1;
  REQUIRE(found_fused);
}

TEST_CASE("single-node graph forms one region", "[fusion]") {
  OpGraph g;
  g.nodes.push_back(simple_node("only", OpKind::elementwise, 2, 8));
  const auto regions = partition_layer(g, BatchRegime::small_batch);
  REQUIRE(regions.size() == 1);
  REQUIRE(regions[0].node_ids == std::vector<int>{0});
}

TEST_CASE("partitions cover the graph and keep internal edges legal",
          "[fusion]") {
  std::mt19937 rng(41);
  for (int trial = 0; trial < 50; ++trial) {
    // Random chain with a mix of one-to-one and many-to-one edges.
    OpGraph g;
    std::uniform_int_distribution<int> len(1, 12), tiles(1, 4), coin(0, 1);
    const int n = len(rng);
    for (int i = 0; i < n; ++i)
      g.nodes.push_back(simple_node("n" + std::to_string(i),
                                    coin(rng) ? OpKind::elementwise
                                              : OpKind::gemm,
                                    4, 32));
    for (int i = 0; i + 1 < n; ++i) {
      GraphEdge e{i, i + 1, {}};
      const bool one_to_one = coin(rng) == 1;
      for (int t = 0; t < 4; ++t) {
        if (one_to_one)
          e.tile_dep[t] = {t};
        else
          e.tile_dep[t] = {0, 1, 2, 3};
      }
      g.edges.push_back(e);
    }

    for (auto regime : {BatchRegime::small_batch, BatchRegime::large_batch}) {
      const auto regions = partition_layer(g, regime);
      std::set<int> seen;
      int prev_last = -1;
      for (const auto& r : regions) {
        for (int id : r.node_ids) {
          REQUIRE(seen.insert(id).second);  // exactly once
          REQUIRE(id > prev_last);          // topological order preserved
          prev_last = id;
        }
        // Every internal edge passes the legality predicate.
        for (const auto& e : g.edges) {
          const bool from_in = std::count(r.node_ids.begin(),
                                          r.node_ids.end(), e.from) > 0;
          const bool to_in =
              std::count(r.node_ids.begin(), r.node_ids.end(), e.to) > 0;
          if (from_in && to_in) REQUIRE(fusable(g, e));
        }
      }
      REQUIRE(seen.size() == g.nodes.size());

      if (regime == BatchRegime::small_batch) {
        // Greedy maximality on a chain: the boundary edge between two
        // consecutive regions must itself be non-fusable.
        for (std::size_t r = 0; r + 1 < regions.size(); ++r) {
          const int last = regions[r].node_ids.back();
          const int next = regions[r + 1].node_ids.front();
          for (const auto& e : g.edges)
            if (e.from == last && e.to == next) REQUIRE_FALSE(fusable(g, e));
        }
      }
    }
  }
}

TEST_CASE("fusion savings count launches and intermediate bytes", "[fusion]") {
  const OpGraph g = canonical_layer_graph(1600, 1);

  SECTION("one region over all nodes") {
    FusionRegion all;
    for (int i = 0; i < static_cast<int>(g.nodes.size()); ++i)
      all.node_ids.push_back(i);
    const auto s = fusion_savings({all}, g);
    REQUIRE(s.launches_saved == static_cast<std::int64_t>(g.nodes.size()) - 1);
    REQUIRE(s.bytes_saved == traffic_difference(g, {all}));
  }
  SECTION("all singletons save nothing") {
    std::vector<FusionRegion> singles;
    for (int i = 0; i < static_cast<int>(g.nodes.size()); ++i)
      singles.push_back(FusionRegion{{i}, 1});
    const auto s = fusion_savings(singles, g);
    REQUIRE(s.launches_saved == 0);
    REQUIRE(s.bytes_saved == 0);
  }
  SECTION("canonical small-batch partition matches the traffic oracle") {
    const auto regions = partition_layer(g, BatchRegime::small_batch);
    const auto s = fusion_savings(regions, g);
    REQUIRE(s.launches_saved == 4);
    REQUIRE(s.bytes_saved == traffic_difference(g, regions));
    // Chain of one-to-one internal edges: each saves one write + one read.
    std::int64_t expected = 0;
    for (const auto& e : g.edges) {
      bool internal = false;
      for (const auto& r : regions)
        if (std::count(r.node_ids.begin(), r.node_ids.end(), e.from) &&
            std::count(r.node_ids.begin(), r.node_ids.end(), e.to))
          internal = true;
      if (internal) expected += 2 * g.edge_bytes(e);
    }
    REQUIRE(s.bytes_saved == expected);
  }
}

TEST_CASE("misordered graphs are rejected", "[fusion]") {
  OpGraph g;
  g.nodes.push_back(simple_node("a", OpKind::elementwise, 2, 8));
  g.nodes.push_back(simple_node("b", OpKind::elementwise, 2, 8));
  g.edges.push_back(GraphEdge{1, 0, {{0, {0}}, {1, {1}}}});
  REQUIRE_THROWS_AS(partition_layer(g, BatchRegime::small_batch), ConfigError);
}

TEST_CASE("op graphs round-trip through JSON", "[fusion]") {
  const OpGraph g = canonical_layer_graph(512, 2);
  const Json j = graph_to_json(g);
  const OpGraph back = graph_from_json(j);
  REQUIRE(graph_to_json(back) == j);
  const auto before = partition_layer(g, BatchRegime::small_batch);
  const auto after = partition_layer(back, BatchRegime::small_batch);
  REQUIRE(before.size() == after.size());
  for (std::size_t i = 0; i < before.size(); ++i)
    REQUIRE(before[i].node_ids == after[i].node_ids);
}
