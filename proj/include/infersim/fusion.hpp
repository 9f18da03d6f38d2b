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
#include <map>
#include <set>
#include <string>
#include <vector>

#include "infersim/errors.hpp"

namespace infersim {

enum class OpKind { elementwise, reduction, transpose, gemm, quantize };

struct DimSpec {
  std::string name;
  std::int64_t size = 1;
};

// One operator of a layer graph. Tile indices are abstract integers in
// [0, tile_count); legality only depends on the tile dependency structure,
// never on physical tile sizes.
struct OpNode {
  std::string name;
  OpKind kind = OpKind::elementwise;
  std::vector<DimSpec> iter_dims;
  std::vector<std::string> tileable_dims;  // subset of iter_dims
  std::vector<std::string> reduce_dims;    // never tileable
  std::int64_t out_elems = 0;              // output tensor element count
  int tile_count = 1;

  void validate() const {
    auto has_dim = [&](const std::string& d) {
      return std::any_of(iter_dims.begin(), iter_dims.end(),
                         [&](const DimSpec& s) { return s.name == d; });
    };
    for (const auto& d : tileable_dims)
      if (!has_dim(d))
        throw ConfigError(name + ": tileable dim '" + d +
                          "' not in iter_dims");
    for (const auto& d : reduce_dims)
      for (const auto& t : tileable_dims)
        if (d == t)
          throw ConfigError(name + ": reduction dim '" + d +
                            "' cannot be tileable");
    if (tile_count < 1) throw ConfigError(name + ": tile_count must be >= 1");
    if (out_elems < 0) throw ConfigError(name + ": negative out_elems");
  }
};

// Producer -> consumer edge with per-consumer-tile dependency sets.
struct GraphEdge {
  int from = -1;
  int to = -1;
  std::map<int, std::set<int>> tile_dep;  // consumer tile -> producer tiles
};

struct OpGraph {
  std::vector<OpNode> nodes;   // must be listed in topological order
  std::vector<GraphEdge> edges;
  int dtype_bytes = 2;

  std::vector<const GraphEdge*> in_edges(int node) const {
    std::vector<const GraphEdge*> result;
    for (const auto& e : edges)
      if (e.to == node) result.push_back(&e);
    return result;
  }

  std::vector<const GraphEdge*> out_edges(int node) const {
    std::vector<const GraphEdge*> result;
    for (const auto& e : edges)
      if (e.from == node) result.push_back(&e);
    return result;
  }

  std::int64_t edge_bytes(const GraphEdge& e) const {
    return nodes[e.from].out_elems * dtype_bytes;
  }

  void validate() const {
    for (const auto& n : nodes) n.validate();
    for (const auto& e : edges) {
      if (e.from < 0 || e.to < 0 ||
          e.from >= static_cast<int>(nodes.size()) ||
          e.to >= static_cast<int>(nodes.size()))
        throw ConfigError("edge references unknown node");
      if (e.from >= e.to)
        throw ConfigError("nodes must be listed in topological order (edge " +
                          nodes[e.from].name + " -> " + nodes[e.to].name + ")");
      for (const auto& [c, producers] : e.tile_dep) {
        if (c < 0 || c >= nodes[e.to].tile_count)
          throw ConfigError("tile_dep consumer tile out of range");
        for (int p : producers)
          if (p < 0 || p >= nodes[e.from].tile_count)
            throw ConfigError("tile_dep producer tile out of range");
      }
    }
  }
};

struct FusionRegion {
  std::vector<int> node_ids;  // contiguous in topological order
  int launch_count = 1;
};

// Deep-Fusion legality: the edge is fusable iff every consumer tile depends
// on exactly one producer tile. Consumer tiles with no recorded producer
// count as cardinality zero and block fusion.
inline bool fusable(const OpGraph& graph, const GraphEdge& edge) {
  const OpNode& consumer = graph.nodes[edge.to];
  for (int tile = 0; tile < consumer.tile_count; ++tile) {
    auto it = edge.tile_dep.find(tile);
    if (it == edge.tile_dep.end() || it->second.size() != 1) return false;
  }
  return true;
}

enum class BatchRegime { small_batch, large_batch };

// Greedy maximal fusable runs over the topological node order. Ties are
// broken by extending the earlier region. In the large-batch regime every
// gemm runs unfused (library GeMM) and only the surrounding ops fuse.
inline std::vector<FusionRegion> partition_layer(const OpGraph& graph,
                                                 BatchRegime regime) {
  graph.validate();
  std::vector<FusionRegion> regions;
  for (int n = 0; n < static_cast<int>(graph.nodes.size()); ++n) {
    const bool gemm_apart = regime == BatchRegime::large_batch &&
                            graph.nodes[n].kind == OpKind::gemm;
    bool extended = false;
    if (!regions.empty() && !gemm_apart) {
      FusionRegion& cur = regions.back();
      const bool cur_has_gemm =
          regime == BatchRegime::large_batch &&
          std::any_of(cur.node_ids.begin(), cur.node_ids.end(), [&](int id) {
            return graph.nodes[id].kind == OpKind::gemm;
          });
      bool connected = false;
      bool all_fusable = true;
      for (const GraphEdge* e : graph.in_edges(n)) {
        const bool from_cur = std::find(cur.node_ids.begin(),
                                        cur.node_ids.end(),
                                        e->from) != cur.node_ids.end();
        if (!from_cur) continue;
        connected = true;
        if (!fusable(graph, *e)) all_fusable = false;
      }
      if (connected && all_fusable && !cur_has_gemm) {
        cur.node_ids.push_back(n);
        extended = true;
      }
    }
    if (!extended) regions.push_back(FusionRegion{{n}, 1});
  }
  return regions;
}

struct FusionSavings {
  std::int64_t launches_saved = 0;
  std::int64_t bytes_saved = 0;
};

// Savings relative to running every node as its own kernel: each edge kept
// inside a region saves the consumer's global-memory read, and a producer
// whose consumers all live in its region also saves its output write.
inline FusionSavings fusion_savings(const std::vector<FusionRegion>& regions,
                                    const OpGraph& graph) {
  std::vector<int> region_of(graph.nodes.size(), -1);
  std::int64_t covered = 0;
  for (int r = 0; r < static_cast<int>(regions.size()); ++r)
    for (int id : regions[r].node_ids) {
      if (id < 0 || id >= static_cast<int>(graph.nodes.size()) ||
          region_of[id] != -1)
        throw ConfigError("regions must partition the graph");
      region_of[id] = r;
      ++covered;
    }
  if (covered != static_cast<std::int64_t>(graph.nodes.size()))
    throw ConfigError("regions must cover every node");

  FusionSavings savings;
  savings.launches_saved =
      static_cast<std::int64_t>(graph.nodes.size()) - regions.size();
  for (const auto& e : graph.edges)
    if (region_of[e.from] == region_of[e.to])
      savings.bytes_saved += graph.edge_bytes(e);  // read saved
  for (int n = 0; n < static_cast<int>(graph.nodes.size()); ++n) {
    const auto outs = graph.out_edges(n);
    if (outs.empty()) continue;  // graph output, always written
    const bool internal_only =
        std::all_of(outs.begin(), outs.end(), [&](const GraphEdge* e) {
          return region_of[e->to] == region_of[n];
        });
    if (internal_only)
      savings.bytes_saved += graph.nodes[n].out_elems * graph.dtype_bytes;
  }
  return savings;
}

namespace detail {

// Tile grids of the canonical layer. The counts are structural only; byte
// sizes come from out_elems.
constexpr int kTokenTiles = 2;
constexpr int kHeadTiles = 2;
constexpr int kOutBlocks = 2;
constexpr int kInBlocks = 2;

inline int gemm_tile(int tt, int ob, int ib) {
  return (tt * kOutBlocks + ob) * kInBlocks + ib;
}
inline int head_tile(int tt, int ht) { return tt * kHeadTiles + ht; }
inline int col_tile(int tt, int ob) { return tt * kOutBlocks + ob; }

}  // namespace detail

// The transformer-layer operator graph used for the small/large batch
// partition. Micro-op decomposition (an assumption; the reference figure is
// not itemized): layernorm feeds the QKV GeMM, whose 2D-tiled output is
// partial sums, so the following transpose cannot fuse across the pending
// cross-tile reduction; attention reduces per head; the post-attention
// layernorm feeds the intermediate GeMM (input broadcast across SMs makes
// the LN -> GeMM edge one-to-one at tile level); bias and residual close the
// layer. Tokens-per-pass = batch (one token per sequence, generation shape).
inline OpGraph canonical_layer_graph(std::int64_t hidden, std::int64_t batch,
                                     int dtype_bytes = 2) {
  using namespace detail;
  if (hidden < 1 || batch < 1)
    throw ConfigError("canonical layer requires positive hidden and batch");
  OpGraph g;
  g.dtype_bytes = dtype_bytes;

  auto add = [&](const std::string& name, OpKind kind,
                 std::vector<DimSpec> dims, std::vector<std::string> tileable,
                 std::vector<std::string> reduce, std::int64_t out_elems,
                 int tiles) {
    g.nodes.push_back(OpNode{name, kind, std::move(dims), std::move(tileable),
                             std::move(reduce), out_elems, tiles});
    return static_cast<int>(g.nodes.size()) - 1;
  };

  const DimSpec tok{"token", batch};
  const DimSpec hid{"hidden", hidden};
  const int ln_tiles = kTokenTiles;
  const int gemm_tiles = kTokenTiles * kOutBlocks * kInBlocks;
  const int attn_tiles = kTokenTiles * kHeadTiles;
  const int col_tiles = kTokenTiles * kOutBlocks;

  const int ln1 = add("input_layernorm", OpKind::reduction, {tok, hid},
                      {"token"}, {"hidden"}, batch * hidden, ln_tiles);
  const int qkv = add("qkv_gemm", OpKind::gemm,
                      {tok, {"qkv_out", 3 * hidden}, hid}, {"token", "qkv_out"},
                      {"hidden"}, batch * 3 * hidden, gemm_tiles);
  const int tr = add("attn_transpose", OpKind::transpose,
                     {tok, {"qkv_out", 3 * hidden}}, {"token", "qkv_out"}, {},
                     batch * 3 * hidden, attn_tiles);
  const int attn = add("attention", OpKind::reduction,
                       {tok, {"head", kHeadTiles}, {"context", batch}},
                       {"token", "head"}, {"context"}, batch * hidden,
                       attn_tiles);
  const int ln2 = add("post_attn_layernorm", OpKind::reduction, {tok, hid},
                      {"token"}, {"hidden"}, batch * hidden, ln_tiles);
  const int ff = add("intermediate_gemm", OpKind::gemm,
                     {tok, {"ff_out", 4 * hidden}, hid}, {"token", "ff_out"},
                     {"hidden"}, batch * 4 * hidden, gemm_tiles);
  const int bias = add("bias_add", OpKind::elementwise,
                       {tok, {"ff_out", 4 * hidden}}, {"token", "ff_out"}, {},
                       batch * 4 * hidden, col_tiles);
  const int res = add("residual_add", OpKind::elementwise,
                      {tok, {"ff_out", 4 * hidden}}, {"token", "ff_out"}, {},
                      batch * 4 * hidden, col_tiles);

  g.edges.reserve(7);
  auto edge = [&](int from, int to) {
    g.edges.push_back(GraphEdge{from, to, {}});
    return &g.edges.back();
  };

  // ln1 -> qkv: each GeMM tile reads the (broadcast) normalized token.
  {
    auto* e = edge(ln1, qkv);
    for (int tt = 0; tt < kTokenTiles; ++tt)
      for (int ob = 0; ob < kOutBlocks; ++ob)
        for (int ib = 0; ib < kInBlocks; ++ib)
          e->tile_dep[gemm_tile(tt, ob, ib)] = {tt};
  }
  // qkv -> transpose: a head tile needs the reduced GeMM output, i.e. all
  // input-dim partials of its column block.
  {
    auto* e = edge(qkv, tr);
    for (int tt = 0; tt < kTokenTiles; ++tt)
      for (int ht = 0; ht < kHeadTiles; ++ht) {
        std::set<int> deps;
        for (int ib = 0; ib < kInBlocks; ++ib)
          deps.insert(gemm_tile(tt, ht, ib));
        e->tile_dep[head_tile(tt, ht)] = deps;
      }
  }
  // transpose -> attention: one-to-one permuted tile map.
  {
    auto* e = edge(tr, attn);
    for (int t = 0; t < attn_tiles; ++t) e->tile_dep[t] = {t};
  }
  // attention -> ln2: a token's layernorm needs every head of that token.
  {
    auto* e = edge(attn, ln2);
    for (int tt = 0; tt < kTokenTiles; ++tt) {
      std::set<int> deps;
      for (int ht = 0; ht < kHeadTiles; ++ht) deps.insert(head_tile(tt, ht));
      e->tile_dep[tt] = deps;
    }
  }
  // ln2 -> ff: broadcast input, same shape as ln1 -> qkv.
  {
    auto* e = edge(ln2, ff);
    for (int tt = 0; tt < kTokenTiles; ++tt)
      for (int ob = 0; ob < kOutBlocks; ++ob)
        for (int ib = 0; ib < kInBlocks; ++ib)
          e->tile_dep[gemm_tile(tt, ob, ib)] = {tt};
  }
  // ff -> bias: bias waits on the cross-tile reduction of the partials.
  {
    auto* e = edge(ff, bias);
    for (int tt = 0; tt < kTokenTiles; ++tt)
      for (int ob = 0; ob < kOutBlocks; ++ob) {
        std::set<int> deps;
        for (int ib = 0; ib < kInBlocks; ++ib)
          deps.insert(gemm_tile(tt, ob, ib));
        e->tile_dep[col_tile(tt, ob)] = deps;
      }
  }
  // bias -> residual: elementwise, one-to-one.
  {
    auto* e = edge(bias, res);
    for (int t = 0; t < col_tiles; ++t) e->tile_dep[t] = {t};
  }

  g.validate();
  return g;
}

}  // namespace infersim
