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

#include <string>

#include <json.hpp>

#include "infersim/fusion.hpp"
#include "infersim/pipeline.hpp"

namespace infersim {

using Json = nlohmann::ordered_json;

inline std::string op_kind_name(OpKind kind) {
  switch (kind) {
    case OpKind::elementwise: return "elementwise";
    case OpKind::reduction: return "reduction";
    case OpKind::transpose: return "transpose";
    case OpKind::gemm: return "gemm";
    case OpKind::quantize: return "quantize";
  }
  throw ConfigError("unknown op kind");
}

inline OpKind op_kind_from(const std::string& name) {
  if (name == "elementwise") return OpKind::elementwise;
  if (name == "reduction") return OpKind::reduction;
  if (name == "transpose") return OpKind::transpose;
  if (name == "gemm") return OpKind::gemm;
  if (name == "quantize") return OpKind::quantize;
  throw ConfigError("unknown op kind '" + name + "'");
}

// Schema: nodes with dims, edges with sparse [consumer, [producers...]]
// tile dependency pairs.
inline Json graph_to_json(const OpGraph& graph) {
  Json j;
  j["dtype_bytes"] = graph.dtype_bytes;
  j["nodes"] = Json::array();
  for (const auto& n : graph.nodes) {
    Json node;
    node["name"] = n.name;
    node["kind"] = op_kind_name(n.kind);
    node["iter_dims"] = Json::array();
    for (const auto& d : n.iter_dims)
      node["iter_dims"].push_back(Json{{"name", d.name}, {"size", d.size}});
    node["tileable_dims"] = n.tileable_dims;
    node["reduce_dims"] = n.reduce_dims;
    node["out_elems"] = n.out_elems;
    node["tile_count"] = n.tile_count;
    j["nodes"].push_back(node);
  }
  j["edges"] = Json::array();
  for (const auto& e : graph.edges) {
    Json edge;
    edge["from"] = e.from;
    edge["to"] = e.to;
    edge["tile_dep"] = Json::array();
    for (const auto& [c, producers] : e.tile_dep) {
      Json pair = Json::array();
      pair.push_back(c);
      pair.push_back(producers);
      edge["tile_dep"].push_back(pair);
    }
    j["edges"].push_back(edge);
  }
  return j;
}

inline OpGraph graph_from_json(const Json& j) {
  OpGraph graph;
  try {
    graph.dtype_bytes = j.value("dtype_bytes", 2);
    for (const auto& node : j.at("nodes")) {
      OpNode n;
      n.name = node.at("name").get<std::string>();
      n.kind = op_kind_from(node.at("kind").get<std::string>());
      for (const auto& d : node.value("iter_dims", Json::array()))
        n.iter_dims.push_back(DimSpec{d.at("name").get<std::string>(),
                                      d.at("size").get<std::int64_t>()});
      n.tileable_dims =
          node.value("tileable_dims", std::vector<std::string>{});
      n.reduce_dims = node.value("reduce_dims", std::vector<std::string>{});
      n.out_elems = node.value("out_elems", std::int64_t{0});
      n.tile_count = node.value("tile_count", 1);
      graph.nodes.push_back(std::move(n));
    }
    for (const auto& edge : j.at("edges")) {
      GraphEdge e;
      e.from = edge.at("from").get<int>();
      e.to = edge.at("to").get<int>();
      for (const auto& pair : edge.value("tile_dep", Json::array())) {
        const int consumer = pair.at(0).get<int>();
        for (const auto& p : pair.at(1))
          e.tile_dep[consumer].insert(p.get<int>());
      }
      graph.edges.push_back(std::move(e));
    }
  } catch (const nlohmann::json::exception& ex) {
    throw ConfigError(std::string("bad graph JSON: ") + ex.what());
  }
  graph.validate();
  return graph;
}

inline const char* phase_name(Phase phase) {
  return phase == Phase::prompt ? "prompt" : "generation";
}

inline Json timeline_to_json(const SimTimeline& timeline) {
  Json j;
  j["stages"] = timeline.stages;
  j["total_latency"] = timeline.total_latency;
  j["bubble_time"] = timeline.bubble_time;
  j["bubble_fraction"] = timeline.bubble_fraction;
  j["prompt_latency"] = timeline.prompt_latency;
  j["generation_latency"] = timeline.generation_latency;
  j["events"] = Json::array();
  for (const auto& e : timeline.events) {
    Json event;
    event["stage"] = e.stage;
    event["start"] = e.start;
    event["duration"] = e.duration;
    event["micro_batch"] = e.micro_batch;
    event["token"] = e.token_index;
    event["phase"] = phase_name(e.phase);
    j["events"].push_back(event);
  }
  return j;
}

}  // namespace infersim
