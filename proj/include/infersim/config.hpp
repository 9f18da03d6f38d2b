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

#include <cstdlib>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>

#include "infersim/hardware.hpp"
#include "infersim/model.hpp"
#include "infersim/toml_lite.hpp"

namespace infersim {

// Fixture directory: INFERSIM_FIXTURES overrides the ./fixtures default.
inline std::string fixtures_dir() {
  if (const char* env = std::getenv("INFERSIM_FIXTURES")) return env;
  return "fixtures";
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Optional parallelism hints carried by the sparse model presets.
struct GridHints {
  int mp_degree = 1;
  int ep_degree = 1;
  int expert_slicing = 1;
  int gpus = 1;
};

struct ModelFile {
  ModelConfig config;
  std::optional<double> params_reported;  // the published "# params" value
  std::optional<GridHints> grid;
};

inline ModelFile parse_model_file(const toml::Table& t) {
  ModelFile file;
  ModelConfig& cfg = file.config;
  cfg.name = t.get_string_or("name", "");
  cfg.hidden_dim = t.get_int("hidden_dim");
  cfg.num_layers = t.get_int("num_layers");
  cfg.num_heads = t.get_int("num_heads");
  cfg.vocab_size = t.get_int_or("vocab_size", 50257);
  cfg.max_seq = t.get_int_or("max_seq", 2048);
  cfg.dtype_bytes = static_cast<int>(t.get_int_or("dtype_bytes", 2));
  if (t.has("moe.num_experts")) {
    MoEConfig moe;
    moe.num_experts = t.get_int("moe.num_experts");
    moe.expert_interval = t.get_int_or("moe.expert_interval", 2);
    moe.capacity_factor = t.get_double_or("moe.capacity_factor", 1.0);
    moe.top_k = static_cast<int>(t.get_int_or("moe.top_k", 1));
    cfg.moe = moe;
  }
  cfg.validate();
  if (t.has("params_reported"))
    file.params_reported = t.get_double("params_reported");
  if (t.has("parallelism.mp_degree")) {
    GridHints grid;
    grid.mp_degree = static_cast<int>(t.get_int("parallelism.mp_degree"));
    grid.ep_degree =
        static_cast<int>(t.get_int_or("parallelism.ep_degree", 1));
    grid.expert_slicing =
        static_cast<int>(t.get_int_or("parallelism.expert_slicing", 1));
    grid.gpus = static_cast<int>(t.get_int_or("parallelism.gpus", 1));
    file.grid = grid;
  }
  return file;
}

inline ModelFile load_model_file(const std::string& path) {
  return parse_model_file(toml::parse(read_file(path)));
}

inline ModelConfig load_model_config(const std::string& path) {
  return load_model_file(path).config;
}

inline Topology parse_topology(const toml::Table& t) {
  DeviceSpec device;
  device.mem_bytes = static_cast<std::int64_t>(t.get_double("device.mem_bytes"));
  device.mem_bw = t.get_double("device.mem_bw");
  device.sm_count = static_cast<int>(t.get_int("device.sm_count"));
  device.kernel_launch_overhead =
      t.get_double_or("device.kernel_launch_overhead", 5e-6);
  if (t.has("device.peak_flops.fp32"))
    device.peak_flops_by_dtype[4] = t.get_double("device.peak_flops.fp32");
  if (t.has("device.peak_flops.fp16"))
    device.peak_flops_by_dtype[2] = t.get_double("device.peak_flops.fp16");
  if (t.has("device.peak_flops.int8"))
    device.peak_flops_by_dtype[1] = t.get_double("device.peak_flops.int8");

  auto link = [&](const std::string& name, LinkKind kind) {
    LinkSpec spec;
    spec.bandwidth = t.get_double_or("links." + name + ".bandwidth", 0.0);
    spec.latency = t.get_double_or("links." + name + ".latency", 0.0);
    spec.kind = kind;
    return spec;
  };

  std::map<MemTier, TierSpec> tiers;
  if (t.has("tiers.dram.capacity"))
    tiers[MemTier::dram] = TierSpec{
        static_cast<std::int64_t>(t.get_double("tiers.dram.capacity")),
        t.get_double("tiers.dram.bandwidth")};
  if (t.has("tiers.nvme.capacity"))
    tiers[MemTier::nvme] = TierSpec{
        static_cast<std::int64_t>(t.get_double("tiers.nvme.capacity")),
        t.get_double("tiers.nvme.bandwidth")};

  Topology topo = build_topology(
      static_cast<int>(t.get_int("num_nodes")),
      static_cast<int>(t.get_int("gpus_per_node")), device,
      link("intra", LinkKind::intra_node), link("inter", LinkKind::inter_node),
      link("pcie", LinkKind::pcie), std::move(tiers));
  topo.name = t.get_string_or("name", "");
  if (t.has("pcie_share_pairs")) {
    const auto& flat = t.at("pcie_share_pairs").as_number_array();
    if (flat.size() % 2 != 0)
      throw ConfigError("pcie_share_pairs must hold an even count of ids");
    topo.pcie_share_pairs.clear();
    for (std::size_t i = 0; i + 1 < flat.size(); i += 2)
      topo.pcie_share_pairs.emplace_back(static_cast<int>(flat[i]),
                                         static_cast<int>(flat[i + 1]));
    topo.validate();
  }
  return topo;
}

inline Topology load_topology(const std::string& path) {
  return parse_topology(toml::parse(read_file(path)));
}

}  // namespace infersim
