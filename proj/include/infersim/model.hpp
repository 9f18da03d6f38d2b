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
#include <optional>
#include <string>

#include "infersim/errors.hpp"

namespace infersim {

// Sparse (mixture-of-experts) extension of a dense decoder config.
// An expert layer replaces the FFN of every `expert_interval`-th layer.
struct MoEConfig {
  std::int64_t num_experts = 1;
  std::int64_t expert_interval = 2;
  double capacity_factor = 1.0;
  int top_k = 1;

  void validate() const {
    if (num_experts < 1) throw ConfigError("num_experts must be >= 1");
    if (expert_interval < 1) throw ConfigError("expert_interval must be >= 1");
    if (capacity_factor <= 0.0) throw ConfigError("capacity_factor must be > 0");
    if (top_k != 1) throw ConfigError("only top-1 gating is supported");
  }
};

struct ModelConfig {
  std::string name;
  std::int64_t hidden_dim = 0;
  std::int64_t num_layers = 0;
  std::int64_t num_heads = 1;
  std::int64_t vocab_size = 50257;
  std::int64_t max_seq = 2048;
  int dtype_bytes = 2;  // 1 = INT8, 2 = FP16, 4 = FP32
  std::optional<MoEConfig> moe;

  void validate() const {
    if (hidden_dim < 1) throw ConfigError("hidden_dim must be positive");
    if (num_layers < 0) throw ConfigError("num_layers must be non-negative");
    if (num_heads < 1) throw ConfigError("num_heads must be positive");
    if (vocab_size < 0) throw ConfigError("vocab_size must be non-negative");
    if (max_seq < 1) throw ConfigError("max_seq must be positive");
    if (dtype_bytes != 1 && dtype_bytes != 2 && dtype_bytes != 4)
      throw ConfigError("dtype_bytes must be one of {1, 2, 4}");
    if (hidden_dim % num_heads != 0)
      throw ConfigError("hidden_dim must be divisible by num_heads");
    if (moe) moe->validate();
  }
};

// One inference request shape: B sequences, each with a prompt and a number
// of generated tokens.
struct SeqWorkload {
  std::int64_t batch = 1;
  std::int64_t prompt_len = 0;
  std::int64_t gen_tokens = 0;

  void validate(const ModelConfig& cfg) const {
    if (batch < 0) throw ConfigError("batch must be non-negative");
    if (prompt_len < 0 || gen_tokens < 0)
      throw ConfigError("token counts must be non-negative");
    if (prompt_len + gen_tokens > cfg.max_seq)
      throw ConfigError("prompt_len + gen_tokens exceeds max_seq");
  }
};

enum class Phase { prompt, generation };

// Layers whose FFN is an expert layer: indices l with l % k == k-1.
inline std::int64_t expert_layer_count(const ModelConfig& cfg) {
  if (!cfg.moe) return 0;
  return cfg.num_layers / cfg.moe->expert_interval;
}

// Per layer: 12*h^2 for QKV + attention projection + the two FFN matrices
// (biases folded into the h^2 terms), plus one tied vocab embedding.
// Each expert layer carries (E-1) extra copies of the 8*h^2 FFN block.
inline std::int64_t param_count(const ModelConfig& cfg) {
  cfg.validate();
  const std::int64_t h = cfg.hidden_dim;
  std::int64_t count = 12 * h * h * cfg.num_layers + cfg.vocab_size * h;
  if (cfg.moe && cfg.moe->num_experts > 1) {
    count += (cfg.moe->num_experts - 1) * 8 * h * h * expert_layer_count(cfg);
  }
  return count;
}

inline std::int64_t param_bytes(const ModelConfig& cfg) {
  return param_count(cfg) * cfg.dtype_bytes;
}

// Total expert parameters (all E copies of the FFN in expert layers).
inline std::int64_t expert_param_count(const ModelConfig& cfg) {
  if (!cfg.moe) return 0;
  const std::int64_t h = cfg.hidden_dim;
  return cfg.moe->num_experts * 8 * h * h * expert_layer_count(cfg);
}

// FLOPs for one transformer layer.
//
// Prompt phase processes every prompt token: 2 * 12h^2 multiply-adds per
// token for the linear parts plus the 4*B*s^2*h attention term.
// Generation processes one token per sequence; its attention term runs over
// the running context (prompt_len + gen_tokens already cached), so
// layer_flops(generation) equals layer_flops(prompt) at prompt_len = 1.
inline double layer_flops(const ModelConfig& cfg, const SeqWorkload& w,
                          Phase phase) {
  cfg.validate();
  const double h = static_cast<double>(cfg.hidden_dim);
  const double b = static_cast<double>(w.batch);
  if (phase == Phase::prompt) {
    const double s = static_cast<double>(w.prompt_len);
    return 24.0 * h * h * b * s + 4.0 * b * s * s * h;
  }
  const double ctx = static_cast<double>(w.prompt_len + w.gen_tokens);
  return 24.0 * h * h * b + 4.0 * b * ctx * h;
}

// Cached keys and values for every layer over the full context.
inline std::int64_t kv_cache_bytes(const ModelConfig& cfg,
                                   const SeqWorkload& w) {
  cfg.validate();
  return 2 * cfg.num_layers * w.batch * (w.prompt_len + w.gen_tokens) *
         cfg.hidden_dim * cfg.dtype_bytes;
}

}  // namespace infersim
