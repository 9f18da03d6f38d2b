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
#include <vector>

#include "infersim/errors.hpp"
#include "infersim/hardware.hpp"

namespace infersim {

// Skinny GeMM: out = W (N x K) * x^T for a batch of B token vectors.
struct GemmShape {
  std::int64_t out_dim = 0;  // N
  std::int64_t in_dim = 0;   // K
  std::int64_t batch = 1;    // B tokens
  int dtype_bytes = 2;

  void validate() const {
    if (out_dim < 1 || in_dim < 1 || batch < 1)
      throw ConfigError("gemm shape dims must be positive");
    if (dtype_bytes != 1 && dtype_bytes != 2 && dtype_bytes != 4)
      throw ConfigError("dtype_bytes must be one of {1, 2, 4}");
  }
};

enum class TilingMode { oneD, twoD };

// One warp's lanes cover one output tile.
constexpr std::int64_t kOutputTileWidth = 32;

struct GemmSchedule {
  TilingMode mode = TilingMode::oneD;
  std::int64_t output_tiles = 1;
  std::int64_t input_tiles = 1;  // 1 in oneD mode
  int warps_per_block = 1;
  int kernel_count = 1;  // 2 in twoD mode (separate cross-tile reduction)
  int pack_M = 1;        // input rows interleaved per column, {1, 2, 4}
};

// Elements per thread that fill a 128-byte cache line across a 32-lane warp.
inline int cache_line_pack(int dtype_bytes) {
  const int m = 128 / (32 * dtype_bytes);
  return std::clamp(m, 1, 4);
}

// Output-dim tiling when N alone yields enough parallel tiles to cover the
// SMs; otherwise the input dim is tiled too and the reduction across input
// tiles runs as a second kernel.
inline GemmSchedule derive_schedule(const GemmShape& shape,
                                    const DeviceSpec& device) {
  shape.validate();
  GemmSchedule s;
  s.pack_M = cache_line_pack(shape.dtype_bytes);
  s.output_tiles = (shape.out_dim + kOutputTileWidth - 1) / kOutputTileWidth;
  const std::int64_t packed_groups =
      (shape.in_dim + s.pack_M - 1) / s.pack_M;  // K rows in pack_M groups
  s.warps_per_block = static_cast<int>(
      std::clamp<std::int64_t>(packed_groups / kOutputTileWidth, 1, 8));
  if (s.output_tiles >= device.sm_count) {
    s.mode = TilingMode::oneD;
    s.input_tiles = 1;
    s.kernel_count = 1;
    return s;
  }
  // Smallest power of two making total tiles cover the SMs, bounded by the
  // number of packed input groups.
  std::int64_t tiles = 1;
  while (s.output_tiles * tiles < device.sm_count && tiles * 2 <= packed_groups)
    tiles *= 2;
  if (tiles == 1) {  // K too small to split; stay single-kernel
    s.mode = TilingMode::oneD;
    s.input_tiles = 1;
    s.kernel_count = 1;
    return s;
  }
  s.mode = TilingMode::twoD;
  s.input_tiles = tiles;
  s.kernel_count = 2;
  return s;
}

// Weights relaid out so that pack_M consecutive input rows of each output
// column are contiguous: flat((n, k)) = (k / M) * (N * M) + n * M + (k % M).
// K is zero-padded up to a multiple of pack_M; the pad is recorded.
struct PackedWeights {
  std::vector<double> data;
  GemmShape shape;
  int pack_M = 1;
  std::int64_t padded_in_dim = 0;
};

inline std::int64_t packed_index(std::int64_t n, std::int64_t k,
                                 std::int64_t out_dim, int pack_M) {
  return (k / pack_M) * (out_dim * pack_M) + n * pack_M + (k % pack_M);
}

inline PackedWeights pack_weights(const std::vector<double>& matrix,
                                  const GemmShape& shape, int pack_M) {
  shape.validate();
  if (pack_M != 1 && pack_M != 2 && pack_M != 4)
    throw ConfigError("pack_M must be one of {1, 2, 4}");
  if (static_cast<std::int64_t>(matrix.size()) != shape.out_dim * shape.in_dim)
    throw ConfigError("weight matrix size does not match shape");
  PackedWeights packed;
  packed.shape = shape;
  packed.pack_M = pack_M;
  packed.padded_in_dim = (shape.in_dim + pack_M - 1) / pack_M * pack_M;
  packed.data.assign(shape.out_dim * packed.padded_in_dim, 0.0);
  for (std::int64_t n = 0; n < shape.out_dim; ++n)
    for (std::int64_t k = 0; k < shape.in_dim; ++k)
      packed.data[packed_index(n, k, shape.out_dim, pack_M)] =
          matrix[n * shape.in_dim + k];
  return packed;
}

inline std::vector<double> unpack_weights(const PackedWeights& packed) {
  std::vector<double> matrix(packed.shape.out_dim * packed.shape.in_dim);
  for (std::int64_t n = 0; n < packed.shape.out_dim; ++n)
    for (std::int64_t k = 0; k < packed.shape.in_dim; ++k)
      matrix[n * packed.shape.in_dim + k] =
          packed.data[packed_index(n, k, packed.shape.out_dim, packed.pack_M)];
  return matrix;
}

// Functional reference of the scheduled GeMM, emulated sequentially:
// each warp accumulates a partial dot product over its slice of the input
// tile reading pack_M packed elements at a time, a shared-memory transpose
// groups same-output partials, one warp-style pass reduces them, and in twoD
// mode a second phase merges the per-input-tile partials. Accumulation is in
// double precision throughout.
inline std::vector<double> exec_reference(const PackedWeights& packed,
                                          const std::vector<double>& x,
                                          std::int64_t batch,
                                          const GemmSchedule& schedule) {
  const std::int64_t n_dim = packed.shape.out_dim;
  const std::int64_t k_dim = packed.shape.in_dim;
  if (batch < 1 || static_cast<std::int64_t>(x.size()) != batch * k_dim)
    throw ConfigError("input shape mismatch");
  const std::int64_t kp = packed.padded_in_dim;
  const std::int64_t input_tiles =
      schedule.mode == TilingMode::twoD ? schedule.input_tiles : 1;
  const std::int64_t tile_k = (kp + input_tiles - 1) / input_tiles;
  const int warps = std::max(1, schedule.warps_per_block);

  std::vector<double> out(batch * n_dim, 0.0);
  std::vector<double> tile_partials(input_tiles);
  std::vector<double> warp_partials(warps);
  for (std::int64_t b = 0; b < batch; ++b) {
    for (std::int64_t n = 0; n < n_dim; ++n) {
      for (std::int64_t it = 0; it < input_tiles; ++it) {
        const std::int64_t k_begin = it * tile_k;
        const std::int64_t k_end = std::min(kp, k_begin + tile_k);
        // Slice this input tile across the block's warps.
        const std::int64_t span = k_end - k_begin;
        const std::int64_t per_warp = (span + warps - 1) / warps;
        for (int w = 0; w < warps; ++w) {
          const std::int64_t wk_begin = k_begin + w * per_warp;
          const std::int64_t wk_end = std::min(k_end, wk_begin + per_warp);
          double acc = 0.0;
          for (std::int64_t k = wk_begin; k < wk_end;
               k += schedule.pack_M) {
            for (int m = 0; m < schedule.pack_M && k + m < wk_end; ++m) {
              const std::int64_t kk = k + m;
              const double w_elem =
                  packed.data[packed_index(n, kk, n_dim, packed.pack_M)];
              const double x_elem = kk < k_dim ? x[b * k_dim + kk] : 0.0;
              acc += w_elem * x_elem;
            }
          }
          warp_partials[w] = acc;
        }
        // Transpose + cooperative reduction: same-output partials are now
        // contiguous; one pass sums them.
        double tile_sum = 0.0;
        for (int w = 0; w < warps; ++w) tile_sum += warp_partials[w];
        tile_partials[it] = tile_sum;
      }
      // Second kernel in twoD mode: reduce across input tiles.
      double result = 0.0;
      for (std::int64_t it = 0; it < input_tiles; ++it)
        result += tile_partials[it];
      out[b * n_dim + n] = result;
    }
  }
  return out;
}

}  // namespace infersim
