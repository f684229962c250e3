// Copyright 2026 The poprec Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

// Popularity-dynamics transformer. Items enter only through their dynamics
// windows, so the parameter set has no per-item or per-user table.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "poprec/common.hpp"
#include "poprec/encoders.hpp"
#include "poprec/ingest.hpp"
#include "poprec/popdyn.hpp"
#include "poprec/tensor.hpp"

namespace poprec::model {

struct ModelConfig {
  std::size_t d = 50;
  std::size_t heads = 2;
  std::size_t layers = 2;
  std::size_t max_len = 200;
  std::size_t k = encoders::kPercentileDim;
  std::size_t m = 12;
  std::size_t n = 4;
  double dropout = 0.3;
  double gamma = 0.5;
  double ln_eps = 1e-8;

  std::size_t window_width() const { return k * (m + n); }
  std::size_t head_dim() const { return d / heads; }
  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

template <class T>
struct LayerParams {
  nn::Tensor<T> attn_norm_alpha, attn_norm_beta;
  nn::Tensor<T> wq, wk, wv, wo;  // d x d; head i owns columns [i*d/h, (i+1)*d/h)
  nn::Tensor<T> ffn_norm_alpha, ffn_norm_beta;
  nn::Tensor<T> w1, b1, w2, b2;
};

template <class T>
struct ModelParams {
  ModelConfig cfg;
  nn::Tensor<T> w_pop;  // d x k(m+n), no bias
  std::vector<LayerParams<T>> layers;
  nn::Tensor<T> final_norm_alpha, final_norm_beta;

  // Uniform(+-1/sqrt(fan_in)) weights, zero biases, unit/zero norms.
  static ModelParams init(const ModelConfig& cfg, Rng& rng);

  // Declared (checkpoint) order.
  std::vector<std::pair<std::string, nn::Tensor<T>>> named() const;
  std::vector<nn::Tensor<T>> tensors() const;
  std::size_t value_count() const;
  // SHA-256 over the float32 little-endian image of all tensors.
  std::string digest() const;

  template <class U>
  ModelParams<U> cast(bool requires_grad = true) const;
};

// Closed form: d*k(m+n) + layers * (4d^2 + 2d^2 + 2d + 4d) + 2d.
std::size_t count_params(const ModelConfig& cfg);

// Fixed encodings shared by every sequence of one configuration.
class Encodings {
 public:
  explicit Encodings(const ModelConfig& cfg) : table_(encoders::build_sinusoid_table(cfg.max_len, cfg.d)) {}
  const encoders::SinusoidTable& table() const { return table_; }

 private:
  encoders::SinusoidTable table_;
};

// N x k(m+n) matrix of windows for (item, query time) pairs.
template <class T>
nn::Tensor<T> window_matrix(const popdyn::PopularityTable& pt, std::span<const ingest::ItemIndex> items,
                            std::span<const std::int64_t> times, std::int64_t offset);

// e = W_p x for each row of `windows`.
template <class T>
nn::Tensor<T> encode_items(const nn::Tensor<T>& windows, const ModelParams<T>& params);

// Rows T[rank_l] + P[l] for positions [first, first + count).
template <class T>
nn::Tensor<T> time_position_rows(const Encodings& enc, std::span<const std::size_t> ranks, std::size_t first,
                                 std::size_t count);

// L x d input: row l = e_l + T[rank_l] + P[l] on valid rows, zero on padding.
// `item_embeddings` holds one row per valid position.
template <class T>
nn::Tensor<T> assemble_input(const ingest::UserSequence& seq, const nn::Tensor<T>& item_embeddings,
                             std::span<const std::size_t> ranks, const Encodings& enc);

// Runs the transformer stack over all rows of `x` under `attn_mask`
// (rows x rows, query-major).
template <class T>
nn::Tensor<T> forward_rows(const nn::Tensor<T>& x, const nn::Mask& attn_mask, const ModelParams<T>& params,
                           bool training, Rng* rng);

// L x d outputs. Position i attends to valid j <= i; padding rows are zero.
// When the valid positions form a suffix only that suffix is computed.
template <class T>
nn::Tensor<T> forward(const nn::Tensor<T>& input, std::span<const std::uint8_t> valid, const ModelParams<T>& params,
                      bool training, Rng* rng);

// Same computation without suffix cropping; the reference for `forward`.
template <class T>
nn::Tensor<T> forward_uncropped(const nn::Tensor<T>& input, std::span<const std::uint8_t> valid,
                                const ModelParams<T>& params, bool training, Rng* rng);

// Inner product of a user embedding and an item embedding.
template <class T>
T score(std::span<const T> user, std::span<const T> item);

// Inference helper: q_u for a history scored at its last valid position.
// Returns an empty vector for an empty history.
template <class T>
std::vector<T> user_embedding(const ModelParams<T>& params, const Encodings& enc, const popdyn::PopularityTable& pt,
                              std::span<const ingest::Event> history, std::int64_t offset);

struct CheckpointMeta {
  ModelConfig model;
  popdyn::PopularityConfig pop;
  std::int64_t offset = 1;
  std::uint64_t seed = 0;
  std::string git_describe;
  std::string dataset_fingerprint;
  double learning_rate = 0.0;
  std::size_t epochs = 0;
};

void save_checkpoint(const std::string& path, const ModelParams<float>& params, const CheckpointMeta& meta);
std::vector<std::uint8_t> encode_checkpoint(const ModelParams<float>& params, const CheckpointMeta& meta);
std::pair<ModelParams<float>, CheckpointMeta> load_checkpoint(const std::string& path);
std::pair<ModelParams<float>, CheckpointMeta> decode_checkpoint(std::span<const std::uint8_t> bytes);

}  // namespace poprec::model
