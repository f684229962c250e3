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

#include "poprec/model.hpp"

#include <cmath>
#include <cstring>

#include <json.hpp>

#include "poprec/binio.hpp"
#include "poprec/config_json.hpp"
#include "poprec/kernels.hpp"

namespace poprec::model {

using nn::Tensor;

void ModelConfig::validate() const {
  if (d == 0 || heads == 0 || d % heads != 0) {
    throw ConfigError("embedding dim d=" + std::to_string(d) + " must be divisible by heads=" + std::to_string(heads));
  }
  if (d % 2 != 0) throw ConfigError("embedding dim d must be even for the sinusoid encodings");
  if (max_len == 0) throw ConfigError("max sequence length must be positive");
  if (k < 2 || m + n == 0) throw ConfigError("window needs k >= 2 and m + n > 0");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout must lie in [0, 1)");
  if (!(ln_eps > 0.0)) throw ConfigError("layer-norm epsilon must be positive");
}

std::size_t count_params(const ModelConfig& cfg) {
  const std::size_t d = cfg.d;
  const std::size_t attention = 4 * d * d;
  const std::size_t ffn = 2 * d * d + 2 * d;
  const std::size_t norms = 4 * d;
  return d * cfg.window_width() + cfg.layers * (attention + ffn + norms) + 2 * d;
}

namespace {

template <class T>
Tensor<T> uniform(nn::Shape shape, std::size_t fan_in, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  std::vector<T> v(shape.size());
  for (auto& x : v) x = static_cast<T>(dist(rng));
  return Tensor<T>::from(shape, std::move(v), true);
}

template <class T>
Tensor<T> filled(nn::Shape shape, T value) {
  return Tensor<T>::from(shape, std::vector<T>(shape.size(), value), true);
}

template <class U, class T>
Tensor<U> cast_tensor(const Tensor<T>& t, bool requires_grad) {
  std::vector<U> v(t.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<U>(t.values()[i]);
  return Tensor<U>::from(t.shape(), std::move(v), requires_grad);
}

bool is_suffix(std::span<const std::uint8_t> valid, std::size_t& first) {
  first = valid.size();
  for (std::size_t i = 0; i < valid.size(); ++i) {
    if (valid[i]) {
      first = i;
      break;
    }
  }
  for (std::size_t i = first; i < valid.size(); ++i)
    if (!valid[i]) return false;
  return true;
}

}  // namespace

template <class T>
ModelParams<T> ModelParams<T>::init(const ModelConfig& cfg, Rng& rng) {
  cfg.validate();
  ModelParams p;
  p.cfg = cfg;
  const std::size_t d = cfg.d;
  p.w_pop = uniform<T>({d, cfg.window_width()}, cfg.window_width(), rng);
  for (std::size_t l = 0; l < cfg.layers; ++l) {
    LayerParams<T> lp;
    lp.attn_norm_alpha = filled<T>({1, d}, T(1));
    lp.attn_norm_beta = filled<T>({1, d}, T(0));
    lp.wq = uniform<T>({d, d}, d, rng);
    lp.wk = uniform<T>({d, d}, d, rng);
    lp.wv = uniform<T>({d, d}, d, rng);
    lp.wo = uniform<T>({d, d}, d, rng);
    lp.ffn_norm_alpha = filled<T>({1, d}, T(1));
    lp.ffn_norm_beta = filled<T>({1, d}, T(0));
    lp.w1 = uniform<T>({d, d}, d, rng);
    lp.b1 = filled<T>({1, d}, T(0));
    lp.w2 = uniform<T>({d, d}, d, rng);
    lp.b2 = filled<T>({1, d}, T(0));
    p.layers.push_back(std::move(lp));
  }
  p.final_norm_alpha = filled<T>({1, d}, T(1));
  p.final_norm_beta = filled<T>({1, d}, T(0));
  return p;
}

template <class T>
std::vector<std::pair<std::string, Tensor<T>>> ModelParams<T>::named() const {
  std::vector<std::pair<std::string, Tensor<T>>> out;
  out.emplace_back("w_pop", w_pop);
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto& lp = layers[l];
    const std::string pre = "layer" + std::to_string(l) + ".";
    out.emplace_back(pre + "attn_norm_alpha", lp.attn_norm_alpha);
    out.emplace_back(pre + "attn_norm_beta", lp.attn_norm_beta);
    out.emplace_back(pre + "wq", lp.wq);
    out.emplace_back(pre + "wk", lp.wk);
    out.emplace_back(pre + "wv", lp.wv);
    out.emplace_back(pre + "wo", lp.wo);
    out.emplace_back(pre + "ffn_norm_alpha", lp.ffn_norm_alpha);
    out.emplace_back(pre + "ffn_norm_beta", lp.ffn_norm_beta);
    out.emplace_back(pre + "w1", lp.w1);
    out.emplace_back(pre + "b1", lp.b1);
    out.emplace_back(pre + "w2", lp.w2);
    out.emplace_back(pre + "b2", lp.b2);
  }
  out.emplace_back("final_norm_alpha", final_norm_alpha);
  out.emplace_back("final_norm_beta", final_norm_beta);
  return out;
}

template <class T>
std::vector<Tensor<T>> ModelParams<T>::tensors() const {
  std::vector<Tensor<T>> out;
  for (auto& [name, t] : named()) out.push_back(t);
  return out;
}

template <class T>
std::size_t ModelParams<T>::value_count() const {
  std::size_t n = 0;
  for (const auto& t : tensors()) n += t.size();
  return n;
}

template <class T>
std::string ModelParams<T>::digest() const {
  binio::Writer w;
  for (const auto& t : tensors())
    for (T v : t.values()) w.f32(static_cast<float>(v));
  return sha256_hex(w.data());
}

template <class T>
template <class U>
ModelParams<U> ModelParams<T>::cast(bool requires_grad) const {
  ModelParams<U> out;
  out.cfg = cfg;
  out.w_pop = cast_tensor<U>(w_pop, requires_grad);
  for (const auto& lp : layers) {
    LayerParams<U> q;
    q.attn_norm_alpha = cast_tensor<U>(lp.attn_norm_alpha, requires_grad);
    q.attn_norm_beta = cast_tensor<U>(lp.attn_norm_beta, requires_grad);
    q.wq = cast_tensor<U>(lp.wq, requires_grad);
    q.wk = cast_tensor<U>(lp.wk, requires_grad);
    q.wv = cast_tensor<U>(lp.wv, requires_grad);
    q.wo = cast_tensor<U>(lp.wo, requires_grad);
    q.ffn_norm_alpha = cast_tensor<U>(lp.ffn_norm_alpha, requires_grad);
    q.ffn_norm_beta = cast_tensor<U>(lp.ffn_norm_beta, requires_grad);
    q.w1 = cast_tensor<U>(lp.w1, requires_grad);
    q.b1 = cast_tensor<U>(lp.b1, requires_grad);
    q.w2 = cast_tensor<U>(lp.w2, requires_grad);
    q.b2 = cast_tensor<U>(lp.b2, requires_grad);
    out.layers.push_back(std::move(q));
  }
  out.final_norm_alpha = cast_tensor<U>(final_norm_alpha, requires_grad);
  out.final_norm_beta = cast_tensor<U>(final_norm_beta, requires_grad);
  return out;
}

template <class T>
Tensor<T> window_matrix(const popdyn::PopularityTable& pt, std::span<const ingest::ItemIndex> items,
                        std::span<const std::int64_t> times, std::int64_t offset) {
  if (items.size() != times.size()) throw ShapeError("window_matrix: items and times differ in length");
  const std::size_t width = pt.config().window_width();
  std::vector<T> buf(items.size() * width);
  for (std::size_t i = 0; i < items.size(); ++i) {
    pt.fill_window<T>(items[i], times[i], offset, std::span<T>(buf.data() + i * width, width));
  }
  return Tensor<T>::from({items.size(), width}, std::move(buf));
}

template <class T>
Tensor<T> encode_items(const Tensor<T>& windows, const ModelParams<T>& params) {
  if (windows.cols() != params.cfg.window_width()) {
    throw ShapeError("encode_items: window width " + std::to_string(windows.cols()) + " but W_p expects " +
                     std::to_string(params.cfg.window_width()));
  }
  return nn::matmul_bt(windows, params.w_pop);
}

template <class T>
Tensor<T> time_position_rows(const Encodings& enc, std::span<const std::size_t> ranks, std::size_t first,
                             std::size_t count) {
  const auto& table = enc.table();
  const std::size_t d = table.dim();
  std::vector<T> buf(count * d);
  for (std::size_t r = 0; r < count; ++r) {
    const std::size_t pos = first + r;
    auto trow = table.row(ranks[pos]);
    auto prow = table.row(pos);
    for (std::size_t c = 0; c < d; ++c) buf[r * d + c] = static_cast<T>(trow[c] + prow[c]);
  }
  return Tensor<T>::from({count, d}, std::move(buf));
}

template <class T>
Tensor<T> assemble_input(const ingest::UserSequence& seq, const Tensor<T>& item_embeddings,
                         std::span<const std::size_t> ranks, const Encodings& enc) {
  const std::size_t len = seq.length();
  const std::size_t first = seq.first_valid();
  const std::size_t d = enc.table().dim();
  if (len != enc.table().length() || ranks.size() != len) {
    throw ShapeError("assemble_input: sequence length " + std::to_string(len) + " vs table " +
                     std::to_string(enc.table().length()));
  }
  if (item_embeddings.rows() != seq.valid_len || item_embeddings.cols() != d) {
    throw ShapeError("assemble_input: embeddings " + item_embeddings.shape().str() + " for " +
                     std::to_string(seq.valid_len) + " valid positions");
  }
  if (seq.valid_len == 0) return Tensor<T>::zeros({len, d});
  auto rows = nn::add(item_embeddings, time_position_rows<T>(enc, ranks, first, seq.valid_len));
  if (first == 0) return rows;
  return nn::concat_rows<T>({Tensor<T>::zeros({first, d}), rows});
}

template <class T>
Tensor<T> forward_rows(const Tensor<T>& x_in, const nn::Mask& attn_mask, const ModelParams<T>& params, bool training,
                       Rng* rng) {
  const auto& cfg = params.cfg;
  const std::size_t dh = cfg.head_dim();
  const T inv_scale = T(1) / static_cast<T>(std::sqrt(static_cast<double>(dh)));
  const T eps = static_cast<T>(cfg.ln_eps);
  const T rate = static_cast<T>(cfg.dropout);
  if (training && rate > 0 && !rng) throw ConfigError("training-mode forward needs a dropout stream");
  Rng unused;
  Rng& r = rng ? *rng : unused;

  Tensor<T> x = x_in;
  for (const auto& lp : params.layers) {
    auto h = nn::layer_norm(x, lp.attn_norm_alpha, lp.attn_norm_beta, eps);
    auto q = nn::matmul(h, lp.wq);
    auto k = nn::matmul(h, lp.wk);
    auto v = nn::matmul(h, lp.wv);
    std::vector<Tensor<T>> heads;
    for (std::size_t i = 0; i < cfg.heads; ++i) {
      auto qi = nn::slice_cols(q, i * dh, dh);
      auto ki = nn::slice_cols(k, i * dh, dh);
      auto vi = nn::slice_cols(v, i * dh, dh);
      auto logits = nn::scale(nn::matmul_bt(qi, ki), inv_scale);
      heads.push_back(nn::matmul(nn::softmax_masked(logits, attn_mask), vi));
    }
    auto attn = nn::matmul(cfg.heads == 1 ? heads.front() : nn::concat_cols(heads), lp.wo);
    x = nn::add(x, nn::dropout(attn, rate, training, r));

    auto h2 = nn::layer_norm(x, lp.ffn_norm_alpha, lp.ffn_norm_beta, eps);
    auto hidden = nn::relu(nn::add(nn::matmul(h2, lp.w1), lp.b1));
    auto ffn = nn::add(nn::matmul(hidden, lp.w2), lp.b2);
    x = nn::add(x, nn::dropout(ffn, rate, training, r));
  }
  return nn::layer_norm(x, params.final_norm_alpha, params.final_norm_beta, eps);
}

template <class T>
Tensor<T> forward_uncropped(const Tensor<T>& input, std::span<const std::uint8_t> valid, const ModelParams<T>& params,
                            bool training, Rng* rng) {
  const std::size_t len = input.rows();
  if (valid.size() != len) throw ShapeError("forward: validity mask length differs from input rows");
  nn::Mask mask(len * len, 0);
  for (std::size_t i = 0; i < len; ++i)
    for (std::size_t j = 0; j <= i; ++j) mask[i * len + j] = (valid[i] && valid[j]) ? 1 : 0;
  auto out = forward_rows(input, mask, params, training, rng);
  std::vector<T> keep(out.size(), T(0));
  for (std::size_t i = 0; i < len; ++i)
    if (valid[i]) std::fill_n(keep.begin() + static_cast<std::ptrdiff_t>(i * out.cols()), out.cols(), T(1));
  return nn::mul(out, Tensor<T>::from(out.shape(), std::move(keep)));
}

template <class T>
Tensor<T> forward(const Tensor<T>& input, std::span<const std::uint8_t> valid, const ModelParams<T>& params,
                  bool training, Rng* rng) {
  const std::size_t len = input.rows();
  if (valid.size() != len) throw ShapeError("forward: validity mask length differs from input rows");
  std::size_t first = 0;
  if (!is_suffix(valid, first)) return forward_uncropped(input, valid, params, training, rng);
  const std::size_t count = len - first;
  if (count == 0) return Tensor<T>::zeros(input.shape());
  auto rows = first == 0 ? input : nn::slice_rows(input, first, count);
  auto out = forward_rows(rows, nn::causal_mask(count), params, training, rng);
  if (first == 0) return out;
  return nn::concat_rows<T>({Tensor<T>::zeros({first, input.cols()}), out});
}

template <class T>
T score(std::span<const T> user, std::span<const T> item) {
  if (user.size() != item.size()) throw ShapeError("score: embedding sizes differ");
  return kernels::ops<T>().dot(user.data(), item.data(), user.size());
}

template <class T>
std::vector<T> user_embedding(const ModelParams<T>& params, const Encodings& enc, const popdyn::PopularityTable& pt,
                              std::span<const ingest::Event> history, std::int64_t offset) {
  nn::NoGradGuard no_grad;
  if (history.empty()) return {};
  const auto seq = ingest::to_fixed_sequence(history, params.cfg.max_len);
  const auto ranks = encoders::rank_intervals(seq.timestamps, seq.valid_len);
  const std::size_t first = seq.first_valid();
  std::span<const ingest::ItemIndex> items(seq.items.data() + first, seq.valid_len);
  std::span<const std::int64_t> times(seq.timestamps.data() + first, seq.valid_len);
  auto emb = encode_items(window_matrix<T>(pt, items, times, offset), params);
  auto x = nn::add(emb, time_position_rows<T>(enc, ranks, first, seq.valid_len));
  auto out = forward_rows(x, nn::causal_mask(seq.valid_len), params, false, nullptr);
  auto last = out.values().subspan((seq.valid_len - 1) * out.cols(), out.cols());
  return std::vector<T>(last.begin(), last.end());
}

namespace {

constexpr std::string_view kCheckpointFormat = "poprec-checkpoint";

nlohmann::json header_json(const ModelParams<float>& params, const CheckpointMeta& meta) {
  nlohmann::json tensors = nlohmann::json::array();
  for (const auto& [name, t] : params.named()) {
    tensors.push_back({{"name", name}, {"shape", {t.rows(), t.cols()}}});
  }
  return {{"format", kCheckpointFormat},
          {"version", 1},
          {"config", meta.model},
          {"popularity", meta.pop},
          {"offset", meta.offset},
          {"seed", meta.seed},
          {"git_describe", meta.git_describe},
          {"dataset_fingerprint", meta.dataset_fingerprint},
          {"learning_rate", meta.learning_rate},
          {"epochs", meta.epochs},
          {"dtype", "float32-le"},
          {"tensors", tensors}};
}

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const ModelParams<float>& params, const CheckpointMeta& meta) {
  binio::Writer w;
  w.bytes(header_json(params, meta).dump());
  w.u8('\n');
  for (const auto& t : params.tensors())
    for (float v : t.values()) w.f32(v);
  return w.data();
}

void save_checkpoint(const std::string& path, const ModelParams<float>& params, const CheckpointMeta& meta) {
  binio::write_file(path, encode_checkpoint(params, meta));
}

std::pair<ModelParams<float>, CheckpointMeta> decode_checkpoint(std::span<const std::uint8_t> bytes) {
  auto nl = std::find(bytes.begin(), bytes.end(), std::uint8_t('\n'));
  if (nl == bytes.end()) throw DataError("checkpoint: missing header line");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.begin(), nl);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("checkpoint header: ") + e.what());
  }
  if (header.value("format", "") != kCheckpointFormat) throw DataError("not a poprec checkpoint");

  CheckpointMeta meta;
  meta.model = header.at("config").get<ModelConfig>();
  meta.pop = header.at("popularity").get<popdyn::PopularityConfig>();
  meta.offset = header.at("offset").get<std::int64_t>();
  meta.seed = header.at("seed").get<std::uint64_t>();
  meta.git_describe = header.value("git_describe", "");
  meta.dataset_fingerprint = header.value("dataset_fingerprint", "");
  meta.learning_rate = header.value("learning_rate", 0.0);
  meta.epochs = header.value("epochs", std::size_t{0});
  meta.model.validate();

  // Structure comes from the config; the header's tensor table must agree.
  Rng rng(0);
  auto params = ModelParams<float>::init(meta.model, rng);
  auto named = params.named();
  const auto& table = header.at("tensors");
  if (table.size() != named.size()) throw DataError("checkpoint: tensor table does not match config");
  std::size_t expected = 0;
  for (std::size_t i = 0; i < named.size(); ++i) {
    const auto& [name, t] = named[i];
    if (table[i].at("name").get<std::string>() != name ||
        table[i].at("shape").at(0).get<std::size_t>() != t.rows() ||
        table[i].at("shape").at(1).get<std::size_t>() != t.cols()) {
      throw DataError("checkpoint: tensor '" + name + "' does not match config");
    }
    expected += t.size() * sizeof(float);
  }
  const std::size_t payload = static_cast<std::size_t>(bytes.end() - nl - 1);
  if (payload != expected) {
    throw DataError("checkpoint: header declares " + std::to_string(expected) + " payload bytes, file has " +
                    std::to_string(payload));
  }
  binio::Reader r(std::vector<std::uint8_t>(nl + 1, bytes.end()));
  for (auto& [name, t] : named)
    for (float& v : t.values()) v = r.f32();
  return {std::move(params), std::move(meta)};
}

std::pair<ModelParams<float>, CheckpointMeta> load_checkpoint(const std::string& path) {
  return decode_checkpoint(binio::read_file(path));
}

#define POPREC_INSTANTIATE(T)                                                                                     \
  template struct ModelParams<T>;                                                                                 \
  template Tensor<T> window_matrix<T>(const popdyn::PopularityTable&, std::span<const ingest::ItemIndex>,         \
                                      std::span<const std::int64_t>, std::int64_t);                              \
  template Tensor<T> encode_items(const Tensor<T>&, const ModelParams<T>&);                                       \
  template Tensor<T> time_position_rows<T>(const Encodings&, std::span<const std::size_t>, std::size_t,           \
                                           std::size_t);                                                          \
  template Tensor<T> assemble_input(const ingest::UserSequence&, const Tensor<T>&, std::span<const std::size_t>,  \
                                    const Encodings&);                                                            \
  template Tensor<T> forward_rows(const Tensor<T>&, const nn::Mask&, const ModelParams<T>&, bool, Rng*);          \
  template Tensor<T> forward(const Tensor<T>&, std::span<const std::uint8_t>, const ModelParams<T>&, bool, Rng*); \
  template Tensor<T> forward_uncropped(const Tensor<T>&, std::span<const std::uint8_t>, const ModelParams<T>&,    \
                                       bool, Rng*);                                                               \
  template T score(std::span<const T>, std::span<const T>);                                                       \
  template std::vector<T> user_embedding(const ModelParams<T>&, const Encodings&, const popdyn::PopularityTable&, \
                                         std::span<const ingest::Event>, std::int64_t);

POPREC_INSTANTIATE(float)
POPREC_INSTANTIATE(double)

#undef POPREC_INSTANTIATE

template ModelParams<double> ModelParams<float>::cast<double>(bool) const;
template ModelParams<float> ModelParams<double>::cast<float>(bool) const;
template ModelParams<float> ModelParams<float>::cast<float>(bool) const;

}  // namespace poprec::model
