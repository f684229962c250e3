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

#include "poprec/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iostream>
#include <limits>
#include <unordered_set>

#include "poprec/common.hpp"

namespace poprec::train {

using ingest::Event;
using ingest::ItemIndex;
using ingest::UserIndex;
using nn::Tensor;

void TrainConfig::validate() const {
  if (batch_size < 1) throw ConfigError("batch size must be at least 1");
  if (negatives_per_positive < 1) throw ConfigError("negatives per positive must be at least 1");
  if (!(lr >= 0.0) || !std::isfinite(lr)) throw ConfigError("learning rate must be a finite non-negative number");
  if (!(weight_decay >= 0.0)) throw ConfigError("weight decay must be non-negative");
  if (offset < 1) throw ConfigError("offset must be at least one fine period");
  if (std::find(std::begin(kLrGrid), std::end(kLrGrid), lr) == std::end(kLrGrid)) {
    warn("learning rate " + std::to_string(lr) + " is outside the grid {1e-4, 1e-3, 1e-2}");
  }
}

std::string_view loss_mode_name(LossMode m) { return m == LossMode::kDefault ? "default" : "paper-literal"; }

LossMode parse_loss_mode(std::string_view s) {
  if (s == "default") return LossMode::kDefault;
  if (s == "paper-literal") return LossMode::kPaperLiteral;
  throw ConfigError("unknown loss mode '" + std::string(s) + "' (expected default or paper-literal)");
}

namespace {

double log_sigmoid(double x) { return x >= 0 ? -std::log1p(std::exp(-x)) : x - std::log1p(std::exp(x)); }

}  // namespace

double loss(std::span<const LossTerm> terms, LossMode mode) {
  if (terms.empty()) return 0.0;
  double total = 0.0;
  for (const auto& t : terms) {
    double l = -log_sigmoid(t.positive);
    for (double n : t.negatives) l -= mode == LossMode::kDefault ? log_sigmoid(-n) : log_sigmoid(1.0 - n);
    total += l;
  }
  return total / static_cast<double>(terms.size());
}

std::vector<ItemIndex> sample_negatives(const ingest::InteractionDataset& ds, UserIndex u, std::size_t count,
                                        Rng& rng) {
  std::unordered_set<ItemIndex> seen;
  for (const auto& e : ds.sequence(u)) seen.insert(e.item);
  if (seen.size() >= ds.item_count()) {
    throw DataError("cannot sample negatives for user " + ds.user_id(u) + ": every item is in the history");
  }
  std::uniform_int_distribution<ItemIndex> pick(0, static_cast<ItemIndex>(ds.item_count() - 1));
  std::vector<ItemIndex> out;
  out.reserve(count);
  while (out.size() < count) {
    const ItemIndex j = pick(rng);
    if (!seen.count(j)) out.push_back(j);
  }
  return out;
}

std::span<const Event> training_events(const ingest::InteractionDataset& ds, UserIndex u, std::size_t max_len) {
  auto ev = ds.train_events(u);
  if (ev.size() > max_len + 1) ev = ev.subspan(ev.size() - max_len - 1);
  return ev;
}

template <class T>
Tensor<T> batch_loss(const ingest::InteractionDataset& ds, const popdyn::PopularityTable& pt,
                     const model::Encodings& enc, const model::ModelParams<T>& params, std::span<const Example> batch,
                     const TrainConfig& cfg, bool training, Rng* dropout_rng, std::size_t* positions) {
  const std::size_t kneg = cfg.negatives_per_positive;
  std::vector<Tensor<T>> outs;
  std::vector<ItemIndex> pos_items;
  std::vector<std::int64_t> target_times;
  std::vector<std::vector<ItemIndex>> neg_items(kneg);

  for (const auto& ex : batch) {
    auto events = training_events(ds, ex.user, params.cfg.max_len);
    if (events.size() < 2) continue;
    auto inputs = events.first(events.size() - 1);
    auto targets = events.subspan(1);
    const std::size_t count = inputs.size();
    if (ex.negatives.size() != count * kneg) throw ShapeError("batch_loss: negative count does not match positions");

    const auto seq = ingest::to_fixed_sequence(inputs, params.cfg.max_len);
    const auto ranks = encoders::rank_intervals(seq.timestamps, seq.valid_len);
    const std::size_t first = seq.first_valid();
    std::span<const ItemIndex> items(seq.items.data() + first, count);
    std::span<const std::int64_t> times(seq.timestamps.data() + first, count);
    auto emb = model::encode_items(model::window_matrix<T>(pt, items, times, cfg.offset), params);
    auto x = nn::add(emb, model::time_position_rows<T>(enc, ranks, first, count));
    outs.push_back(model::forward_rows(x, nn::causal_mask(count), params, training, dropout_rng));

    for (std::size_t z = 0; z < count; ++z) {
      pos_items.push_back(targets[z].item);
      target_times.push_back(targets[z].timestamp);
      for (std::size_t k = 0; k < kneg; ++k) neg_items[k].push_back(ex.negatives[z * kneg + k]);
    }
  }
  if (positions) *positions = pos_items.size();
  if (pos_items.empty()) return Tensor<T>::scalar(T(0));

  auto out = outs.size() == 1 ? outs.front() : nn::concat_rows(outs);
  auto pos_emb = model::encode_items(model::window_matrix<T>(pt, pos_items, target_times, cfg.offset), params);
  auto total = nn::sum(nn::log_sigmoid(nn::rowwise_dot(out, pos_emb)));
  for (std::size_t k = 0; k < kneg; ++k) {
    auto neg_emb = model::encode_items(model::window_matrix<T>(pt, neg_items[k], target_times, cfg.offset), params);
    auto neg = nn::scale(nn::rowwise_dot(out, neg_emb), T(-1));
    if (cfg.loss == LossMode::kPaperLiteral) neg = nn::add_scalar(neg, T(1));
    total = nn::add(total, nn::sum(nn::log_sigmoid(neg)));
  }
  return nn::scale(total, T(-1) / static_cast<T>(pos_items.size()));
}

template Tensor<float> batch_loss(const ingest::InteractionDataset&, const popdyn::PopularityTable&,
                                  const model::Encodings&, const model::ModelParams<float>&, std::span<const Example>,
                                  const TrainConfig&, bool, Rng*, std::size_t*);
template Tensor<double> batch_loss(const ingest::InteractionDataset&, const popdyn::PopularityTable&,
                                   const model::Encodings&, const model::ModelParams<double>&,
                                   std::span<const Example>, const TrainConfig&, bool, Rng*, std::size_t*);

Trainer::Trainer(const ingest::InteractionDataset& ds, const popdyn::PopularityTable& pt,
                 model::ModelParams<float> params, TrainConfig cfg)
    : ds_(ds),
      pt_(pt),
      params_(std::move(params)),
      cfg_(std::move(cfg)),
      enc_(params_.cfg),
      opt_(params_.tensors(), nn::Adam<float>::Options{cfg_.lr, 0.9, 0.999, 1e-8, cfg_.weight_decay}) {
  if (!ds_.has_split()) throw ConfigError("training requires a split dataset");
  if (pt_.item_count() != ds_.item_count()) throw ConfigError("popularity table was built for a different catalog");
  if (pt_.config().window_width() != params_.cfg.window_width()) {
    throw ConfigError("popularity window width does not match the model");
  }
}

std::vector<Example> Trainer::epoch_examples() {
  std::vector<UserIndex> order;
  for (UserIndex u = 0; u < ds_.user_count(); ++u)
    if (training_events(ds_, u, params_.cfg.max_len).size() >= 2) order.push_back(u);
  Rng shuffle = make_stream(cfg_.seed, "shuffle", epoch_);
  std::shuffle(order.begin(), order.end(), shuffle);

  std::vector<Example> out;
  out.reserve(order.size());
  for (UserIndex u : order) {
    Example ex;
    ex.user = u;
    const std::size_t positions = training_events(ds_, u, params_.cfg.max_len).size() - 1;
    Rng rng = make_stream(cfg_.seed, "negatives", (static_cast<std::uint64_t>(epoch_) << 32) | u);
    ex.negatives = sample_negatives(ds_, u, positions * cfg_.negatives_per_positive, rng);
    out.push_back(std::move(ex));
  }
  return out;
}

EpochStats Trainer::train_epoch() {
  const auto start = std::chrono::steady_clock::now();
  auto examples = epoch_examples();
  Rng dropout = make_stream(cfg_.seed, "dropout", epoch_);
  EpochStats st;
  double weighted = 0.0;
  for (std::size_t b = 0; b < examples.size(); b += cfg_.batch_size) {
    const std::size_t n = std::min(cfg_.batch_size, examples.size() - b);
    std::span<const Example> batch(examples.data() + b, n);
    std::size_t positions = 0;
    opt_.zero_grad();
    auto l = batch_loss<float>(ds_, pt_, enc_, params_, batch, cfg_, true, &dropout, &positions);
    if (positions == 0) continue;
    const double value = l.item();
    if (!std::isfinite(value)) {
      throw NumericalError("non-finite training loss at epoch " + std::to_string(epoch_ + 1) + ", batch " +
                           std::to_string(st.batches + 1) + " (lr " + std::to_string(cfg_.lr) + ", users " +
                           ds_.user_id(batch.front().user) + "..)");
    }
    nn::backward(l);
    opt_.step();
    weighted += value * static_cast<double>(positions);
    st.positions += positions;
    ++st.batches;
  }
  ++epoch_;
  st.loss = st.positions ? weighted / static_cast<double>(st.positions) : 0.0;
  st.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return st;
}

nlohmann::json FitResult::curve_json() const {
  nlohmann::json epochs = nlohmann::json::array();
  for (const auto& c : curve) {
    epochs.push_back({{"epoch", c.epoch},
                      {"loss", c.loss},
                      {"val_recall10", c.val_recall10},
                      {"val_ndcg10", c.val_ndcg10},
                      {"wall_seconds", c.wall_seconds}});
  }
  return {{"best_epoch", best_epoch}, {"best_val_ndcg10", best_val_ndcg10}, {"epochs", epochs}};
}

FitResult fit(const ingest::InteractionDataset& ds, const popdyn::PopularityTable& pt,
              const model::ModelConfig& model_cfg, const TrainConfig& cfg) {
  cfg.validate();
  Rng init = make_stream(cfg.seed, "init");
  auto params = model::ModelParams<float>::init(model_cfg, init);

  FitResult res;
  res.best = params.cast<float>(false);
  res.best_val_ndcg10 = -std::numeric_limits<double>::infinity();
  if (cfg.max_epochs == 0) {
    warn("max_epochs is 0; returning initialised parameters");
    res.best_val_ndcg10 = 0.0;
    return res;
  }

  eval::EvalConfig vcfg;
  vcfg.k_list = {10};
  vcfg.seed = cfg.seed;
  vcfg.offset = cfg.offset;
  vcfg.threads = cfg.threads;

  Trainer trainer(ds, pt, std::move(params), cfg);
  std::size_t stale = 0;
  for (std::size_t e = 1; e <= cfg.max_epochs; ++e) {
    const auto st = trainer.train_epoch();
    const auto start = std::chrono::steady_clock::now();
    const auto val = eval::evaluate(trainer.params(), ds, pt, vcfg, eval::Target::kValidation);
    CurvePoint cp;
    cp.epoch = e;
    cp.loss = st.loss;
    cp.val_recall10 = val.recall.at(10);
    cp.val_ndcg10 = val.ndcg.at(10);
    cp.wall_seconds = st.wall_seconds + std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    res.curve.push_back(cp);
    if (cfg.log_progress) {
      std::cerr << "epoch " << e << " loss " << cp.loss << " val R@10 " << cp.val_recall10 << " N@10 "
                << cp.val_ndcg10 << " (" << cp.wall_seconds << " s)\n";
    }
    if (cp.val_ndcg10 > res.best_val_ndcg10) {
      res.best_val_ndcg10 = cp.val_ndcg10;
      res.best_epoch = e;
      res.best = trainer.params().cast<float>(false);
      stale = 0;
    } else {
      ++stale;
    }
    if (stale >= cfg.patience) break;
  }
  return res;
}

}  // namespace poprec::train
