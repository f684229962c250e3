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

#include <doctest.h>

#include <cmath>

#include "poprec/common.hpp"
#include "poprec/model.hpp"
#include "poprec/train.hpp"

using namespace poprec;
using namespace poprec::model;
using ingest::Event;
using ingest::ItemIndex;

namespace {

constexpr std::int64_t kDay = popdyn::kSecondsPerDay;
constexpr std::int64_t kT0 = 1600000000;

ModelConfig small_config() {
  ModelConfig c;
  c.d = 8;
  c.heads = 2;
  c.layers = 2;
  c.max_len = 10;
  c.m = 3;
  c.n = 2;
  return c;
}

ingest::InteractionDataset toy_dataset(const std::string& prefix = "i") {
  const std::vector<std::vector<std::pair<int, int>>> raw{
      {{0, 3}, {1, 20}, {2, 45}, {0, 80}, {3, 120}, {4, 150}, {1, 190}},
      {{2, 10}, {3, 50}, {5, 90}, {1, 130}, {0, 170}, {2, 200}},
      {{5, 5}, {4, 60}, {3, 100}, {2, 140}, {1, 180}, {6, 210}, {0, 230}},
  };
  std::vector<std::string> users, items;
  for (int j = 0; j < 8; ++j) items.push_back(prefix + std::to_string(j));
  std::vector<std::vector<Event>> seqs;
  for (std::size_t u = 0; u < raw.size(); ++u) {
    users.push_back("u" + std::to_string(u));
    std::vector<Event> s;
    for (auto [i, d] : raw[u]) s.push_back({static_cast<ItemIndex>(i), kT0 + d * kDay + 3600});
    seqs.push_back(s);
  }
  return ingest::InteractionDataset::from_parts(users, items, seqs, true);
}

popdyn::PopularityConfig pop_for(const ModelConfig& c) {
  popdyn::PopularityConfig p;
  p.m = c.m;
  p.n = c.n;
  p.gamma = c.gamma;
  return p;
}

nn::Tensor<double> random_input(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  Rng rng(seed);
  std::uniform_real_distribution<double> d(-1, 1);
  std::vector<double> v(rows * cols);
  for (auto& x : v) x = d(rng);
  return nn::Tensor<double>::from({rows, cols}, std::move(v));
}

}  // namespace

TEST_CASE("parameter count") {
  ModelConfig c;
  // W_p + per layer (4 attention + 2 FFN matrices, 2 FFN biases, 2 norms) + final norm
  const std::size_t oracle = 50 * 11 * 16 + 2 * (6 * 50 * 50 + 2 * 50 + 4 * 50) + 2 * 50;
  CHECK(count_params(c) == oracle);
  CHECK(count_params(c) == 39500);
  for (const auto& cfg : {c, small_config()}) {
    Rng rng(1);
    auto p = ModelParams<double>::init(cfg, rng);
    std::size_t total = 0;
    for (const auto& [name, t] : p.named()) total += t.size();
    CHECK(total == count_params(cfg));
    CHECK(p.value_count() == count_params(cfg));
  }
}

TEST_CASE("configuration validation") {
  auto c = small_config();
  c.heads = 3;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = small_config();
  c.dropout = 1.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = small_config();
  c.d = 7;
  c.heads = 1;
  CHECK_THROWS_AS(c.validate(), ConfigError);  // sinusoids need even d
  CHECK_NOTHROW(small_config().validate());
}

TEST_CASE("outputs are causal") {
  auto cfg = small_config();
  Rng rng(2);
  auto p = ModelParams<double>::init(cfg, rng);
  std::vector<std::uint8_t> valid(cfg.max_len, 1);
  auto x = random_input(cfg.max_len, cfg.d, 3);
  auto base = forward(x, valid, p, false, nullptr);
  for (std::size_t i = 0; i + 1 < cfg.max_len; ++i) {
    auto y = random_input(cfg.max_len, cfg.d, 3);
    // Perturb every row after i.
    for (std::size_t r = i + 1; r < cfg.max_len; ++r)
      for (std::size_t c = 0; c < cfg.d; ++c) y.values()[r * cfg.d + c] += 0.5;
    auto out = forward(y, valid, p, false, nullptr);
    for (std::size_t r = 0; r <= i; ++r)
      for (std::size_t c = 0; c < cfg.d; ++c) CHECK(out.at(r, c) == base.at(r, c));
  }
}

TEST_CASE("suffix cropping matches the full computation") {
  auto cfg = small_config();
  Rng rng(4);
  auto p = ModelParams<double>::init(cfg, rng);
  for (std::size_t valid_len : {1u, 4u, 10u}) {
    std::vector<std::uint8_t> valid(cfg.max_len, 0);
    for (std::size_t i = cfg.max_len - valid_len; i < cfg.max_len; ++i) valid[i] = 1;
    auto x = random_input(cfg.max_len, cfg.d, 5);
    for (std::size_t i = 0; i < cfg.max_len - valid_len; ++i)
      for (std::size_t c = 0; c < cfg.d; ++c) x.values()[i * cfg.d + c] = 0.0;
    auto a = forward(x, valid, p, false, nullptr);
    auto b = forward_uncropped(x, valid, p, false, nullptr);
    for (std::size_t i = 0; i < cfg.max_len; ++i)
      for (std::size_t c = 0; c < cfg.d; ++c) {
        CHECK(a.at(i, c) == doctest::Approx(b.at(i, c)).epsilon(1e-12));
        if (!valid[i]) CHECK(a.at(i, c) == 0.0);
      }
  }
}

TEST_CASE("embeddings do not depend on item identities") {
  auto cfg = small_config();
  auto a = toy_dataset("i"), b = toy_dataset("other-");
  auto pa = popdyn::PopularityTable::build(a, pop_for(cfg)), pb = popdyn::PopularityTable::build(b, pop_for(cfg));
  Rng rng(6);
  auto p = ModelParams<double>::init(cfg, rng);
  Encodings enc(cfg);
  for (ingest::UserIndex u = 0; u < a.user_count(); ++u) {
    auto ea = user_embedding(p, enc, pa, a.train_events(u), 1);
    auto eb = user_embedding(p, enc, pb, b.train_events(u), 1);
    CHECK(ea == eb);
    CHECK(ea.size() == cfg.d);
  }
  CHECK(user_embedding(p, enc, pa, {}, 1).empty());
}

TEST_CASE("inference embedding equals the last row of the padded forward pass") {
  auto cfg = small_config();
  auto ds = toy_dataset();
  auto pt = popdyn::PopularityTable::build(ds, pop_for(cfg));
  Rng rng(7);
  auto p = ModelParams<double>::init(cfg, rng);
  Encodings enc(cfg);
  auto hist = ds.train_events(0);
  auto seq = ingest::to_fixed_sequence(hist, cfg.max_len);
  auto ranks = encoders::rank_intervals(seq.timestamps, seq.valid_len);
  const std::size_t first = seq.first_valid();
  auto emb = encode_items(window_matrix<double>(pt, std::span(seq.items).subspan(first),
                                                std::span(seq.timestamps).subspan(first), 1),
                          p);
  auto x = assemble_input(seq, emb, ranks, enc);
  std::vector<std::uint8_t> valid(cfg.max_len, 0);
  for (std::size_t i = first; i < cfg.max_len; ++i) valid[i] = 1;
  auto out = forward_uncropped(x, valid, p, false, nullptr);
  auto q = user_embedding(p, enc, pt, hist, 1);
  for (std::size_t c = 0; c < cfg.d; ++c) CHECK(q[c] == doctest::Approx(out.at(cfg.max_len - 1, c)).epsilon(1e-12));
}

TEST_CASE("end-to-end gradient through the dynamics projection") {
  auto cfg = small_config();
  auto ds = toy_dataset();
  auto pt = popdyn::PopularityTable::build(ds, pop_for(cfg));
  Rng rng(8);
  auto p = ModelParams<double>::init(cfg, rng);
  Encodings enc(cfg);
  train::TrainConfig tc;
  tc.negatives_per_positive = 2;
  std::vector<train::Example> batch;
  Rng neg(9);
  for (ingest::UserIndex u = 0; u < ds.user_count(); ++u) {
    const std::size_t positions = train::training_events(ds, u, cfg.max_len).size() - 1;
    batch.push_back({u, train::sample_negatives(ds, u, positions * 2, neg)});
  }
  auto loss_fn = [&] { return train::batch_loss<double>(ds, pt, enc, p, batch, tc, false, nullptr); };

  for (auto& t : p.tensors()) t.zero_grad();
  nn::backward(loss_fn());
  std::vector<double> analytic(p.w_pop.grad().begin(), p.w_pop.grad().end());
  auto vals = p.w_pop.values();
  const double h = 1e-6;
  double worst = 0.0;
  std::size_t nonzero = 0;
  for (std::size_t i = 0; i < vals.size(); ++i) {
    const double orig = vals[i];
    double up, down;
    {
      nn::NoGradGuard g;
      vals[i] = orig + h;
      up = loss_fn().item();
      vals[i] = orig - h;
      down = loss_fn().item();
    }
    vals[i] = orig;
    const double numeric = (up - down) / (2 * h);
    if (numeric != 0.0) ++nonzero;
    worst = std::max(worst, std::fabs(analytic[i] - numeric) / std::max({std::fabs(analytic[i]), std::fabs(numeric), 1e-3}));
  }
  CHECK(nonzero > 0);
  CHECK(worst < 1e-4);
}

TEST_CASE("checkpoints round-trip") {
  auto cfg = small_config();
  Rng rng(10);
  auto p = ModelParams<float>::init(cfg, rng);
  CheckpointMeta meta;
  meta.model = cfg;
  meta.pop = pop_for(cfg);
  meta.seed = 3;
  meta.dataset_fingerprint = "abc";
  auto bytes = encode_checkpoint(p, meta);
  auto [q, m2] = decode_checkpoint(bytes);
  CHECK(q.digest() == p.digest());
  CHECK(m2.model == cfg);
  CHECK(m2.dataset_fingerprint == "abc");
  CHECK(encode_checkpoint(q, m2) == bytes);
  for (std::size_t t = 0; t < p.tensors().size(); ++t) {
    auto a = p.tensors()[t].values(), b = q.tensors()[t].values();
    CHECK(std::equal(a.begin(), a.end(), b.begin(), b.end()));
  }
  bytes.resize(bytes.size() - 1);
  CHECK_THROWS_AS(decode_checkpoint(bytes), DataError);

  Rng same(10);
  CHECK(ModelParams<float>::init(cfg, same).digest() == p.digest());
  Rng other(11);
  CHECK(ModelParams<float>::init(cfg, other).digest() != p.digest());
}
