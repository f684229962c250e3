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
#include "poprec/synth.hpp"
#include "poprec/train.hpp"

using namespace poprec;
using namespace poprec::train;
using ingest::Event;
using ingest::ItemIndex;

namespace {

constexpr std::int64_t kDay = popdyn::kSecondsPerDay;
constexpr std::int64_t kT0 = 1600000000;

double softplus(double x) { return std::log1p(std::exp(x)); }

model::ModelConfig small_model() {
  model::ModelConfig c;
  c.d = 8;
  c.heads = 2;
  c.layers = 1;
  c.max_len = 12;
  c.m = 3;
  c.n = 2;
  return c;
}

popdyn::PopularityConfig pop_for(const model::ModelConfig& c) {
  popdyn::PopularityConfig p;
  p.m = c.m;
  p.n = c.n;
  p.gamma = c.gamma;
  return p;
}

// Every user has seen all items but one, so negatives are forced.
ingest::InteractionDataset forced_negatives_dataset() {
  const std::size_t items = 8, users = 6;
  std::vector<std::string> uids, iids;
  for (std::size_t j = 0; j < items; ++j) iids.push_back("i" + std::to_string(j));
  std::vector<std::vector<Event>> seqs;
  for (std::size_t u = 0; u < users; ++u) {
    uids.push_back("u" + std::to_string(u));
    std::vector<Event> s;
    std::int64_t t = kT0 + static_cast<std::int64_t>(u) * kDay;
    for (std::size_t k = 1; k < items; ++k) {
      s.push_back({static_cast<ItemIndex>((u + k) % items), t});
      t += static_cast<std::int64_t>(9 + (k * u) % 5) * kDay;
    }
    seqs.push_back(s);
  }
  return ingest::InteractionDataset::from_parts(uids, iids, seqs, true);
}

ingest::InteractionDataset synth_dataset(std::uint64_t seed) {
  synth::SynthConfig c;
  c.users = 80;
  c.items = 40;
  c.min_events = 6;
  c.max_events = 12;
  return ingest::build_split(synth::generate(c, seed).dataset);
}

}  // namespace

TEST_CASE("loss on printed examples") {
  LossTerm zero{0.0, {0.0}, 0};
  CHECK(loss(std::span(&zero, 1), LossMode::kDefault) == doctest::Approx(1.3863).epsilon(1e-4));
  CHECK(loss(std::span(&zero, 1), LossMode::kDefault) == doctest::Approx(2.0 * std::log(2.0)).epsilon(1e-14));

  std::vector<LossTerm> terms{{2.0, {-1.0, 0.5}, 0}, {-0.3, {1.2}, 1}};
  const double oracle = (softplus(-2.0) + softplus(-1.0) + softplus(0.5) + softplus(0.3) + softplus(1.2)) / 2.0;
  CHECK(loss(terms, LossMode::kDefault) == doctest::Approx(oracle).epsilon(1e-13));
  const double literal = (softplus(-2.0) + softplus(-2.0) + softplus(-0.5) + softplus(0.3) + softplus(0.2)) / 2.0;
  CHECK(loss(terms, LossMode::kPaperLiteral) == doctest::Approx(literal).epsilon(1e-13));
  CHECK(loss({}, LossMode::kDefault) == 0.0);
  CHECK(parse_loss_mode(loss_mode_name(LossMode::kPaperLiteral)) == LossMode::kPaperLiteral);
  CHECK_THROWS_AS(parse_loss_mode("hinge"), ConfigError);
}

TEST_CASE("negatives come from outside the full history") {
  auto ds = synth_dataset(3);
  Rng rng(1);
  for (ingest::UserIndex u = 0; u < ds.user_count(); ++u) {
    auto neg = sample_negatives(ds, u, 20, rng);
    CHECK(neg.size() == 20);
    for (auto j : neg) {
      CHECK(j < ds.item_count());
      for (const auto& e : ds.sequence(u)) CHECK(e.item != j);
    }
  }
  auto forced = forced_negatives_dataset();
  for (ingest::UserIndex u = 0; u < forced.user_count(); ++u)
    for (auto j : sample_negatives(forced, u, 5, rng)) CHECK(j == u);

  auto full = ingest::InteractionDataset::from_parts({"u"}, {"a", "b"}, {{{0, 1}, {1, 2}}}, false);
  CHECK_THROWS_AS(sample_negatives(full, 0, 1, rng), DataError);
}

TEST_CASE("training events are truncated to the latest max_len + 1") {
  std::vector<Event> s;
  for (int i = 0; i < 30; ++i) s.push_back({static_cast<ItemIndex>(i), kT0 + i * kDay});
  std::vector<std::string> items;
  for (int i = 0; i < 30; ++i) items.push_back("i" + std::to_string(i));
  auto ds = ingest::InteractionDataset::from_parts({"u"}, items, {s}, true);
  auto ev = training_events(ds, 0, 10);
  CHECK(ev.size() == 11);
  CHECK(ev.back().item == 27);  // 28 training events
  CHECK(ev.front().item == 17);
  CHECK(training_events(ds, 0, 100).size() == 28);
}

TEST_CASE("configuration validation") {
  TrainConfig c;
  CHECK_NOTHROW(c.validate());
  c.batch_size = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = TrainConfig{};
  c.lr = -1.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = TrainConfig{};
  c.negatives_per_positive = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = TrainConfig{};
  c.offset = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("zero learning rate leaves parameters unchanged") {
  auto ds = synth_dataset(4);
  auto mc = small_model();
  auto pt = popdyn::PopularityTable::build(ds, pop_for(mc));
  Rng rng(2);
  auto p = model::ModelParams<float>::init(mc, rng);
  const auto before = p.digest();
  TrainConfig tc;
  tc.lr = 0.0;
  Trainer tr(ds, pt, p.cast<float>(true), tc);
  auto st = tr.train_epoch();
  CHECK(st.positions > 0);
  CHECK(std::isfinite(st.loss));
  CHECK(tr.params().digest() == before);
}

TEST_CASE("full-batch training on forced negatives decreases the loss") {
  auto ds = forced_negatives_dataset();
  auto mc = small_model();
  mc.dropout = 0.0;
  auto pt = popdyn::PopularityTable::build(ds, pop_for(mc));
  Rng rng(3);
  TrainConfig tc;
  tc.batch_size = 64;
  tc.lr = 1e-3;
  tc.weight_decay = 0.0;
  Trainer tr(ds, pt, model::ModelParams<float>::init(mc, rng), tc);
  std::vector<double> losses;
  for (int e = 0; e < 5; ++e) {
    auto st = tr.train_epoch();
    CHECK(st.batches == 1);
    losses.push_back(st.loss);
  }
  for (std::size_t i = 1; i < losses.size(); ++i) CHECK(losses[i] < losses[i - 1]);
}

TEST_CASE("training is deterministic for a seed") {
  auto ds = synth_dataset(5);
  auto mc = small_model();
  auto pt = popdyn::PopularityTable::build(ds, pop_for(mc));
  TrainConfig tc;
  tc.seed = 11;
  tc.max_epochs = 2;
  tc.batch_size = 16;
  auto a = fit(ds, pt, mc, tc);
  auto b = fit(ds, pt, mc, tc);
  CHECK(a.best.digest() == b.best.digest());
  CHECK(a.curve.size() == b.curve.size());
  for (std::size_t i = 0; i < a.curve.size(); ++i) CHECK(a.curve[i].loss == b.curve[i].loss);

  tc.threads = 4;
  CHECK(fit(ds, pt, mc, tc).best.digest() == a.best.digest());
  tc.threads = 1;
  tc.seed = 12;
  CHECK(fit(ds, pt, mc, tc).best.digest() != a.best.digest());
}

TEST_CASE("early stopping edge cases") {
  auto ds = synth_dataset(6);
  auto mc = small_model();
  auto pt = popdyn::PopularityTable::build(ds, pop_for(mc));
  TrainConfig tc;
  tc.batch_size = 32;
  tc.patience = 0;
  tc.max_epochs = 5;
  auto one = fit(ds, pt, mc, tc);
  CHECK(one.curve.size() == 1);
  CHECK(one.best_epoch == 1);

  tc.max_epochs = 0;
  auto none = fit(ds, pt, mc, tc);
  CHECK(none.curve.empty());
  CHECK(none.best_epoch == 0);
  Rng init = make_stream(tc.seed, "init");
  CHECK(none.best.digest() == model::ModelParams<float>::init(mc, init).digest());

  tc.max_epochs = 6;
  tc.patience = 2;
  auto fr = fit(ds, pt, mc, tc);
  CHECK(fr.curve.size() <= 6);
  CHECK(fr.best_epoch >= 1);
  double best = -1;
  for (const auto& cp : fr.curve) best = std::max(best, cp.val_ndcg10);
  CHECK(fr.best_val_ndcg10 == best);
  if (fr.curve.size() < 6) CHECK(fr.curve.size() - fr.best_epoch == 2);
  CHECK(fr.curve_json().at("epochs").size() == fr.curve.size());
  CHECK(fr.curve_json().at("best_epoch") == fr.best_epoch);
}
