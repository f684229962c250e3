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

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>

#include "poprec/common.hpp"
#include "poprec/eval.hpp"
#include "poprec/synth.hpp"

using namespace poprec;
using namespace poprec::eval;
using ingest::Event;
using ingest::ItemIndex;

namespace {

ingest::InteractionDataset synth_dataset(std::uint64_t seed, std::size_t users = 60, std::size_t items = 150) {
  synth::SynthConfig c;
  c.users = users;
  c.items = items;
  c.min_events = 5;
  c.max_events = 10;
  return ingest::build_split(synth::generate(c, seed).dataset);
}

ingest::InteractionDataset by_name(const std::vector<std::pair<std::string, std::vector<std::pair<std::string, std::int64_t>>>>& users) {
  std::vector<ingest::Interaction> rows;
  for (const auto& [u, evs] : users)
    for (const auto& [i, t] : evs) rows.push_back({u, i, t, std::nullopt});
  return ingest::build_split(ingest::InteractionDataset::from_interactions(rows));
}

// Sort candidate indices by score descending, id ascending, and locate index 0.
std::size_t oracle_rank(const std::vector<double>& s, const std::vector<std::string>& ids) {
  std::vector<std::size_t> idx(s.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    if (s[a] != s[b]) return s[a] > s[b];
    return ids[a] < ids[b];
  });
  return static_cast<std::size_t>(std::find(idx.begin(), idx.end(), 0) - idx.begin()) + 1;
}

Scorer random_scorer(std::uint64_t seed) {
  return [seed](ingest::UserIndex u, std::span<const Event>, const CandidateSet& c) {
    Rng rng = make_stream(seed, "test-scores", u);
    std::uniform_int_distribution<int> d(0, 20);  // coarse values force ties
    std::vector<double> s(c.items.size());
    for (auto& x : s) x = d(rng) / 4.0;
    return s;
  };
}

}  // namespace

TEST_CASE("per-user metric contributions") {
  std::vector<std::size_t> r1{1}, r3{3}, r11{11};
  CHECK(ndcg_at(r1, 10) == 1.0);
  CHECK(ndcg_at(r3, 10) == 0.5);
  CHECK(recall_at(r11, 10) == 0.0);
  CHECK(ndcg_at(r11, 10) == 0.0);
  std::vector<std::size_t> mixed{1, 3, 11, 10};
  CHECK(recall_at(mixed, 10) == 0.75);
  CHECK(ndcg_at(mixed, 10) == doctest::Approx((1.0 + 0.5 + 1.0 / std::log2(11.0)) / 4.0).epsilon(1e-15));
  CHECK(recall_at({}, 10) == 0.0);
}

TEST_CASE("metrics match a brute-force sort-and-count oracle") {
  Rng rng(42);
  std::uniform_int_distribution<int> users_d(1, 10), cands_d(2, 20), score_d(0, 6), id_d(0, 999);
  for (int inst = 0; inst < 200; ++inst) {
    const int users = users_d(rng);
    std::vector<std::size_t> ranks;
    std::vector<std::size_t> oracle;
    for (int u = 0; u < users; ++u) {
      const int n = cands_d(rng);
      std::vector<double> s(n);
      std::vector<std::string> ids(n);
      for (int i = 0; i < n; ++i) {
        s[i] = score_d(rng) * 0.5;
        ids[i] = "c" + std::to_string(id_d(rng)) + "-" + std::to_string(i);
      }
      ranks.push_back(rank_of_first(s, ids));
      oracle.push_back(oracle_rank(s, ids));
    }
    CHECK(ranks == oracle);
    for (std::size_t k : {1u, 5u, 10u, 20u}) {
      double hits = 0, gain = 0;
      for (auto r : oracle)
        if (r <= k) {
          hits += 1;
          gain += 1.0 / std::log2(static_cast<double>(r) + 1.0);
        }
      CHECK(recall_at(ranks, k) == hits / users);
      CHECK(ndcg_at(ranks, k) == gain / users);
    }
  }
}

TEST_CASE("candidate sets exclude the full history and are deterministic") {
  auto ds = synth_dataset(1);
  EvalConfig cfg;
  cfg.seed = 5;
  auto a = build_candidates(ds, cfg, Target::kTest);
  auto b = build_candidates(ds, cfg, Target::kTest);
  CHECK(a.size() == ds.stats().eval_users);
  for (std::size_t s = 0; s < a.size(); ++s) {
    CHECK(a[s].items == b[s].items);
    const auto u = a[s].user;
    CHECK(a[s].items.front() == ds.test_event(u)->item);
    CHECK(a[s].timestamp == ds.test_event(u)->timestamp);
    CHECK(a[s].items.size() == 101);
    std::vector<ItemIndex> neg(a[s].items.begin() + 1, a[s].items.end());
    std::sort(neg.begin(), neg.end());
    CHECK(std::adjacent_find(neg.begin(), neg.end()) == neg.end());
    for (auto j : neg)
      for (const auto& e : ds.sequence(u)) CHECK(e.item != j);
  }
  cfg.seed = 6;
  CHECK(build_candidates(ds, cfg, Target::kTest)[0].items != a[0].items);
  auto v = build_candidates(ds, EvalConfig{}, Target::kValidation);
  for (const auto& c : v) CHECK(c.items.front() == ds.valid_event(c.user)->item);

  // Small catalogs give every unobserved item exactly once.
  Rng rng(1);
  auto few = sample_unobserved(ds, 0, 10000, rng);
  std::size_t seen = 0;
  std::vector<bool> in_hist(ds.item_count(), false);
  for (const auto& e : ds.sequence(0))
    if (!in_hist[e.item]) in_hist[e.item] = true, ++seen;
  CHECK(few.size() == ds.item_count() - seen);
}

TEST_CASE("history excludes the target and later events") {
  auto ds = by_name({{"u", {{"a", 1}, {"b", 2}, {"c", 3}, {"d", 4}}}});
  CHECK(history_for(ds, 0, Target::kTest).size() == 3);
  CHECK(history_for(ds, 0, Target::kValidation).size() == 2);
}

TEST_CASE("MostPop ranks by training counts") {
  std::vector<std::pair<std::string, std::vector<std::pair<std::string, std::int64_t>>>> users;
  for (int i = 0; i < 5; ++i) users.push_back({"pa" + std::to_string(i), {{"A", 1}, {"A", 2}}});
  for (int i = 0; i < 5; ++i) users.push_back({"pb" + std::to_string(i), {{"B", 1}}});
  users.push_back({"t1", {{"C", 1}, {"D", 2}, {"B", 3}}});
  users.push_back({"t2", {{"C", 1}, {"D", 2}, {"A", 3}}});
  auto ds = by_name(users);
  auto rep = mostpop_baseline(ds, EvalConfig{});
  REQUIRE(rep.users.size() == 2);
  CHECK(rep.users[0].user == "t1");
  CHECK(rep.users[0].candidates == std::vector<std::string>{"B", "A"});
  CHECK(rep.users[0].rank == 2);  // A:10 beats B:5
  CHECK(rep.users[1].rank == 1);
  CHECK(rep.recall.at(10) == 1.0);
  CHECK(rep.ndcg.at(10) == doctest::Approx((1.0 / std::log2(3.0) + 1.0) / 2.0).epsilon(1e-15));
}

TEST_CASE("run is ordered, thread-independent and bounded") {
  auto ds = synth_dataset(2);
  EvalConfig cfg;
  cfg.k_list = {1, 5, 10, 50};
  auto a = run(ds, cfg, Target::kTest, random_scorer(3), "random");
  cfg.threads = 4;
  auto b = run(ds, cfg, Target::kTest, random_scorer(3), "random");
  CHECK(encode_report(a) == encode_report(b));
  CHECK(std::is_sorted(a.users.begin(), a.users.end(), [](auto& x, auto& y) { return x.user < y.user; }));
  const double n = static_cast<double>(a.users.size());
  for (auto [k, r] : a.recall) {
    CHECK(r >= 0.0);
    CHECK(r <= 1.0);
    CHECK(a.ndcg.at(k) <= r);
    CHECK(std::fabs(r * n - std::round(r * n)) < 1e-9);
  }
  for (const auto& u : a.users) CHECK(u.rank == oracle_rank(u.scores, u.candidates));
  cfg.negatives = 0;
  CHECK_THROWS_AS(run(ds, cfg, Target::kTest, random_scorer(3), "random"), ConfigError);
}

TEST_CASE("interpolation boundaries and arithmetic") {
  auto ds = synth_dataset(3);
  EvalConfig cfg;
  auto ours = run(ds, cfg, Target::kTest, random_scorer(1), "ours");
  auto theirs = run(ds, cfg, Target::kTest, random_scorer(2), "theirs");
  auto ext = ScoreFile::from_report(theirs);
  CHECK(ext.size() == 101 * ours.users.size());

  auto one = interpolate(ours, ext, 1.0);
  auto zero = interpolate(ours, ext, 0.0);
  auto self = interpolate(ours, ScoreFile::from_report(ours), 0.5);
  for (std::size_t i = 0; i < ours.users.size(); ++i) {
    CHECK(one.users[i].rank == ours.users[i].rank);
    CHECK(one.users[i].scores == ours.users[i].scores);
    CHECK(zero.users[i].rank == theirs.users[i].rank);
    CHECK(zero.users[i].scores == theirs.users[i].scores);
    CHECK(self.users[i].rank == ours.users[i].rank);
    CHECK(self.users[i].scores == ours.users[i].scores);
  }
  CHECK(one.recall == ours.recall);
  CHECK(zero.ndcg == theirs.ndcg);

  EvalReport tiny;
  tiny.users.push_back({"u", "x", 1, {"x", "y"}, {0.8, 0.1}});
  tiny.compute_metrics();
  ScoreFile sf;
  sf.set("u", "x", 0.2);
  sf.set("u", "y", 0.9);
  auto mixed = interpolate(tiny, sf, 0.5);
  CHECK(mixed.users[0].scores[0] == 0.5);
  CHECK(mixed.users[0].rank == 1);  // 0.5 ties y's 0.5, id "x" < "y"

  ScoreFile partial;
  partial.set("u", "x", 0.2);
  try {
    interpolate(tiny, partial, 0.5);
    FAIL("expected a DataError");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("(u, y)") != std::string::npos);
  }
  CHECK_THROWS_AS(interpolate(tiny, sf, 1.5), ConfigError);
}

TEST_CASE("score files accept per-pair and report records") {
  auto sf = ScoreFile::parse(
      "{\"user\":\"u1\",\"item\":\"a\",\"score\":0.25}\n"
      "\n"
      "{\"user\":\"u2\",\"candidates\":[\"b\",\"c\"],\"scores\":[1.0,-2.0]}\n"
      "{\"summary\":true}\n");
  CHECK(sf.size() == 3);
  CHECK(*sf.find("u1", "a") == 0.25);
  CHECK(*sf.find("u2", "c") == -2.0);
  CHECK(sf.find("u2", "a") == nullptr);
  CHECK_THROWS_AS(ScoreFile::parse("{\"user\":\"u\"}\n"), DataError);
  CHECK_THROWS_AS(ScoreFile::parse("not json\n"), DataError);
}

TEST_CASE("reports round-trip") {
  auto ds = synth_dataset(4);
  EvalConfig cfg;
  cfg.k_list = {5, 10};
  cfg.seed = 9;
  auto rep = run(ds, cfg, Target::kTest, random_scorer(4), "random");
  rep.dataset_fingerprint = ds.fingerprint();
  const auto text = encode_report(rep);
  auto back = decode_report(text);
  CHECK(encode_report(back) == text);
  CHECK(back.recall == rep.recall);
  CHECK(back.config.seed == 9);
  CHECK(back.summary_json().at("candidate_seed") == 9);

  const auto path = (std::filesystem::temp_directory_path() / "poprec_eval_report.ndjson").string();
  save_report(path, rep);
  CHECK(encode_report(load_report(path)) == text);
  std::filesystem::remove(path);
}

TEST_CASE("leakage audit on a toy set") {
  auto ds = by_name({{"a", {{"X", 1}, {"f", 2}}},
                     {"b", {{"X", 5}, {"f", 6}}},
                     {"c", {{"X", 9}, {"f", 10}}},
                     {"t", {{"g", 1}, {"h", 2}, {"X", 4}}}});
  auto st = leakage_audit(ds);
  CHECK(st.test_items == 1);
  CHECK(st.mean_future_count == 2.0);
  CHECK(st.mean_future_proportion == doctest::Approx(2.0 / 3.0).epsilon(1e-15));

  auto past = by_name({{"a", {{"X", 1}, {"f", 2}}}, {"t", {{"g", 1}, {"h", 2}, {"X", 4}}}});
  CHECK(leakage_audit(past).mean_future_count == 0.0);
}

TEST_CASE("paired t-test and summary statistics") {
  // df = 2 has the closed form p = 1 - t / sqrt(2 + t^2).
  std::vector<double> a{1, 2, 4}, z{0, 0, 0};
  auto r = paired_t_test(a, z);
  CHECK(r.df == 2.0);
  CHECK(r.t == doctest::Approx(std::sqrt(7.0)).epsilon(1e-12));
  CHECK(r.p_value == doctest::Approx(1.0 - std::sqrt(7.0) / 3.0).epsilon(1e-10));
  auto same = paired_t_test(a, a);
  CHECK(same.p_value == 1.0);
  CHECK_THROWS_AS(paired_t_test(a, std::vector<double>{1, 2}), ShapeError);

  auto ms = mean_std(std::vector<double>{2, 4, 4, 4, 5, 5, 7, 9});
  CHECK(ms.mean == 5.0);
  CHECK(ms.stddev == doctest::Approx(std::sqrt(32.0 / 7.0)).epsilon(1e-14));
}

TEST_CASE("zero-shot refuses mismatched pipelines and keeps parameters frozen") {
  auto ds = synth_dataset(7, 40, 60);
  model::ModelConfig mc;
  mc.d = 8;
  mc.layers = 1;
  mc.max_len = 10;
  popdyn::PopularityConfig pc;
  auto pt = popdyn::PopularityTable::build(ds, pc);
  Rng rng(1);
  auto params = model::ModelParams<float>::init(mc, rng);
  model::CheckpointMeta meta;
  meta.model = mc;
  meta.pop = pc;
  const auto before = params.digest();
  auto rep = zero_shot(params, meta, ds, pt, EvalConfig{});
  CHECK(params.digest() == before);
  CHECK(rep.users.size() == ds.stats().eval_users);
  CHECK(rep.checkpoint_digest == before);

  auto bad = meta;
  bad.pop.gamma = 0.9;
  CHECK_THROWS_AS(zero_shot(params, bad, ds, pt, EvalConfig{}), ConfigError);
  CHECK(config_mismatches(bad, pc, 1).size() == 1);
  EvalConfig shifted;
  shifted.offset = 2;
  CHECK_THROWS_AS(zero_shot(params, meta, ds, pt, shifted), ConfigError);
}
