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
#include <set>

#include "poprec/common.hpp"
#include "poprec/synth.hpp"

using namespace poprec;
using namespace poprec::synth;

namespace {

constexpr std::int64_t kWeek = 7 * 86400;

SynthConfig small() {
  SynthConfig c;
  c.users = 100;
  c.items = 40;
  c.horizon_days = 140;
  c.min_events = 4;
  c.max_events = 9;
  return c;
}

}  // namespace

TEST_CASE("degenerate configurations are rejected") {
  auto c = small();
  c.users = 0;
  CHECK_THROWS_AS(generate(c, 1), ConfigError);
  c = small();
  c.items = 0;
  CHECK_THROWS_AS(generate(c, 1), ConfigError);
  c = small();
  c.trend_strength = 1.5;
  CHECK_THROWS_AS(generate(c, 1), ConfigError);
  c = small();
  c.min_events = 10;
  c.max_events = 5;
  CHECK_THROWS_AS(generate(c, 1), ConfigError);
  c = small();
  c.items = 5;
  c.min_events = c.max_events = 9;  // capped by the catalog, no repeats
  auto capped = generate(c, 1).dataset;
  for (ingest::UserIndex u = 0; u < capped.user_count(); ++u) CHECK(capped.sequence(u).size() == 5);
  c = small();
  c.w_rising = c.w_decaying = c.w_cyclic = c.w_flat = 0.0;
  CHECK_THROWS_AS(generate(c, 1), ConfigError);
  c = small();
  c.curves.resize(3);
  CHECK_THROWS_AS(generate(c, 1), ConfigError);
}

TEST_CASE("same seed gives an identical dataset") {
  auto a = generate(small(), 7), b = generate(small(), 7);
  CHECK(a.dataset == b.dataset);
  CHECK(a.dataset.fingerprint() == b.dataset.fingerprint());
  CHECK(a.dataset.fingerprint() != generate(small(), 8).dataset.fingerprint());
}

TEST_CASE("different seeds give id-disjoint, statistically matched datasets") {
  auto a = generate(small(), 1).dataset, b = generate(small(), 2).dataset;
  std::set<std::string> ia(a.item_ids().begin(), a.item_ids().end());
  for (const auto& id : b.item_ids()) CHECK(ia.count(id) == 0);
  std::set<std::string> ua(a.user_ids().begin(), a.user_ids().end());
  for (const auto& id : b.user_ids()) CHECK(ua.count(id) == 0);
  CHECK(a.user_count() == b.user_count());
  CHECK(std::fabs(a.stats().avg_length - b.stats().avg_length) < 1.0);
}

TEST_CASE("generated sequences respect the configuration") {
  auto c = small();
  auto d = generate(c, 3);
  const auto& ds = d.dataset;
  CHECK(d.curves.size() == c.items);
  for (ingest::UserIndex u = 0; u < ds.user_count(); ++u) {
    auto s = ds.sequence(u);
    CHECK(s.size() >= c.min_events);
    CHECK(s.size() <= c.max_events);
    std::set<ingest::ItemIndex> items;
    for (std::size_t i = 0; i < s.size(); ++i) {
      items.insert(s[i].item);
      CHECK(s[i].timestamp >= c.start);
      CHECK(s[i].timestamp < c.start + c.horizon_days * 86400);
      if (i > 0) CHECK(s[i].timestamp >= s[i - 1].timestamp);
    }
    CHECK(items.size() == s.size());
  }
}

TEST_CASE("hazard curves have their shapes") {
  ItemCurve rising{Family::kRising, 1.0, 50.0, 10.0};
  CHECK(rising.hazard(0) < rising.hazard(50));
  CHECK(rising.hazard(50) < rising.hazard(100));
  ItemCurve decaying{Family::kDecaying, 2.0, 20.0, 10.0};
  CHECK(decaying.hazard(10) == 0.0);
  CHECK(decaying.hazard(20) > decaying.hazard(30));
  CHECK(decaying.hazard(30) == doctest::Approx(decaying.hazard(20) * std::exp(-1.0)));
  ItemCurve flat{Family::kFlat, 3.0, 0.0, 1.0};
  CHECK(flat.hazard(5) == 3.0);
  CHECK(flat.hazard(500) == 3.0);
  ItemCurve cyclic{Family::kCyclic, 1.0, 0.0, 100.0};
  CHECK(cyclic.hazard(7) == doctest::Approx(cyclic.hazard(107)));
  CHECK(cyclic.hazard(25) >= 0.0);
}

TEST_CASE("zero trend strength gives uniform item marginals") {
  SynthConfig c;
  c.users = 2000;
  c.items = 50;
  c.trend_strength = 0.0;
  c.min_events = 10;
  c.max_events = 20;
  auto ds = generate(c, 11).dataset;
  std::vector<double> counts(c.items, 0.0);
  double total = 0;
  for (ingest::UserIndex u = 0; u < ds.user_count(); ++u)
    for (const auto& e : ds.sequence(u)) counts[e.item] += 1, total += 1;
  const double p = 1.0 / static_cast<double>(c.items);
  const double expected = total * p, sd = std::sqrt(total * p * (1 - p));
  double chi2 = 0;
  for (double x : counts) {
    CHECK(std::fabs(x - expected) < 5 * sd);
    chi2 += (x - expected) * (x - expected) / expected;
  }
  // chi-square, 49 degrees of freedom: the 0.999 quantile is 85.35
  CHECK(chi2 < 85.35);
}

TEST_CASE("a rising-hazard item gains fine-period counts in expectation") {
  SynthConfig c;
  c.users = 60;
  c.items = 20;
  c.horizon_days = 140;
  c.min_events = 3;
  c.max_events = 6;
  c.trend_strength = 1.0;
  c.curves.assign(c.items, ItemCurve{Family::kFlat, 1.0, 0.0, 1.0});
  c.curves[0] = ItemCurve{Family::kRising, 8.0, 70.0, 20.0};
  const std::size_t periods = 20, runs = 1000;
  std::vector<double> sum(periods, 0.0), sumsq(periods, 0.0);
  for (std::size_t r = 0; r < runs; ++r) {
    auto ds = generate(c, 1000 + r).dataset;
    std::vector<double> cnt(periods, 0.0);
    for (ingest::UserIndex u = 0; u < ds.user_count(); ++u)
      for (const auto& e : ds.sequence(u))
        if (e.item == 0) cnt[static_cast<std::size_t>((e.timestamp - c.start) / kWeek)] += 1;
    for (std::size_t f = 0; f < periods; ++f) sum[f] += cnt[f], sumsq[f] += cnt[f] * cnt[f];
  }
  std::vector<double> mean(periods), se(periods);
  for (std::size_t f = 0; f < periods; ++f) {
    mean[f] = sum[f] / runs;
    se[f] = std::sqrt(std::max(0.0, sumsq[f] / runs - mean[f] * mean[f]) / runs);
  }
  for (std::size_t f = 1; f < periods; ++f) {
    CAPTURE(f);
    CHECK(mean[f] >= mean[f - 1] - 4.0 * std::hypot(se[f], se[f - 1]));
  }
  CHECK(mean.back() > 3.0 * mean.front());
}
