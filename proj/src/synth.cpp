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

#include "poprec/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "poprec/common.hpp"

namespace poprec::synth {

void SynthConfig::validate() const {
  if (users == 0 || items == 0) throw ConfigError("synthetic spec needs at least one user and one item");
  if (horizon_days <= 0) throw ConfigError("synthetic horizon must be positive");
  if (min_events == 0 || min_events > max_events) throw ConfigError("synthetic event counts need 1 <= min <= max");
  if (!(trend_strength >= 0.0 && trend_strength <= 1.0)) throw ConfigError("trend strength must lie in [0, 1]");
  if (w_rising < 0 || w_decaying < 0 || w_cyclic < 0 || w_flat < 0 ||
      w_rising + w_decaying + w_cyclic + w_flat <= 0) {
    throw ConfigError("family weights must be non-negative with a positive sum");
  }
  if (!curves.empty() && curves.size() != items) throw ConfigError("explicit curves must cover every item");
}

double ItemCurve::hazard(double day) const {
  switch (family) {
    case Family::kRising:
      return scale / (1.0 + std::exp(-(day - t0) / width));
    case Family::kDecaying:
      return day < t0 ? 0.0 : scale * std::exp(-(day - t0) / width);
    case Family::kCyclic: {
      const double s = 0.5 * (1.0 + std::sin(2.0 * std::numbers::pi * (day - t0) / width));
      return scale * s * s;
    }
    case Family::kFlat:
      return scale;
  }
  return 0.0;
}

SynthData generate(const SynthConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  const double horizon = static_cast<double>(cfg.horizon_days);
  const std::string prefix = "s" + std::to_string(seed) + "-";

  Rng item_rng = make_stream(seed, "synth-items");
  std::discrete_distribution<int> family({cfg.w_rising, cfg.w_decaying, cfg.w_cyclic, cfg.w_flat});
  std::lognormal_distribution<double> scale(0.0, 0.5);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<ItemCurve> curves = cfg.curves;
  if (curves.empty()) curves.resize(cfg.items);
  for (auto& c : curves) {
    if (!cfg.curves.empty()) break;  // explicit curves
    c.family = static_cast<Family>(family(item_rng));
    c.scale = scale(item_rng);
    switch (c.family) {
      case Family::kRising:
        c.t0 = horizon * unit(item_rng);
        c.width = 7.0 + 23.0 * unit(item_rng);
        break;
      case Family::kDecaying:
        c.t0 = -60.0 + (horizon + 60.0) * unit(item_rng);
        c.width = 7.0 + 28.0 * unit(item_rng);
        break;
      case Family::kCyclic:
        c.width = 60.0 + 120.0 * unit(item_rng);
        c.t0 = c.width * unit(item_rng);
        break;
      case Family::kFlat:
        break;
    }
  }

  std::vector<std::string> item_ids(cfg.items), user_ids(cfg.users);
  for (std::size_t j = 0; j < cfg.items; ++j) item_ids[j] = prefix + "i" + std::to_string(j);
  for (std::size_t u = 0; u < cfg.users; ++u) user_ids[u] = prefix + "u" + std::to_string(u);

  const auto horizon_s = cfg.horizon_days * 86400;
  std::vector<std::vector<ingest::Event>> sequences(cfg.users);
  std::vector<double> weight(cfg.items);
  for (std::size_t u = 0; u < cfg.users; ++u) {
    Rng rng = make_stream(seed, "synth-user", u);
    std::uniform_int_distribution<std::size_t> count(cfg.min_events, cfg.max_events);
    std::uniform_int_distribution<std::int64_t> when(0, horizon_s - 1);
    const std::size_t n = std::min(count(rng), cfg.items);
    std::vector<std::int64_t> times(n);
    for (auto& t : times) t = when(rng);
    std::sort(times.begin(), times.end());

    std::vector<std::uint8_t> used(cfg.items, 0);
    auto& seq = sequences[u];
    for (std::int64_t t : times) {
      const double day = static_cast<double>(t) / 86400.0;
      const bool trend = unit(rng) < cfg.trend_strength;
      double total = 0.0;
      for (std::size_t j = 0; j < cfg.items; ++j) {
        weight[j] = used[j] ? 0.0 : (trend ? curves[j].hazard(day) : 1.0);
        total += weight[j];
      }
      if (!(total > 0.0)) {
        for (std::size_t j = 0; j < cfg.items; ++j) weight[j] = used[j] ? 0.0 : 1.0;
        total = static_cast<double>(cfg.items - seq.size());
      }
      double r = unit(rng) * total;
      std::size_t pick = cfg.items;
      for (std::size_t j = 0; j < cfg.items; ++j) {
        if (weight[j] <= 0.0) continue;
        pick = j;
        r -= weight[j];
        if (r < 0.0) break;
      }
      used[pick] = 1;
      seq.push_back(ingest::Event{static_cast<ingest::ItemIndex>(pick), cfg.start + t});
    }
  }

  SynthData out;
  out.dataset = ingest::InteractionDataset::from_parts(std::move(user_ids), std::move(item_ids), std::move(sequences),
                                                       false);
  out.curves = std::move(curves);
  return out;
}

}  // namespace poprec::synth
