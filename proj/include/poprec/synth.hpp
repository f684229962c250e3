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

// Synthetic interaction logs with planted item life cycles, used as the
// substrate for learning-signal and transfer experiments.

#include <cstdint>
#include <string>
#include <vector>

#include "poprec/ingest.hpp"

namespace poprec::synth {

enum class Family : std::uint8_t {
  kRising,    // logistic ramp from a random onset
  kDecaying,  // released at a random time, then exponential decay
  kCyclic,    // sinusoidal season
  kFlat,      // constant
};

struct ItemCurve {
  Family family = Family::kFlat;
  double scale = 1.0;
  double t0 = 0.0;     // onset / release / phase, in days
  double width = 1.0;  // ramp width / decay constant / period, in days

  // Unnormalised hazard at `day` days after the start.
  double hazard(double day) const;
};

struct SynthConfig {
  std::size_t users = 2000;
  std::size_t items = 500;
  std::int64_t start = 1577836800;  // 2020-01-01T00:00:00Z
  std::int64_t horizon_days = 728;
  std::size_t min_events = 8;
  std::size_t max_events = 30;
  // Probability that a draw follows current item hazard rather than uniform noise.
  double trend_strength = 0.8;
  // Relative family frequencies: rising, decaying, cyclic, flat.
  double w_rising = 0.2;
  double w_decaying = 0.6;
  double w_cyclic = 0.2;
  double w_flat = 0.0;
  // When non-empty, used verbatim instead of drawing families; `items` must match.
  std::vector<ItemCurve> curves;

  void validate() const;
};

struct SynthData {
  ingest::InteractionDataset dataset;  // unsplit
  std::vector<ItemCurve> curves;       // by item index
};

// Ids carry a seed-derived prefix, so datasets drawn with different seeds
// share no user or item id.
SynthData generate(const SynthConfig& cfg, std::uint64_t seed);

}  // namespace poprec::synth
