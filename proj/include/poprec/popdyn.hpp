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

// Popularity dynamics: per-period interaction counts, discounted coarse
// popularity, cross-item percentiles, and the coarse/fine windows that stand
// in for item identity.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "poprec/encoders.hpp"
#include "poprec/ingest.hpp"

namespace poprec::popdyn {

inline constexpr std::int64_t kSecondsPerDay = 86400;

enum class BucketMode : std::uint8_t {
  // Fixed-width periods anchored at the dataset's first timestamp.
  kFixed = 0,
  // ISO weeks (Monday start, UTC) and calendar months.
  kCalendar = 1,
};

// Half-open periods [start, end). Period indices may be negative for
// timestamps before the origin.
struct TimeBucketing {
  BucketMode mode = BucketMode::kFixed;
  std::int64_t origin = 0;
  std::int64_t fine_len = 7 * kSecondsPerDay;
  std::int64_t coarse_ratio = 4;

  std::int64_t fine_period(std::int64_t t) const;
  std::int64_t coarse_period(std::int64_t t) const;
  // First timestamp after fine period f.
  std::int64_t fine_period_end(std::int64_t f) const;
  // Latest coarse period that has fully ended by the end of fine period f.
  std::int64_t last_coarse_ended_by(std::int64_t f) const { return coarse_period(fine_period_end(f)) - 1; }

  void validate() const;
  bool operator==(const TimeBucketing&) const = default;
};

struct PopularityConfig {
  double gamma = 0.5;
  std::int64_t fine_days = 7;
  std::int64_t coarse_fine_ratio = 4;
  BucketMode mode = BucketMode::kFixed;
  std::size_t k = encoders::kPercentileDim;
  std::size_t m = 12;
  std::size_t n = 4;
  // Rank never-seen items as zero-count members of the population.
  bool include_inactive = false;
  // Count only training-portion events (requires a split dataset).
  bool exclude_eval_events = false;

  void validate() const;
  std::size_t window_width() const { return k * (m + n); }
  bool operator==(const PopularityConfig&) const = default;
};

struct DynamicsWindow {
  std::vector<std::vector<double>> coarse;  // m vectors, oldest first
  std::vector<std::vector<double>> fine;    // n vectors, oldest first

  // coarse..., fine... concatenated.
  std::vector<double> flatten() const;
};

// Raw coarse counts -> a^t = gamma * a^{t-1} + c^t, per row of `periods`.
std::vector<double> discounted_coarse(std::span<const std::uint32_t> counts, double gamma);

// Mid-rank percentile of every value within `values`:
// 100 * (#smaller + 0.5 * #ties excluding self) / max(1, N - 1).
std::vector<double> percentiles(std::span<const double> values);

class PopularityTable {
 public:
  PopularityTable() = default;

  static PopularityTable build(const ingest::InteractionDataset& ds, const PopularityConfig& cfg,
                               std::size_t threads = 1);

  const PopularityConfig& config() const { return cfg_; }
  const TimeBucketing& bucketing() const { return bucketing_; }
  const std::string& dataset_fingerprint() const { return fingerprint_; }
  std::size_t item_count() const { return items_; }
  std::size_t fine_periods() const { return fine_; }
  std::size_t coarse_periods() const { return coarse_; }

  std::uint32_t raw_fine(ingest::ItemIndex j, std::size_t f) const { return raw_fine_[j * fine_ + f]; }
  std::uint32_t raw_coarse(ingest::ItemIndex j, std::size_t c) const { return raw_coarse_[j * coarse_ + c]; }
  double discounted(ingest::ItemIndex j, std::size_t c) const { return discounted_[j * coarse_ + c]; }
  double pct_fine(ingest::ItemIndex j, std::size_t f) const { return pct_fine_[j * fine_ + f]; }
  double pct_coarse(ingest::ItemIndex j, std::size_t c) const { return pct_coarse_[j * coarse_ + c]; }
  // -1 when the item never occurs.
  std::int64_t first_fine(ingest::ItemIndex j) const { return first_fine_[j]; }
  std::int64_t first_coarse(ingest::ItemIndex j) const { return first_coarse_[j]; }

  // Window visible to a prediction at t_query: fine periods up to
  // fine_period(t_query) - offset and the coarse periods fully ended by then.
  // Periods before the origin, beyond the table, or before the item's first
  // interaction encode as zero vectors; unknown items are all zero.
  DynamicsWindow window(ingest::ItemIndex item, std::int64_t t_query, std::int64_t offset) const;
  template <class T>
  void fill_window(ingest::ItemIndex item, std::int64_t t_query, std::int64_t offset, std::span<T> out) const;

  std::vector<std::uint8_t> encode() const;
  static PopularityTable decode(std::span<const std::uint8_t> bytes);
  void save(const std::string& path) const;
  static PopularityTable load(const std::string& path);

  bool operator==(const PopularityTable&) const = default;

 private:
  PopularityConfig cfg_;
  TimeBucketing bucketing_;
  std::string fingerprint_;
  std::size_t items_ = 0;
  std::size_t fine_ = 0;
  std::size_t coarse_ = 0;
  std::vector<std::uint32_t> raw_fine_;
  std::vector<std::uint32_t> raw_coarse_;
  std::vector<double> discounted_;
  std::vector<double> pct_fine_;
  std::vector<double> pct_coarse_;
  std::vector<std::int64_t> first_fine_;
  std::vector<std::int64_t> first_coarse_;
};

extern template void PopularityTable::fill_window<float>(ingest::ItemIndex, std::int64_t, std::int64_t,
                                                         std::span<float>) const;
extern template void PopularityTable::fill_window<double>(ingest::ItemIndex, std::int64_t, std::int64_t,
                                                          std::span<double>) const;

}  // namespace poprec::popdyn
