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

// Fixed (non-learnable) encoders: percentile-basis vectors, the sinusoid
// table shared by time-interval and positional encodings, and per-user
// interval ranks.

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace poprec::encoders {

inline constexpr std::size_t kPercentileDim = 11;

// Linear interpolation of a percentile in [0, 100] between the two nearest
// of `out.size()` evenly spaced basis points (0, 10, ..., 100 for size 11).
// Out-of-range input is clamped.
void encode_percentile(double percentile, std::span<float> out);
void encode_percentile(double percentile, std::span<double> out);
std::vector<double> encode_percentile(double percentile, std::size_t k = kPercentileDim);

// L x d table: T[i][2j] = sin(i / L^(2j/d)), T[i][2j+1] = cos(i / L^(2j/d)).
class SinusoidTable {
 public:
  SinusoidTable() = default;
  SinusoidTable(std::size_t length, std::size_t dim);

  std::size_t length() const { return length_; }
  std::size_t dim() const { return dim_; }
  double at(std::size_t i, std::size_t j) const { return values_[i * dim_ + j]; }
  std::span<const double> row(std::size_t i) const { return {values_.data() + i * dim_, dim_}; }

 private:
  std::size_t length_ = 0;
  std::size_t dim_ = 0;
  std::vector<double> values_;
};

// Throws ConfigError for odd `dim` or zero `length`.
SinusoidTable build_sinusoid_table(std::size_t length, std::size_t dim);

// Rank of the gap preceding each valid position (smallest gap -> 0, ties by
// earlier position). The first valid position and padding get rank 0.
std::vector<std::size_t> rank_intervals(std::span<const std::int64_t> timestamps, std::size_t valid_len);

}  // namespace poprec::encoders
