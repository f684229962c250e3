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

#include "poprec/encoders.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "poprec/common.hpp"

namespace poprec::encoders {

namespace {

template <class T>
void encode_into(double percentile, std::span<T> out) {
  const std::size_t k = out.size();
  if (k < 2) throw ConfigError("percentile encoding needs at least 2 basis points");
  if (!(percentile >= 0.0 && percentile <= 100.0)) {
    if (!(percentile >= -1e-9 && percentile <= 100.0 + 1e-9)) {
      warn("percentile " + std::to_string(percentile) + " outside [0, 100]; clamped");
    }
    percentile = std::isnan(percentile) ? 0.0 : std::clamp(percentile, 0.0, 100.0);
  }
  std::fill(out.begin(), out.end(), T(0));
  const double scaled = percentile * static_cast<double>(k - 1) / 100.0;
  const double lower = std::floor(scaled);
  const double frac = scaled - lower;
  const auto idx = static_cast<std::size_t>(lower);
  if (idx >= k - 1) {
    out[k - 1] = T(1);
    return;
  }
  out[idx] = static_cast<T>(1.0 - frac);
  out[idx + 1] = static_cast<T>(frac);
}

}  // namespace

void encode_percentile(double percentile, std::span<float> out) { encode_into(percentile, out); }
void encode_percentile(double percentile, std::span<double> out) { encode_into(percentile, out); }

std::vector<double> encode_percentile(double percentile, std::size_t k) {
  std::vector<double> v(k);
  encode_into(percentile, std::span<double>(v));
  return v;
}

SinusoidTable::SinusoidTable(std::size_t length, std::size_t dim)
    : length_(length), dim_(dim), values_(length * dim) {
  const double base = static_cast<double>(length);
  for (std::size_t i = 0; i < length; ++i) {
    for (std::size_t j = 0; 2 * j < dim; ++j) {
      const double angle = static_cast<double>(i) / std::pow(base, 2.0 * static_cast<double>(j) / static_cast<double>(dim));
      values_[i * dim + 2 * j] = std::sin(angle);
      values_[i * dim + 2 * j + 1] = std::cos(angle);
    }
  }
}

SinusoidTable build_sinusoid_table(std::size_t length, std::size_t dim) {
  if (length == 0) throw ConfigError("sinusoid table needs length >= 1");
  if (dim == 0 || dim % 2 != 0) throw ConfigError("sinusoid table needs an even dimension, got " + std::to_string(dim));
  return SinusoidTable(length, dim);
}

std::vector<std::size_t> rank_intervals(std::span<const std::int64_t> timestamps, std::size_t valid_len) {
  const std::size_t len = timestamps.size();
  std::vector<std::size_t> ranks(len, 0);
  if (valid_len < 2) return ranks;
  const std::size_t first = len - valid_len;
  std::vector<std::size_t> pos(valid_len - 1);
  std::iota(pos.begin(), pos.end(), first + 1);
  auto gap = [&](std::size_t p) { return timestamps[p] - timestamps[p - 1]; };
  std::stable_sort(pos.begin(), pos.end(), [&](std::size_t a, std::size_t b) { return gap(a) < gap(b); });
  for (std::size_t r = 0; r < pos.size(); ++r) ranks[pos[r]] = r;
  return ranks;
}

}  // namespace poprec::encoders
