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

#include "poprec/popdyn.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include "poprec/binio.hpp"
#include "poprec/common.hpp"
#include "poprec/parallel.hpp"

namespace poprec::popdyn {

namespace {

constexpr char kMagic[] = "PRPC";
constexpr std::uint32_t kVersion = 1;

std::int64_t floor_div(std::int64_t a, std::int64_t b) {
  std::int64_t q = a / b;
  if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
  return q;
}

std::int64_t month_index(std::int64_t t) {
  using namespace std::chrono;
  const sys_days day{days{floor_div(t, kSecondsPerDay)}};
  const year_month_day ymd{day};
  return static_cast<std::int64_t>(static_cast<int>(ymd.year())) * 12 +
         static_cast<std::int64_t>(static_cast<unsigned>(ymd.month())) - 1;
}

// Day number (since 1970-01-01) of the Monday starting t's ISO week.
std::int64_t monday_of(std::int64_t t) {
  const std::int64_t day = floor_div(t, kSecondsPerDay);
  const std::int64_t weekday = ((day + 3) % 7 + 7) % 7;  // 1970-01-01 was a Thursday
  return day - weekday;
}

}  // namespace

std::int64_t TimeBucketing::fine_period(std::int64_t t) const {
  if (mode == BucketMode::kCalendar) {
    return floor_div(t - monday_of(origin) * kSecondsPerDay, 7 * kSecondsPerDay);
  }
  return floor_div(t - origin, fine_len);
}

std::int64_t TimeBucketing::coarse_period(std::int64_t t) const {
  if (mode == BucketMode::kCalendar) return month_index(t) - month_index(origin);
  return floor_div(t - origin, fine_len * coarse_ratio);
}

std::int64_t TimeBucketing::fine_period_end(std::int64_t f) const {
  if (mode == BucketMode::kCalendar) return monday_of(origin) * kSecondsPerDay + (f + 1) * 7 * kSecondsPerDay;
  return origin + (f + 1) * fine_len;
}

void TimeBucketing::validate() const {
  if (fine_len <= 0) throw ConfigError("fine period length must be positive");
  if (coarse_ratio <= 0) throw ConfigError("coarse/fine ratio must be a positive integer");
}

void PopularityConfig::validate() const {
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw ConfigError("gamma must lie in [0, 1], got " + std::to_string(gamma));
  if (fine_days <= 0) throw ConfigError("--fine-days must be positive");
  if (coarse_fine_ratio <= 0) throw ConfigError("--coarse-fine-ratio must be positive");
  if (k < 2) throw ConfigError("percentile encoding size k must be at least 2");
  if (m == 0 && n == 0) throw ConfigError("window sizes m and n cannot both be zero");
}

std::vector<double> DynamicsWindow::flatten() const {
  std::vector<double> out;
  for (const auto& v : coarse) out.insert(out.end(), v.begin(), v.end());
  for (const auto& v : fine) out.insert(out.end(), v.begin(), v.end());
  return out;
}

std::vector<double> discounted_coarse(std::span<const std::uint32_t> counts, double gamma) {
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw ConfigError("gamma must lie in [0, 1], got " + std::to_string(gamma));
  std::vector<double> a(counts.size());
  double prev = 0.0;
  for (std::size_t t = 0; t < counts.size(); ++t) {
    prev = gamma * prev + static_cast<double>(counts[t]);
    a[t] = prev;
  }
  return a;
}

std::vector<double> percentiles(std::span<const double> values) {
  const std::size_t n = values.size();
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  const double denom = static_cast<double>(std::max<std::size_t>(1, n > 0 ? n - 1 : 0));
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto lo = std::lower_bound(sorted.begin(), sorted.end(), values[i]);
    auto hi = std::upper_bound(lo, sorted.end(), values[i]);
    const auto smaller = static_cast<double>(lo - sorted.begin());
    const auto ties = static_cast<double>(hi - lo - 1);
    out[i] = 100.0 * (smaller + 0.5 * ties) / denom;
  }
  return out;
}

PopularityTable PopularityTable::build(const ingest::InteractionDataset& ds, const PopularityConfig& cfg,
                                       std::size_t threads) {
  cfg.validate();
  if (ds.interaction_count() == 0) throw DataError("cannot build popularity table from an empty dataset");
  if (cfg.exclude_eval_events && !ds.has_split()) {
    throw ConfigError("excluding evaluation events requires a split dataset");
  }

  PopularityTable pt;
  pt.cfg_ = cfg;
  pt.bucketing_ = TimeBucketing{cfg.mode, ds.min_timestamp(), cfg.fine_days * kSecondsPerDay, cfg.coarse_fine_ratio};
  pt.bucketing_.validate();
  pt.fingerprint_ = ds.fingerprint();
  pt.items_ = ds.item_count();
  const auto& tb = pt.bucketing_;
  pt.fine_ = static_cast<std::size_t>(tb.fine_period(ds.max_timestamp()) + 1);
  pt.coarse_ = static_cast<std::size_t>(tb.coarse_period(ds.max_timestamp()) + 1);
  const std::size_t nf = pt.fine_, nc = pt.coarse_, ni = pt.items_;

  pt.raw_fine_.assign(ni * nf, 0);
  pt.raw_coarse_.assign(ni * nc, 0);
  pt.first_fine_.assign(ni, -1);
  pt.first_coarse_.assign(ni, -1);
  for (ingest::UserIndex u = 0; u < ds.user_count(); ++u) {
    auto events = cfg.exclude_eval_events ? ds.train_events(u) : std::span<const ingest::Event>(ds.sequence(u));
    for (const auto& e : events) {
      const auto f = static_cast<std::size_t>(tb.fine_period(e.timestamp));
      const auto c = static_cast<std::size_t>(tb.coarse_period(e.timestamp));
      ++pt.raw_fine_[e.item * nf + f];
      ++pt.raw_coarse_[e.item * nc + c];
      auto& ff = pt.first_fine_[e.item];
      auto& fc = pt.first_coarse_[e.item];
      if (ff < 0 || static_cast<std::int64_t>(f) < ff) ff = static_cast<std::int64_t>(f);
      if (fc < 0 || static_cast<std::int64_t>(c) < fc) fc = static_cast<std::int64_t>(c);
    }
  }

  pt.discounted_.assign(ni * nc, 0.0);
  parallel_for(ni, threads, [&](std::size_t j) {
    auto a = discounted_coarse(std::span<const std::uint32_t>(pt.raw_coarse_.data() + j * nc, nc), cfg.gamma);
    std::copy(a.begin(), a.end(), pt.discounted_.begin() + static_cast<std::ptrdiff_t>(j * nc));
  });

  // One percentile column per period over the items active by then.
  auto column = [&](std::size_t periods, std::size_t p, const std::vector<std::int64_t>& first,
                    auto value_of, std::vector<double>& out) {
    std::vector<std::size_t> members;
    std::vector<double> vals;
    for (std::size_t j = 0; j < ni; ++j) {
      const bool active = first[j] >= 0 && first[j] <= static_cast<std::int64_t>(p);
      if (active || cfg.include_inactive) {
        members.push_back(j);
        vals.push_back(active ? value_of(j) : 0.0);
      }
    }
    auto pct = percentiles(vals);
    for (std::size_t i = 0; i < members.size(); ++i) out[members[i] * periods + p] = pct[i];
  };
  pt.pct_fine_.assign(ni * nf, 0.0);
  pt.pct_coarse_.assign(ni * nc, 0.0);
  parallel_for(nf, threads, [&](std::size_t f) {
    column(nf, f, pt.first_fine_, [&](std::size_t j) { return static_cast<double>(pt.raw_fine_[j * nf + f]); },
           pt.pct_fine_);
  });
  parallel_for(nc, threads, [&](std::size_t c) {
    column(nc, c, pt.first_coarse_, [&](std::size_t j) { return pt.discounted_[j * nc + c]; }, pt.pct_coarse_);
  });
  return pt;
}

template <class T>
void PopularityTable::fill_window(ingest::ItemIndex item, std::int64_t t_query, std::int64_t offset,
                                  std::span<T> out) const {
  const std::size_t k = cfg_.k, m = cfg_.m, n = cfg_.n;
  if (out.size() != k * (m + n)) {
    throw ShapeError("window buffer of " + std::to_string(out.size()) + " for width " + std::to_string(k * (m + n)));
  }
  std::fill(out.begin(), out.end(), T(0));
  if (offset < 1) throw ConfigError("prediction offset must be at least one fine period");
  if (item >= items_) return;

  const std::int64_t f = bucketing_.fine_period(t_query) - offset;
  const std::int64_t c = bucketing_.last_coarse_ended_by(f);
  for (std::size_t s = 0; s < m; ++s) {
    const std::int64_t p = c - static_cast<std::int64_t>(m) + 1 + static_cast<std::int64_t>(s);
    if (p < 0 || p >= static_cast<std::int64_t>(coarse_) || first_coarse_[item] < 0 || first_coarse_[item] > p) continue;
    encoders::encode_percentile(pct_coarse_[item * coarse_ + static_cast<std::size_t>(p)], out.subspan(s * k, k));
  }
  for (std::size_t s = 0; s < n; ++s) {
    const std::int64_t p = f - static_cast<std::int64_t>(n) + 1 + static_cast<std::int64_t>(s);
    if (p < 0 || p >= static_cast<std::int64_t>(fine_) || first_fine_[item] < 0 || first_fine_[item] > p) continue;
    encoders::encode_percentile(pct_fine_[item * fine_ + static_cast<std::size_t>(p)], out.subspan((m + s) * k, k));
  }
}

template void PopularityTable::fill_window<float>(ingest::ItemIndex, std::int64_t, std::int64_t,
                                                  std::span<float>) const;
template void PopularityTable::fill_window<double>(ingest::ItemIndex, std::int64_t, std::int64_t,
                                                   std::span<double>) const;

DynamicsWindow PopularityTable::window(ingest::ItemIndex item, std::int64_t t_query, std::int64_t offset) const {
  std::vector<double> flat(cfg_.window_width());
  fill_window<double>(item, t_query, offset, flat);
  DynamicsWindow w;
  const std::size_t k = cfg_.k;
  for (std::size_t s = 0; s < cfg_.m; ++s) w.coarse.emplace_back(flat.begin() + static_cast<std::ptrdiff_t>(s * k), flat.begin() + static_cast<std::ptrdiff_t>((s + 1) * k));
  for (std::size_t s = 0; s < cfg_.n; ++s) {
    const std::size_t b = (cfg_.m + s) * k;
    w.fine.emplace_back(flat.begin() + static_cast<std::ptrdiff_t>(b), flat.begin() + static_cast<std::ptrdiff_t>(b + k));
  }
  return w;
}

std::vector<std::uint8_t> PopularityTable::encode() const {
  binio::Writer w;
  w.bytes(std::string_view(kMagic, 4));
  w.u32(kVersion);
  w.f64(cfg_.gamma);
  w.i64(cfg_.fine_days);
  w.i64(cfg_.coarse_fine_ratio);
  w.u8(static_cast<std::uint8_t>(cfg_.mode));
  w.u32(static_cast<std::uint32_t>(cfg_.k));
  w.u32(static_cast<std::uint32_t>(cfg_.m));
  w.u32(static_cast<std::uint32_t>(cfg_.n));
  w.u8(cfg_.include_inactive ? 1 : 0);
  w.u8(cfg_.exclude_eval_events ? 1 : 0);
  w.i64(bucketing_.origin);
  w.i64(bucketing_.fine_len);
  w.str(fingerprint_);
  w.u64(items_);
  w.u64(fine_);
  w.u64(coarse_);
  for (std::size_t j = 0; j < items_; ++j) {
    w.i64(first_fine_[j]);
    w.i64(first_coarse_[j]);
    for (std::size_t f = 0; f < fine_; ++f) w.u32(raw_fine_[j * fine_ + f]);
    for (std::size_t c = 0; c < coarse_; ++c) w.u32(raw_coarse_[j * coarse_ + c]);
    for (std::size_t c = 0; c < coarse_; ++c) w.f64(discounted_[j * coarse_ + c]);
    for (std::size_t f = 0; f < fine_; ++f) w.f64(pct_fine_[j * fine_ + f]);
    for (std::size_t c = 0; c < coarse_; ++c) w.f64(pct_coarse_[j * coarse_ + c]);
  }
  return w.data();
}

PopularityTable PopularityTable::decode(std::span<const std::uint8_t> bytes) {
  binio::Reader r(std::vector<std::uint8_t>(bytes.begin(), bytes.end()));
  if (r.bytes(4) != std::string_view(kMagic, 4)) throw DataError("not a poprec popularity cache");
  if (r.u32() != kVersion) throw DataError("unsupported popularity cache version");
  PopularityTable pt;
  auto& cfg = pt.cfg_;
  cfg.gamma = r.f64();
  cfg.fine_days = r.i64();
  cfg.coarse_fine_ratio = r.i64();
  cfg.mode = static_cast<BucketMode>(r.u8());
  cfg.k = r.u32();
  cfg.m = r.u32();
  cfg.n = r.u32();
  cfg.include_inactive = r.u8() != 0;
  cfg.exclude_eval_events = r.u8() != 0;
  cfg.validate();
  pt.bucketing_ = TimeBucketing{cfg.mode, 0, 0, cfg.coarse_fine_ratio};
  pt.bucketing_.origin = r.i64();
  pt.bucketing_.fine_len = r.i64();
  pt.bucketing_.validate();
  pt.fingerprint_ = r.str();
  pt.items_ = r.u64();
  pt.fine_ = r.u64();
  pt.coarse_ = r.u64();
  const std::size_t per_item = 16 + 4 * (pt.fine_ + pt.coarse_) + 8 * (pt.fine_ + 2 * pt.coarse_);
  if (pt.items_ != 0 && r.remaining() / pt.items_ < per_item) throw DataError("popularity cache truncated");
  const std::size_t ni = pt.items_, nf = pt.fine_, nc = pt.coarse_;
  pt.raw_fine_.resize(ni * nf);
  pt.raw_coarse_.resize(ni * nc);
  pt.discounted_.resize(ni * nc);
  pt.pct_fine_.resize(ni * nf);
  pt.pct_coarse_.resize(ni * nc);
  pt.first_fine_.resize(ni);
  pt.first_coarse_.resize(ni);
  for (std::size_t j = 0; j < ni; ++j) {
    pt.first_fine_[j] = r.i64();
    pt.first_coarse_[j] = r.i64();
    for (std::size_t f = 0; f < nf; ++f) pt.raw_fine_[j * nf + f] = r.u32();
    for (std::size_t c = 0; c < nc; ++c) pt.raw_coarse_[j * nc + c] = r.u32();
    for (std::size_t c = 0; c < nc; ++c) pt.discounted_[j * nc + c] = r.f64();
    for (std::size_t f = 0; f < nf; ++f) pt.pct_fine_[j * nf + f] = r.f64();
    for (std::size_t c = 0; c < nc; ++c) pt.pct_coarse_[j * nc + c] = r.f64();
  }
  if (!r.at_end()) throw DataError("trailing bytes in popularity cache");
  return pt;
}

void PopularityTable::save(const std::string& path) const { binio::write_file(path, encode()); }

PopularityTable PopularityTable::load(const std::string& path) { return decode(binio::read_file(path)); }

}  // namespace poprec::popdyn
