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

// Interaction-log ingestion: parsing, binarisation, per-user chronological
// sequences and the leave-one-out split.

#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace poprec::ingest {

using UserIndex = std::uint32_t;
using ItemIndex = std::uint32_t;

inline constexpr ItemIndex kPadItem = std::numeric_limits<ItemIndex>::max();

struct Interaction {
  std::string user;
  std::string item;
  std::int64_t timestamp = 0;
  std::optional<double> rating;  // dropped on binarisation
};

struct Event {
  ItemIndex item = 0;
  std::int64_t timestamp = 0;
  bool operator==(const Event&) const = default;
};

enum class Format { kCsv, kTsv };

struct ColumnMap {
  int user = 0;
  int item = 1;
  int timestamp = 2;
  int rating = -1;  // -1: no rating column
};

struct ParseOptions {
  Format format = Format::kCsv;
  // 0 selects the format's default (',' or '\t').
  char delimiter = 0;
  bool header = false;
  ColumnMap columns;
};

struct RowError {
  std::size_t line = 0;
  std::string message;
};

struct ParseReport {
  std::size_t rows_read = 0;
  std::size_t rows_kept = 0;
  std::vector<RowError> errors;
};

struct DatasetStats {
  std::size_t users = 0;
  std::size_t items = 0;
  std::size_t actions = 0;
  double avg_length = 0.0;
  double density = 0.0;  // actions / (users * items)
  std::size_t eval_users = 0;
};

// Immutable after construction. Users and items get dense indices in order
// of first appearance in the input; external reports always use the string
// ids.
class InteractionDataset {
 public:
  InteractionDataset() = default;

  // Sequences are stably sorted by timestamp, so ties keep input order.
  static InteractionDataset from_interactions(std::span<const Interaction> rows);
  static InteractionDataset from_parts(std::vector<std::string> user_ids, std::vector<std::string> item_ids,
                                       std::vector<std::vector<Event>> sequences, bool split);

  std::size_t user_count() const { return user_ids_.size(); }
  std::size_t item_count() const { return item_ids_.size(); }
  std::size_t interaction_count() const { return interactions_; }
  const std::string& user_id(UserIndex u) const { return user_ids_[u]; }
  const std::string& item_id(ItemIndex i) const { return item_ids_[i]; }
  const std::vector<std::string>& user_ids() const { return user_ids_; }
  const std::vector<std::string>& item_ids() const { return item_ids_; }
  std::optional<UserIndex> find_user(std::string_view id) const;
  std::optional<ItemIndex> find_item(std::string_view id) const;

  const std::vector<Event>& sequence(UserIndex u) const { return sequences_[u]; }

  bool has_split() const { return split_; }
  // Users with at least three interactions carry a validation and test item.
  bool is_eval_user(UserIndex u) const { return split_ && sequences_[u].size() >= 3; }
  std::span<const Event> train_events(UserIndex u) const;
  std::optional<Event> valid_event(UserIndex u) const;
  std::optional<Event> test_event(UserIndex u) const;

  std::int64_t min_timestamp() const { return min_ts_; }
  std::int64_t max_timestamp() const { return max_ts_; }

  DatasetStats stats() const;
  // SHA-256 of the canonical binary serialisation.
  std::string fingerprint() const;

  bool operator==(const InteractionDataset& o) const {
    return user_ids_ == o.user_ids_ && item_ids_ == o.item_ids_ && sequences_ == o.sequences_ && split_ == o.split_;
  }

 private:
  void index();

  std::vector<std::string> user_ids_;
  std::vector<std::string> item_ids_;
  std::vector<std::vector<Event>> sequences_;
  std::unordered_map<std::string, UserIndex> user_lookup_;
  std::unordered_map<std::string, ItemIndex> item_lookup_;
  bool split_ = false;
  std::size_t interactions_ = 0;
  std::int64_t min_ts_ = 0;
  std::int64_t max_ts_ = 0;
};

// Throws IoError when unreadable, DataError when no valid row remains.
// Row-level problems are skipped and listed in `report`.
InteractionDataset parse_log(const std::string& path, const ParseOptions& opts, ParseReport* report = nullptr);
InteractionDataset parse_log_text(std::string_view text, const ParseOptions& opts, ParseReport* report = nullptr);

// Per user with n >= 3: train = first n-2, valid = n-1, test = n.
InteractionDataset build_split(const InteractionDataset& ds);

struct UserSequence {
  std::vector<ItemIndex> items;  // kPadItem marks padding
  std::vector<std::int64_t> timestamps;
  std::size_t valid_len = 0;

  std::size_t length() const { return items.size(); }
  std::size_t first_valid() const { return items.size() - valid_len; }
};

// Keeps the latest `max_len` events; shorter histories are left-padded.
UserSequence to_fixed_sequence(std::span<const Event> history, std::size_t max_len);

enum class CacheFormat { kBinary, kNdjson };

std::vector<std::uint8_t> encode_binary(const InteractionDataset& ds);
InteractionDataset decode_binary(std::span<const std::uint8_t> bytes);
std::string encode_ndjson(const InteractionDataset& ds);
InteractionDataset decode_ndjson(std::string_view text);

void save_dataset(const InteractionDataset& ds, const std::string& path, CacheFormat fmt);
// Format is detected from the leading bytes.
InteractionDataset load_dataset(const std::string& path);

}  // namespace poprec::ingest
