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

#include "poprec/ingest.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <iterator>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "poprec/binio.hpp"
#include "poprec/common.hpp"

namespace poprec::ingest {

namespace {

constexpr char kBinaryMagic[] = "PRDS";
constexpr std::uint32_t kBinaryVersion = 1;
constexpr std::string_view kNdjsonFormat = "poprec-dataset";

// Splits one delimited line, honouring double-quoted fields ("" escapes a quote).
std::vector<std::string> split_fields(std::string_view line, char delim) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur.push_back(c);
      }
    } else if (c == '"' && cur.empty()) {
      quoted = true;
    } else if (c == delim) {
      out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  out.push_back(std::move(cur));
  return out;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::optional<std::int64_t> parse_int(std::string_view s) {
  s = trim(s);
  std::int64_t v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size() || s.empty()) return std::nullopt;
  return v;
}

std::optional<double> parse_real(std::string_view s) {
  s = trim(s);
  if (s.empty()) return std::nullopt;
  std::string tmp(s);
  char* end = nullptr;
  const double v = std::strtod(tmp.c_str(), &end);
  if (end != tmp.c_str() + tmp.size()) return std::nullopt;
  return v;
}

}  // namespace

InteractionDataset InteractionDataset::from_interactions(std::span<const Interaction> rows) {
  InteractionDataset ds;
  std::unordered_map<std::string, UserIndex> users;
  std::unordered_map<std::string, ItemIndex> items;
  for (const auto& r : rows) {
    auto [uit, unew] = users.try_emplace(r.user, static_cast<UserIndex>(ds.user_ids_.size()));
    if (unew) {
      ds.user_ids_.push_back(r.user);
      ds.sequences_.emplace_back();
    }
    auto [iit, inew] = items.try_emplace(r.item, static_cast<ItemIndex>(ds.item_ids_.size()));
    if (inew) ds.item_ids_.push_back(r.item);
    ds.sequences_[uit->second].push_back(Event{iit->second, r.timestamp});
  }
  for (auto& seq : ds.sequences_) {
    std::stable_sort(seq.begin(), seq.end(), [](const Event& a, const Event& b) { return a.timestamp < b.timestamp; });
  }
  ds.index();
  return ds;
}

InteractionDataset InteractionDataset::from_parts(std::vector<std::string> user_ids, std::vector<std::string> item_ids,
                                                  std::vector<std::vector<Event>> sequences, bool split) {
  if (user_ids.size() != sequences.size()) throw DataError("dataset: user/sequence count mismatch");
  InteractionDataset ds;
  ds.user_ids_ = std::move(user_ids);
  ds.item_ids_ = std::move(item_ids);
  ds.sequences_ = std::move(sequences);
  ds.split_ = split;
  for (const auto& seq : ds.sequences_) {
    for (std::size_t i = 0; i < seq.size(); ++i) {
      if (seq[i].item >= ds.item_ids_.size()) throw DataError("dataset: item index out of range");
      if (i > 0 && seq[i].timestamp < seq[i - 1].timestamp) throw DataError("dataset: sequence not chronological");
    }
  }
  ds.index();
  return ds;
}

void InteractionDataset::index() {
  user_lookup_.clear();
  item_lookup_.clear();
  for (std::size_t u = 0; u < user_ids_.size(); ++u) user_lookup_.emplace(user_ids_[u], static_cast<UserIndex>(u));
  for (std::size_t i = 0; i < item_ids_.size(); ++i) item_lookup_.emplace(item_ids_[i], static_cast<ItemIndex>(i));
  interactions_ = 0;
  min_ts_ = std::numeric_limits<std::int64_t>::max();
  max_ts_ = std::numeric_limits<std::int64_t>::min();
  for (const auto& seq : sequences_) {
    interactions_ += seq.size();
    for (const auto& e : seq) {
      min_ts_ = std::min(min_ts_, e.timestamp);
      max_ts_ = std::max(max_ts_, e.timestamp);
    }
  }
  if (interactions_ == 0) min_ts_ = max_ts_ = 0;
}

std::optional<UserIndex> InteractionDataset::find_user(std::string_view id) const {
  auto it = user_lookup_.find(std::string(id));
  if (it == user_lookup_.end()) return std::nullopt;
  return it->second;
}

std::optional<ItemIndex> InteractionDataset::find_item(std::string_view id) const {
  auto it = item_lookup_.find(std::string(id));
  if (it == item_lookup_.end()) return std::nullopt;
  return it->second;
}

std::span<const Event> InteractionDataset::train_events(UserIndex u) const {
  const auto& seq = sequences_[u];
  if (is_eval_user(u)) return std::span<const Event>(seq.data(), seq.size() - 2);
  return seq;
}

std::optional<Event> InteractionDataset::valid_event(UserIndex u) const {
  if (!is_eval_user(u)) return std::nullopt;
  return sequences_[u][sequences_[u].size() - 2];
}

std::optional<Event> InteractionDataset::test_event(UserIndex u) const {
  if (!is_eval_user(u)) return std::nullopt;
  return sequences_[u].back();
}

DatasetStats InteractionDataset::stats() const {
  DatasetStats s;
  s.users = user_count();
  s.items = item_count();
  s.actions = interactions_;
  s.avg_length = s.users ? static_cast<double>(s.actions) / static_cast<double>(s.users) : 0.0;
  s.density = (s.users && s.items) ? static_cast<double>(s.actions) / (static_cast<double>(s.users) * static_cast<double>(s.items)) : 0.0;
  for (UserIndex u = 0; u < s.users; ++u) s.eval_users += is_eval_user(u) ? 1 : 0;
  return s;
}

std::string InteractionDataset::fingerprint() const { return sha256_hex(encode_binary(*this)); }

InteractionDataset parse_log_text(std::string_view text, const ParseOptions& opts, ParseReport* report) {
  const char delim = opts.delimiter ? opts.delimiter : (opts.format == Format::kTsv ? '\t' : ',');
  const auto& cols = opts.columns;
  const int needed = std::max({cols.user, cols.item, cols.timestamp, cols.rating});
  if (cols.user < 0 || cols.item < 0 || cols.timestamp < 0) {
    throw ConfigError("column map must name user, item and timestamp columns");
  }

  ParseReport local;
  ParseReport& rep = report ? *report : local;
  rep = ParseReport{};
  std::vector<Interaction> rows;

  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (opts.header && line_no == 1) continue;
    if (trim(line).empty()) continue;
    ++rep.rows_read;

    auto fields = split_fields(line, delim);
    auto fail = [&](std::string msg) { rep.errors.push_back(RowError{line_no, std::move(msg)}); };
    if (static_cast<int>(fields.size()) <= needed) {
      fail("expected at least " + std::to_string(needed + 1) + " fields, got " + std::to_string(fields.size()));
      continue;
    }
    Interaction row;
    row.user = std::string(trim(fields[static_cast<std::size_t>(cols.user)]));
    row.item = std::string(trim(fields[static_cast<std::size_t>(cols.item)]));
    if (row.user.empty() || row.item.empty()) {
      fail("empty user or item id");
      continue;
    }
    auto ts = parse_int(fields[static_cast<std::size_t>(cols.timestamp)]);
    if (!ts) {
      fail("unparsable timestamp '" + fields[static_cast<std::size_t>(cols.timestamp)] + "'");
      continue;
    }
    if (*ts < 0) {
      fail("negative timestamp");
      continue;
    }
    row.timestamp = *ts;
    if (cols.rating >= 0) {
      row.rating = parse_real(fields[static_cast<std::size_t>(cols.rating)]);
      if (!row.rating) {
        fail("unparsable rating '" + fields[static_cast<std::size_t>(cols.rating)] + "'");
        continue;
      }
    }
    rows.push_back(std::move(row));
  }
  rep.rows_kept = rows.size();
  if (rows.empty()) throw DataError("no valid interaction rows");
  // Binarisation: every rated row is one implicit interaction; the rating
  // value plays no further role.
  return InteractionDataset::from_interactions(rows);
}

InteractionDataset parse_log(const std::string& path, const ParseOptions& opts, ParseReport* report) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path);
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_log_text(text, opts, report);
}

InteractionDataset build_split(const InteractionDataset& ds) {
  std::vector<std::vector<Event>> seqs;
  seqs.reserve(ds.user_count());
  for (UserIndex u = 0; u < ds.user_count(); ++u) seqs.push_back(ds.sequence(u));
  return InteractionDataset::from_parts(ds.user_ids(), ds.item_ids(), std::move(seqs), true);
}

UserSequence to_fixed_sequence(std::span<const Event> history, std::size_t max_len) {
  if (max_len == 0) throw ConfigError("sequence length L must be positive");
  UserSequence s;
  s.items.assign(max_len, kPadItem);
  s.timestamps.assign(max_len, 0);
  const std::size_t keep = std::min(history.size(), max_len);
  const std::size_t src = history.size() - keep;
  const std::size_t dst = max_len - keep;
  for (std::size_t i = 0; i < keep; ++i) {
    s.items[dst + i] = history[src + i].item;
    s.timestamps[dst + i] = history[src + i].timestamp;
  }
  s.valid_len = keep;
  return s;
}

std::vector<std::uint8_t> encode_binary(const InteractionDataset& ds) {
  binio::Writer w;
  w.bytes(std::string_view(kBinaryMagic, 4));
  w.u32(kBinaryVersion);
  w.u8(ds.has_split() ? 1 : 0);
  w.u64(ds.user_count());
  w.u64(ds.item_count());
  for (const auto& id : ds.item_ids()) w.str(id);
  for (UserIndex u = 0; u < ds.user_count(); ++u) {
    w.str(ds.user_id(u));
    const auto& seq = ds.sequence(u);
    w.u64(seq.size());
    for (const auto& e : seq) {
      w.u32(e.item);
      w.i64(e.timestamp);
    }
  }
  return w.data();
}

InteractionDataset decode_binary(std::span<const std::uint8_t> bytes) {
  binio::Reader r(std::vector<std::uint8_t>(bytes.begin(), bytes.end()));
  if (r.bytes(4) != std::string_view(kBinaryMagic, 4)) throw DataError("not a poprec dataset cache");
  if (r.u32() != kBinaryVersion) throw DataError("unsupported dataset cache version");
  const bool split = r.u8() != 0;
  const std::uint64_t nu = r.u64();
  const std::uint64_t ni = r.u64();
  std::vector<std::string> items(ni);
  for (auto& id : items) id = r.str();
  std::vector<std::string> users(nu);
  std::vector<std::vector<Event>> seqs(nu);
  for (std::uint64_t u = 0; u < nu; ++u) {
    users[u] = r.str();
    const std::uint64_t n = r.u64();
    if (n > r.remaining() / 12) throw DataError("dataset cache truncated");
    seqs[u].resize(n);
    for (auto& e : seqs[u]) {
      e.item = r.u32();
      e.timestamp = r.i64();
    }
  }
  if (!r.at_end()) throw DataError("trailing bytes in dataset cache");
  return InteractionDataset::from_parts(std::move(users), std::move(items), std::move(seqs), split);
}

std::string encode_ndjson(const InteractionDataset& ds) {
  using nlohmann::json;
  std::string out;
  json header = {{"format", kNdjsonFormat}, {"version", kBinaryVersion}, {"split", ds.has_split()},
                 {"users", ds.user_count()}, {"items", ds.item_ids()}};
  out += header.dump();
  out += '\n';
  for (UserIndex u = 0; u < ds.user_count(); ++u) {
    json events = json::array();
    for (const auto& e : ds.sequence(u)) events.push_back(json::array({ds.item_id(e.item), e.timestamp}));
    out += json{{"user", ds.user_id(u)}, {"events", std::move(events)}}.dump();
    out += '\n';
  }
  return out;
}

InteractionDataset decode_ndjson(std::string_view text) {
  using nlohmann::json;
  std::istringstream in{std::string(text)};
  std::string line;
  if (!std::getline(in, line)) throw DataError("empty dataset file");
  json header;
  try {
    header = json::parse(line);
  } catch (const json::exception& e) {
    throw DataError(std::string("dataset header: ") + e.what());
  }
  if (header.value("format", "") != kNdjsonFormat) throw DataError("not a poprec NDJSON dataset");
  auto items = header.at("items").get<std::vector<std::string>>();
  std::unordered_map<std::string, ItemIndex> lookup;
  for (std::size_t i = 0; i < items.size(); ++i) lookup.emplace(items[i], static_cast<ItemIndex>(i));
  const auto nu = header.at("users").get<std::size_t>();
  std::vector<std::string> users;
  std::vector<std::vector<Event>> seqs;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    json rec;
    try {
      rec = json::parse(line);
    } catch (const json::exception& e) {
      throw DataError(std::string("dataset record: ") + e.what());
    }
    users.push_back(rec.at("user").get<std::string>());
    auto& seq = seqs.emplace_back();
    for (const auto& ev : rec.at("events")) {
      auto it = lookup.find(ev.at(0).get<std::string>());
      if (it == lookup.end()) throw DataError("dataset record references unknown item");
      seq.push_back(Event{it->second, ev.at(1).get<std::int64_t>()});
    }
  }
  if (users.size() != nu) throw DataError("dataset user count does not match header");
  return InteractionDataset::from_parts(std::move(users), std::move(items), std::move(seqs),
                                        header.at("split").get<bool>());
}

void save_dataset(const InteractionDataset& ds, const std::string& path, CacheFormat fmt) {
  if (fmt == CacheFormat::kBinary) {
    binio::write_file(path, encode_binary(ds));
    return;
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path);
  out << encode_ndjson(ds);
}

InteractionDataset load_dataset(const std::string& path) {
  const auto bytes = binio::read_file(path);
  if (bytes.size() >= 4 && std::equal(bytes.begin(), bytes.begin() + 4, kBinaryMagic)) return decode_binary(bytes);
  return decode_ndjson(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
}

}  // namespace poprec::ingest
