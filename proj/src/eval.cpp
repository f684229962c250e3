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

#include "poprec/eval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <unordered_set>

#include <boost/math/distributions/students_t.hpp>

#include "poprec/binio.hpp"
#include "poprec/common.hpp"
#include "poprec/parallel.hpp"

namespace poprec::eval {

using ingest::Event;
using ingest::ItemIndex;
using ingest::UserIndex;

void EvalConfig::validate() const {
  if (negatives < 1) throw ConfigError("evaluation needs at least one negative per user");
  if (k_list.empty()) throw ConfigError("k list is empty");
  for (auto k : k_list)
    if (k == 0) throw ConfigError("cutoff k must be positive");
  if (offset < 1) throw ConfigError("offset must be at least one fine period");
}

std::string_view target_name(Target t) { return t == Target::kTest ? "test" : "validation"; }

std::vector<ItemIndex> sample_unobserved(const ingest::InteractionDataset& ds, UserIndex u, std::size_t count,
                                         Rng& rng) {
  std::unordered_set<ItemIndex> seen;
  for (const auto& e : ds.sequence(u)) seen.insert(e.item);
  const std::size_t n = ds.item_count();
  const std::size_t available = n - seen.size();
  std::vector<ItemIndex> out;
  if (available >= 2 * count) {
    std::uniform_int_distribution<ItemIndex> pick(0, static_cast<ItemIndex>(n - 1));
    while (out.size() < count) {
      const ItemIndex j = pick(rng);
      if (seen.insert(j).second) out.push_back(j);
    }
    return out;
  }
  for (ItemIndex j = 0; j < n; ++j)
    if (!seen.count(j)) out.push_back(j);
  const std::size_t take = std::min(count, out.size());
  for (std::size_t i = 0; i < take; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, out.size() - 1);
    std::swap(out[i], out[pick(rng)]);
  }
  out.resize(take);
  return out;
}

std::span<const Event> history_for(const ingest::InteractionDataset& ds, UserIndex u, Target target) {
  const auto& seq = ds.sequence(u);
  const std::size_t drop = target == Target::kTest ? 1 : 2;
  return std::span<const Event>(seq.data(), seq.size() - drop);
}

std::vector<CandidateSet> build_candidates(const ingest::InteractionDataset& ds, const EvalConfig& cfg,
                                           Target target) {
  if (!ds.has_split()) throw ConfigError("evaluation requires a split dataset");
  std::vector<CandidateSet> out;
  const std::string_view stream = target == Target::kTest ? "candidates" : "validation";
  for (UserIndex u = 0; u < ds.user_count(); ++u) {
    if (!ds.is_eval_user(u)) continue;
    const Event ev = target == Target::kTest ? *ds.test_event(u) : *ds.valid_event(u);
    CandidateSet cs;
    cs.user = u;
    cs.timestamp = ev.timestamp;
    cs.items.push_back(ev.item);
    Rng rng = make_stream(cfg.seed, stream, u);
    auto neg = sample_unobserved(ds, u, cfg.negatives, rng);
    cs.items.insert(cs.items.end(), neg.begin(), neg.end());
    out.push_back(std::move(cs));
  }
  return out;
}

std::size_t rank_of_first(std::span<const double> scores, std::span<const std::string> ids) {
  if (scores.empty() || scores.size() != ids.size()) throw ShapeError("rank_of_first: empty or mismatched input");
  std::size_t rank = 1;
  for (std::size_t j = 1; j < scores.size(); ++j) {
    if (scores[j] > scores[0] || (scores[j] == scores[0] && ids[j] < ids[0])) ++rank;
  }
  return rank;
}

double recall_at(std::span<const std::size_t> ranks, std::size_t k) {
  if (ranks.empty()) return 0.0;
  std::size_t hits = 0;
  for (auto r : ranks) hits += r <= k ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(ranks.size());
}

double ndcg_at(std::span<const std::size_t> ranks, std::size_t k) {
  if (ranks.empty()) return 0.0;
  double total = 0.0;
  for (auto r : ranks)
    if (r <= k) total += 1.0 / std::log2(static_cast<double>(r) + 1.0);
  return total / static_cast<double>(ranks.size());
}

std::vector<std::size_t> EvalReport::ranks() const {
  std::vector<std::size_t> out;
  out.reserve(users.size());
  for (const auto& u : users) out.push_back(u.rank);
  return out;
}

std::vector<double> EvalReport::ndcg_per_user(std::size_t k) const {
  std::vector<double> out;
  for (const auto& u : users) out.push_back(u.rank <= k ? 1.0 / std::log2(static_cast<double>(u.rank) + 1.0) : 0.0);
  return out;
}

void EvalReport::compute_metrics() {
  const auto r = ranks();
  recall.clear();
  ndcg.clear();
  for (auto k : config.k_list) {
    recall[k] = recall_at(r, k);
    ndcg[k] = ndcg_at(r, k);
  }
}

nlohmann::json EvalReport::summary_json() const {
  nlohmann::json j = {{"summary", true},
                      {"scorer", scorer},
                      {"target", target},
                      {"users", users.size()},
                      {"negatives", config.negatives},
                      {"candidate_seed", config.seed},
                      {"offset", config.offset},
                      {"k_list", config.k_list},
                      {"checkpoint_digest", checkpoint_digest},
                      {"dataset_fingerprint", dataset_fingerprint}};
  for (const auto& [k, v] : recall) j["recall@" + std::to_string(k)] = v;
  for (const auto& [k, v] : ndcg) j["ndcg@" + std::to_string(k)] = v;
  return j;
}

EvalReport run(const ingest::InteractionDataset& ds, const EvalConfig& cfg, Target target, const Scorer& scorer,
               std::string scorer_name) {
  cfg.validate();
  const auto sets = build_candidates(ds, cfg, target);
  std::vector<UserResult> results(sets.size());
  parallel_for(sets.size(), cfg.threads, [&](std::size_t i) {
    const auto& cs = sets[i];
    auto scores = scorer(cs.user, history_for(ds, cs.user, target), cs);
    if (scores.size() != cs.items.size()) throw ShapeError("scorer returned the wrong number of scores");
    for (double s : scores)
      if (!std::isfinite(s)) throw NumericalError("non-finite score for user " + ds.user_id(cs.user));
    UserResult& r = results[i];
    r.user = ds.user_id(cs.user);
    r.target = ds.item_id(cs.items.front());
    for (auto j : cs.items) r.candidates.push_back(ds.item_id(j));
    r.scores = std::move(scores);
    r.rank = rank_of_first(r.scores, r.candidates);
  });
  std::stable_sort(results.begin(), results.end(),
                   [](const UserResult& a, const UserResult& b) { return a.user < b.user; });

  EvalReport rep;
  rep.scorer = std::move(scorer_name);
  rep.target = std::string(target_name(target));
  rep.config = cfg;
  rep.dataset_fingerprint = ds.fingerprint();
  rep.users = std::move(results);
  rep.compute_metrics();
  return rep;
}

EvalReport evaluate(const model::ModelParams<float>& params, const ingest::InteractionDataset& ds,
                    const popdyn::PopularityTable& pt, const EvalConfig& cfg, Target target) {
  if (pt.item_count() != ds.item_count()) throw ConfigError("popularity table was built for a different catalog");
  if (pt.config().window_width() != params.cfg.window_width()) {
    throw ConfigError("popularity window width does not match the model");
  }
  const model::Encodings enc(params.cfg);
  auto scorer = [&](UserIndex, std::span<const Event> history, const CandidateSet& cs) {
    nn::NoGradGuard no_grad;
    auto q = model::user_embedding<float>(params, enc, pt, history, cfg.offset);
    std::vector<double> out(cs.items.size(), 0.0);
    if (q.empty()) return out;
    std::vector<std::int64_t> times(cs.items.size(), cs.timestamp);
    auto emb = model::encode_items(model::window_matrix<float>(pt, cs.items, times, cfg.offset), params);
    const std::size_t d = emb.cols();
    for (std::size_t i = 0; i < cs.items.size(); ++i) {
      out[i] = model::score<float>(q, emb.values().subspan(i * d, d));
    }
    return out;
  };
  auto rep = run(ds, cfg, target, scorer, "poprec");
  rep.checkpoint_digest = params.digest();
  return rep;
}

EvalReport mostpop_baseline(const ingest::InteractionDataset& ds, const EvalConfig& cfg, Target target) {
  std::vector<double> counts(ds.item_count(), 0.0);
  for (UserIndex u = 0; u < ds.user_count(); ++u) {
    for (const auto& e : ds.train_events(u)) counts[e.item] += 1.0;
  }
  auto scorer = [&](UserIndex, std::span<const Event>, const CandidateSet& cs) {
    std::vector<double> out;
    for (auto j : cs.items) out.push_back(counts[j]);
    return out;
  };
  return run(ds, cfg, target, scorer, "mostpop");
}

std::vector<std::string> config_mismatches(const model::CheckpointMeta& meta, const popdyn::PopularityConfig& target,
                                           std::int64_t offset) {
  std::vector<std::string> out;
  const auto& src = meta.pop;
  auto check = [&](const char* name, auto a, auto b) {
    if (a != b) {
      std::ostringstream os;
      os << name << ": checkpoint " << a << " vs target " << b;
      out.push_back(os.str());
    }
  };
  check("gamma", src.gamma, target.gamma);
  check("k", src.k, target.k);
  check("m", src.m, target.m);
  check("n", src.n, target.n);
  check("fine_days", src.fine_days, target.fine_days);
  check("coarse_fine_ratio", src.coarse_fine_ratio, target.coarse_fine_ratio);
  check("bucketing", static_cast<int>(src.mode), static_cast<int>(target.mode));
  check("include_inactive", src.include_inactive, target.include_inactive);
  check("offset", meta.offset, offset);
  return out;
}

EvalReport zero_shot(const model::ModelParams<float>& params, const model::CheckpointMeta& meta,
                     const ingest::InteractionDataset& ds, const popdyn::PopularityTable& pt, EvalConfig cfg) {
  auto diff = config_mismatches(meta, pt.config(), cfg.offset);
  if (!diff.empty()) {
    std::string msg = "target pipeline does not match the checkpoint:";
    for (const auto& d : diff) msg += "\n  " + d;
    throw ConfigError(msg);
  }
  const std::string before = params.digest();
  auto rep = evaluate(params, ds, pt, cfg, Target::kTest);
  if (params.digest() != before) throw NumericalError("parameters changed during zero-shot inference");
  rep.scorer = "poprec-zero-shot";
  return rep;
}

const double* ScoreFile::find(const std::string& user, const std::string& item) const {
  auto u = scores_.find(user);
  if (u == scores_.end()) return nullptr;
  auto i = u->second.find(item);
  return i == u->second.end() ? nullptr : &i->second;
}

std::size_t ScoreFile::size() const {
  std::size_t n = 0;
  for (const auto& [u, m] : scores_) n += m.size();
  return n;
}

ScoreFile ScoreFile::from_report(const EvalReport& report) {
  ScoreFile sf;
  for (const auto& u : report.users)
    for (std::size_t i = 0; i < u.candidates.size(); ++i) sf.set(u.user, u.candidates[i], u.scores[i]);
  return sf;
}

// Accepts per-pair records {"user","item","score"} and report-style records
// {"user","candidates":[...],"scores":[...]}; summary lines are skipped.
ScoreFile ScoreFile::parse(std::string_view ndjson) {
  ScoreFile sf;
  std::size_t line_no = 0;
  std::istringstream in{std::string(ndjson)};
  std::string line;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      auto j = nlohmann::json::parse(line);
      if (j.value("summary", false)) continue;
      const auto user = j.at("user").get<std::string>();
      if (j.contains("candidates")) {
        const auto& c = j.at("candidates");
        const auto& s = j.at("scores");
        if (c.size() != s.size()) throw DataError("candidates and scores differ in length");
        for (std::size_t i = 0; i < c.size(); ++i) sf.set(user, c[i].get<std::string>(), s[i].get<double>());
      } else {
        sf.set(user, j.at("item").get<std::string>(), j.at("score").get<double>());
      }
    } catch (const nlohmann::json::exception& e) {
      throw DataError("score file line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return sf;
}

ScoreFile ScoreFile::load(const std::string& path) {
  auto bytes = binio::read_file(path);
  return parse(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
}

EvalReport interpolate(const EvalReport& ours, const ScoreFile& external, double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("alpha must lie in [0, 1]");
  std::vector<std::string> missing;
  std::size_t missing_total = 0;
  EvalReport out = ours;
  out.scorer = ours.scorer + "+interpolated";
  for (auto& u : out.users) {
    for (std::size_t i = 0; i < u.candidates.size(); ++i) {
      const double* ext = external.find(u.user, u.candidates[i]);
      if (!ext) {
        ++missing_total;
        if (missing.size() < 20) missing.push_back("(" + u.user + ", " + u.candidates[i] + ")");
        continue;
      }
      u.scores[i] = alpha * u.scores[i] + (1.0 - alpha) * *ext;
    }
    u.rank = rank_of_first(u.scores, u.candidates);
  }
  if (missing_total > 0) {
    std::string msg = "external scores lack " + std::to_string(missing_total) + " (user, candidate) pairs:";
    for (const auto& m : missing) msg += "\n  missing " + m;
    if (missing_total > missing.size()) msg += "\n  ...";
    throw DataError(msg);
  }
  out.compute_metrics();
  return out;
}

std::string encode_report(const EvalReport& report) {
  std::string out;
  for (const auto& u : report.users) {
    nlohmann::json j = {{"user", u.user},
                        {"target", u.target},
                        {"rank", u.rank},
                        {"candidates", u.candidates},
                        {"scores", u.scores}};
    out += j.dump();
    out += '\n';
  }
  out += report.summary_json().dump();
  out += '\n';
  return out;
}

EvalReport decode_report(std::string_view ndjson) {
  EvalReport rep;
  bool have_summary = false;
  std::istringstream in{std::string(ndjson)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      auto j = nlohmann::json::parse(line);
      if (j.value("summary", false)) {
        rep.scorer = j.value("scorer", "");
        rep.target = j.value("target", "test");
        rep.config.negatives = j.value("negatives", rep.config.negatives);
        rep.config.seed = j.value("candidate_seed", rep.config.seed);
        rep.config.offset = j.value("offset", rep.config.offset);
        rep.config.k_list = j.value("k_list", rep.config.k_list);
        rep.checkpoint_digest = j.value("checkpoint_digest", "");
        rep.dataset_fingerprint = j.value("dataset_fingerprint", "");
        have_summary = true;
        continue;
      }
      UserResult u;
      u.user = j.at("user").get<std::string>();
      u.target = j.at("target").get<std::string>();
      u.rank = j.at("rank").get<std::size_t>();
      u.candidates = j.at("candidates").get<std::vector<std::string>>();
      u.scores = j.at("scores").get<std::vector<double>>();
      if (u.candidates.size() != u.scores.size() || u.candidates.empty()) {
        throw DataError("candidates and scores differ in length");
      }
      rep.users.push_back(std::move(u));
    } catch (const nlohmann::json::exception& e) {
      throw DataError("report line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  if (!have_summary) throw DataError("report has no summary record");
  rep.compute_metrics();
  return rep;
}

void save_report(const std::string& path, const EvalReport& report) {
  const auto text = encode_report(report);
  binio::write_file(path, std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

EvalReport load_report(const std::string& path) {
  auto bytes = binio::read_file(path);
  return decode_report(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
}

LeakageStats leakage_audit(const ingest::InteractionDataset& ds) {
  if (!ds.has_split()) throw ConfigError("leakage audit requires a split dataset");
  std::vector<std::vector<std::int64_t>> train_times(ds.item_count());
  for (UserIndex u = 0; u < ds.user_count(); ++u)
    for (const auto& e : ds.train_events(u)) train_times[e.item].push_back(e.timestamp);
  for (auto& v : train_times) std::sort(v.begin(), v.end());

  LeakageStats st;
  double count_sum = 0.0, prop_sum = 0.0;
  for (UserIndex u = 0; u < ds.user_count(); ++u) {
    auto test = ds.test_event(u);
    if (!test) continue;
    const auto& times = train_times[test->item];
    const auto later = static_cast<double>(times.end() - std::upper_bound(times.begin(), times.end(), test->timestamp));
    count_sum += later;
    prop_sum += times.empty() ? 0.0 : later / static_cast<double>(times.size());
    ++st.test_items;
  }
  if (st.test_items > 0) {
    st.mean_future_count = count_sum / static_cast<double>(st.test_items);
    st.mean_future_proportion = prop_sum / static_cast<double>(st.test_items);
  }
  return st;
}

TTest paired_t_test(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ShapeError("paired t-test needs equal-length samples");
  if (a.size() < 2) throw ConfigError("paired t-test needs at least two pairs");
  std::vector<double> diff(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) diff[i] = a[i] - b[i];
  const auto ms = mean_std(diff);
  TTest r;
  r.df = static_cast<double>(a.size() - 1);
  if (ms.stddev == 0.0) {
    r.t = ms.mean == 0.0 ? 0.0 : std::copysign(INFINITY, ms.mean);
    r.p_value = ms.mean == 0.0 ? 1.0 : 0.0;
    return r;
  }
  r.t = ms.mean / (ms.stddev / std::sqrt(static_cast<double>(a.size())));
  boost::math::students_t dist(r.df);
  r.p_value = 2.0 * boost::math::cdf(boost::math::complement(dist, std::fabs(r.t)));
  return r;
}

MeanStd mean_std(std::span<const double> values) {
  MeanStd r;
  if (values.empty()) return r;
  r.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - r.mean) * (v - r.mean);
    r.stddev = std::sqrt(ss / static_cast<double>(values.size() - 1));
  }
  return r;
}

}  // namespace poprec::eval
