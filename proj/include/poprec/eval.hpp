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

// Leave-one-out evaluation against sampled negatives, the MostPop baseline,
// zero-shot transfer, score interpolation and the time-leakage audit.

#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "poprec/ingest.hpp"
#include "poprec/model.hpp"
#include "poprec/popdyn.hpp"

namespace poprec::eval {

struct EvalConfig {
  std::vector<std::size_t> k_list{10};
  std::size_t negatives = 100;
  std::uint64_t seed = 0;
  std::int64_t offset = 1;
  std::size_t threads = 1;

  void validate() const;
};

enum class Target { kValidation, kTest };

std::string_view target_name(Target t);

// Target item first, then the sampled negatives.
struct CandidateSet {
  ingest::UserIndex user = 0;
  std::int64_t timestamp = 0;
  std::vector<ingest::ItemIndex> items;
};

// Up to `count` distinct items outside the user's full history, drawn
// uniformly without replacement.
std::vector<ingest::ItemIndex> sample_unobserved(const ingest::InteractionDataset& ds, ingest::UserIndex u,
                                                 std::size_t count, Rng& rng);

// One set per evaluation user. Each user's draw comes from its own stream, so
// a set depends only on (seed, target, user).
std::vector<CandidateSet> build_candidates(const ingest::InteractionDataset& ds, const EvalConfig& cfg, Target target);

// History preceding the target event.
std::span<const ingest::Event> history_for(const ingest::InteractionDataset& ds, ingest::UserIndex u, Target target);

// 1-based rank of scores[0] when sorting by score descending, ties by id
// ascending.
std::size_t rank_of_first(std::span<const double> scores, std::span<const std::string> ids);

double recall_at(std::span<const std::size_t> ranks, std::size_t k);
double ndcg_at(std::span<const std::size_t> ranks, std::size_t k);

struct UserResult {
  std::string user;
  std::string target;
  std::size_t rank = 0;
  std::vector<std::string> candidates;  // target first
  std::vector<double> scores;
};

struct EvalReport {
  std::string scorer;
  std::string target = "test";
  EvalConfig config;
  std::string checkpoint_digest;
  std::string dataset_fingerprint;
  std::vector<UserResult> users;  // ordered by user id
  std::map<std::size_t, double> recall;
  std::map<std::size_t, double> ndcg;

  std::vector<std::size_t> ranks() const;
  // Per-user N@k, e.g. for paired significance tests.
  std::vector<double> ndcg_per_user(std::size_t k) const;
  void compute_metrics();
  nlohmann::json summary_json() const;
};

// Scores candidates[i] for a user given the history before the target.
using Scorer = std::function<std::vector<double>(ingest::UserIndex, std::span<const ingest::Event> history,
                                                 const CandidateSet&)>;

EvalReport run(const ingest::InteractionDataset& ds, const EvalConfig& cfg, Target target, const Scorer& scorer,
               std::string scorer_name);

EvalReport evaluate(const model::ModelParams<float>& params, const ingest::InteractionDataset& ds,
                    const popdyn::PopularityTable& pt, const EvalConfig& cfg, Target target = Target::kTest);

// Global training-interaction counts; ties resolve by item id.
EvalReport mostpop_baseline(const ingest::InteractionDataset& ds, const EvalConfig& cfg,
                            Target target = Target::kTest);

// Frozen parameters from a checkpoint applied to another dataset. The target
// table must share every popularity setting recorded in the checkpoint.
EvalReport zero_shot(const model::ModelParams<float>& params, const model::CheckpointMeta& meta,
                     const ingest::InteractionDataset& ds, const popdyn::PopularityTable& pt, EvalConfig cfg);

// Mismatched popularity/offset settings as "name: checkpoint vs target" lines.
std::vector<std::string> config_mismatches(const model::CheckpointMeta& meta, const popdyn::PopularityConfig& target,
                                           std::int64_t offset);

// (user id, item id) -> score.
class ScoreFile {
 public:
  void set(const std::string& user, const std::string& item, double score) { scores_[user][item] = score; }
  const double* find(const std::string& user, const std::string& item) const;
  std::size_t size() const;

  static ScoreFile from_report(const EvalReport& report);
  static ScoreFile parse(std::string_view ndjson);
  static ScoreFile load(const std::string& path);

 private:
  std::map<std::string, std::map<std::string, double>> scores_;
};

// alpha * ours + (1 - alpha) * external, re-ranked. Missing pairs raise a
// DataError listing them.
EvalReport interpolate(const EvalReport& ours, const ScoreFile& external, double alpha);

std::string encode_report(const EvalReport& report);
EvalReport decode_report(std::string_view ndjson);
void save_report(const std::string& path, const EvalReport& report);
EvalReport load_report(const std::string& path);

struct LeakageStats {
  std::size_t test_items = 0;
  double mean_future_count = 0.0;
  double mean_future_proportion = 0.0;
};

// For each test interaction, training interactions of the same item dated
// strictly later.
LeakageStats leakage_audit(const ingest::InteractionDataset& ds);

struct TTest {
  double t = 0.0;
  double df = 0.0;
  double p_value = 1.0;
};

// Two-sided paired t-test on per-user metric arrays of equal length.
TTest paired_t_test(std::span<const double> a, std::span<const double> b);

struct MeanStd {
  double mean = 0.0;
  double stddev = 0.0;  // sample standard deviation
};
MeanStd mean_std(std::span<const double> values);

}  // namespace poprec::eval
