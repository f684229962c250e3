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

// Next-item training with sampled negatives, Adam, and early stopping on
// validation NDCG@10.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "poprec/eval.hpp"
#include "poprec/ingest.hpp"
#include "poprec/model.hpp"
#include "poprec/popdyn.hpp"

namespace poprec::train {

enum class LossMode {
  // -[log s(y+) + sum log(1 - s(y-))]
  kDefault,
  // -[log s(y+) + sum log s(1 - y-)]
  kPaperLiteral,
};

inline constexpr double kLrGrid[] = {1e-4, 1e-3, 1e-2};

struct TrainConfig {
  std::size_t batch_size = 128;
  std::size_t max_epochs = 80;
  double lr = 1e-3;
  double weight_decay = 1e-5;
  std::size_t negatives_per_positive = 1;
  std::size_t patience = 10;
  std::uint64_t seed = 0;
  LossMode loss = LossMode::kDefault;
  std::int64_t offset = 1;
  // Validation metrics only; optimisation is always serial.
  std::size_t threads = 1;
  bool log_progress = false;

  // Throws on invalid values; warns when lr is off the grid.
  void validate() const;
};

std::string_view loss_mode_name(LossMode m);
LossMode parse_loss_mode(std::string_view s);

struct LossTerm {
  double positive = 0.0;
  std::vector<double> negatives;
  std::size_t position = 0;
};

// Mean over terms of the per-position loss.
double loss(std::span<const LossTerm> terms, LossMode mode);

// Independent uniform draws from items the user never interacted with.
std::vector<ingest::ItemIndex> sample_negatives(const ingest::InteractionDataset& ds, ingest::UserIndex u,
                                                std::size_t count, Rng& rng);

// Training portion of a user's sequence, truncated to the latest max_len + 1
// events (inputs plus the final target).
std::span<const ingest::Event> training_events(const ingest::InteractionDataset& ds, ingest::UserIndex u,
                                               std::size_t max_len);

struct Example {
  ingest::UserIndex user = 0;
  std::vector<ingest::ItemIndex> negatives;  // positions x negatives_per_positive, position-major
};

// Scalar loss tensor over a batch. Position z of each user predicts event
// z + 1 with item windows taken at the target's own timestamp.
template <class T>
nn::Tensor<T> batch_loss(const ingest::InteractionDataset& ds, const popdyn::PopularityTable& pt,
                         const model::Encodings& enc, const model::ModelParams<T>& params,
                         std::span<const Example> batch, const TrainConfig& cfg, bool training, Rng* dropout_rng,
                         std::size_t* positions = nullptr);

struct EpochStats {
  double loss = 0.0;  // mean over positions
  std::size_t positions = 0;
  std::size_t batches = 0;
  double wall_seconds = 0.0;
};

class Trainer {
 public:
  Trainer(const ingest::InteractionDataset& ds, const popdyn::PopularityTable& pt, model::ModelParams<float> params,
          TrainConfig cfg);

  EpochStats train_epoch();
  const model::ModelParams<float>& params() const { return params_; }
  std::size_t epochs_done() const { return epoch_; }

 private:
  std::vector<Example> epoch_examples();

  const ingest::InteractionDataset& ds_;
  const popdyn::PopularityTable& pt_;
  model::ModelParams<float> params_;
  TrainConfig cfg_;
  model::Encodings enc_;
  nn::Adam<float> opt_;
  std::size_t epoch_ = 0;
};

struct CurvePoint {
  std::size_t epoch = 0;
  double loss = 0.0;
  double val_recall10 = 0.0;
  double val_ndcg10 = 0.0;
  double wall_seconds = 0.0;
};

struct FitResult {
  model::ModelParams<float> best;
  std::size_t best_epoch = 0;  // 0: initial parameters
  double best_val_ndcg10 = 0.0;
  std::vector<CurvePoint> curve;

  nlohmann::json curve_json() const;
};

// Trains up to max_epochs, keeping the parameters with the best validation
// NDCG@10 and stopping after `patience` epochs without improvement.
FitResult fit(const ingest::InteractionDataset& ds, const popdyn::PopularityTable& pt,
              const model::ModelConfig& model_cfg, const TrainConfig& cfg);

}  // namespace poprec::train
