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

// JSON (de)serialisation of configuration structs for checkpoints,
// manifests and config files.

#include <json.hpp>

#include "poprec/model.hpp"
#include "poprec/popdyn.hpp"

namespace poprec::popdyn {

inline void to_json(nlohmann::json& j, const PopularityConfig& c) {
  j = {{"gamma", c.gamma},
       {"fine_days", c.fine_days},
       {"coarse_fine_ratio", c.coarse_fine_ratio},
       {"bucketing", c.mode == BucketMode::kCalendar ? "calendar" : "fixed"},
       {"k", c.k},
       {"m", c.m},
       {"n", c.n},
       {"include_inactive", c.include_inactive},
       {"exclude_eval_events", c.exclude_eval_events}};
}

inline void from_json(const nlohmann::json& j, PopularityConfig& c) {
  c = PopularityConfig{};
  c.gamma = j.value("gamma", c.gamma);
  c.fine_days = j.value("fine_days", c.fine_days);
  c.coarse_fine_ratio = j.value("coarse_fine_ratio", c.coarse_fine_ratio);
  c.mode = j.value("bucketing", std::string("fixed")) == "calendar" ? BucketMode::kCalendar : BucketMode::kFixed;
  c.k = j.value("k", c.k);
  c.m = j.value("m", c.m);
  c.n = j.value("n", c.n);
  c.include_inactive = j.value("include_inactive", c.include_inactive);
  c.exclude_eval_events = j.value("exclude_eval_events", c.exclude_eval_events);
}

}  // namespace poprec::popdyn

namespace poprec::model {

inline void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = {{"d", c.d},         {"heads", c.heads}, {"layers", c.layers}, {"max_len", c.max_len},
       {"k", c.k},         {"m", c.m},         {"n", c.n},           {"dropout", c.dropout},
       {"gamma", c.gamma}, {"ln_eps", c.ln_eps}};
}

inline void from_json(const nlohmann::json& j, ModelConfig& c) {
  c = ModelConfig{};
  c.d = j.value("d", c.d);
  c.heads = j.value("heads", c.heads);
  c.layers = j.value("layers", c.layers);
  c.max_len = j.value("max_len", c.max_len);
  c.k = j.value("k", c.k);
  c.m = j.value("m", c.m);
  c.n = j.value("n", c.n);
  c.dropout = j.value("dropout", c.dropout);
  c.gamma = j.value("gamma", c.gamma);
  c.ln_eps = j.value("ln_eps", c.ln_eps);
}

}  // namespace poprec::model
