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

// Central-difference gradient checks shared by the unit and acceptance tests.

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "poprec/tensor.hpp"

namespace poprec::testing {

using T64 = nn::Tensor<double>;

inline T64 rand_tensor(nn::Shape s, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0, bool grad = true) {
  std::uniform_real_distribution<double> d(lo, hi);
  std::vector<double> v(s.size());
  for (auto& x : v) {
    x = d(rng);
    // keep clear of the relu kink
    if (std::fabs(x) < 1e-2) x = 0.05;
  }
  return T64::from(s, std::move(v), grad);
}

// Error is |analytic - numeric| / max(|analytic|, |numeric|, 1e-3), maximised
// over every entry of every input.
inline double max_grad_error(const std::function<T64()>& loss_fn, std::vector<T64> inputs, double h = 1e-5) {
  for (auto& x : inputs) x.zero_grad();
  auto loss = loss_fn();
  nn::backward(loss);
  double worst = 0.0;
  for (auto& x : inputs) {
    auto vals = x.values();
    std::vector<double> analytic(x.grad().begin(), x.grad().end());
    analytic.resize(vals.size(), 0.0);
    for (std::size_t i = 0; i < vals.size(); ++i) {
      const double orig = vals[i];
      double up, down;
      {
        nn::NoGradGuard g;
        vals[i] = orig + h;
        up = loss_fn().item();
        vals[i] = orig - h;
        down = loss_fn().item();
      }
      vals[i] = orig;
      const double numeric = (up - down) / (2 * h);
      const double denom = std::max({std::fabs(analytic[i]), std::fabs(numeric), 1e-3});
      worst = std::max(worst, std::fabs(analytic[i] - numeric) / denom);
    }
  }
  return worst;
}

// Projects an op's output onto fixed random weights so every entry matters.
inline T64 project(const T64& y, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  auto w = rand_tensor(y.shape(), rng, -1, 1, false);
  return nn::sum(nn::mul(y, w));
}

// Worst relative error per differentiable op.
inline std::vector<std::pair<std::string, double>> op_gradient_errors() {
  using namespace nn;
  std::vector<std::pair<std::string, double>> out;
  std::mt19937_64 rng(101);
  auto a = rand_tensor({3, 4}, rng), b = rand_tensor({3, 4}, rng), row = rand_tensor({1, 4}, rng);
  auto k = rand_tensor({4, 5}, rng), kt = rand_tensor({5, 4}, rng), c = rand_tensor({3, 2}, rng);
  auto r2 = rand_tensor({2, 4}, rng), pos = rand_tensor({3, 4}, rng, 0.2, 2.0);
  auto logits = rand_tensor({4, 4}, rng, -2, 2);
  auto x = rand_tensor({3, 6}, rng, -2, 2);
  auto alpha = rand_tensor({1, 6}, rng, 0.5, 1.5), beta = rand_tensor({1, 6}, rng);
  Mask mask = causal_mask(4);
  mask[2 * 4 + 0] = 0;

  out.emplace_back("matmul", max_grad_error([&] { return project(matmul(a, k), 1); }, {a, k}));
  out.emplace_back("matmul_bt", max_grad_error([&] { return project(matmul_bt(a, kt), 2); }, {a, kt}));
  out.emplace_back("transpose", max_grad_error([&] { return project(transpose(a), 3); }, {a}));
  out.emplace_back("add", max_grad_error([&] { return project(add(a, b), 4); }, {a, b}));
  out.emplace_back("add_row", max_grad_error([&] { return project(add(a, row), 5); }, {a, row}));
  out.emplace_back("sub", max_grad_error([&] { return project(sub(a, b), 6); }, {a, b}));
  out.emplace_back("mul", max_grad_error([&] { return project(mul(a, b), 7); }, {a, b}));
  out.emplace_back("scale", max_grad_error([&] { return project(scale(a, 1.7), 8); }, {a}));
  out.emplace_back("add_scalar", max_grad_error([&] { return project(add_scalar(a, -0.3), 9); }, {a}));
  out.emplace_back("relu", max_grad_error([&] { return project(relu(a), 10); }, {a}));
  out.emplace_back("sigmoid", max_grad_error([&] { return project(sigmoid(a), 11); }, {a}));
  out.emplace_back("log", max_grad_error([&] { return project(log(pos), 12); }, {pos}));
  out.emplace_back("log_sigmoid", max_grad_error([&] { return project(log_sigmoid(scale(a, 5.0)), 13); }, {a}));
  out.emplace_back("concat_cols", max_grad_error([&] { return project(concat_cols<double>({a, c}), 14); }, {a, c}));
  out.emplace_back("concat_rows", max_grad_error([&] { return project(concat_rows<double>({a, r2}), 15); }, {a, r2}));
  out.emplace_back("slice_cols", max_grad_error([&] { return project(slice_cols(a, 1, 2), 16); }, {a}));
  out.emplace_back("slice_rows", max_grad_error([&] { return project(slice_rows(a, 1, 2), 17); }, {a}));
  out.emplace_back("gather_rows", max_grad_error([&] { return project(gather_rows(a, {2, 0, 2}), 18); }, {a}));
  out.emplace_back("rowwise_dot", max_grad_error([&] { return project(rowwise_dot(a, scale(a, 0.5)), 19); }, {a}));
  out.emplace_back("sum", max_grad_error([&] { return sum(a); }, {a}));
  out.emplace_back("mean", max_grad_error([&] { return scale(mean(mul(a, a)), 3.0); }, {a}));
  out.emplace_back("softmax_masked",
                   max_grad_error([&] { return project(softmax_masked(logits, mask), 20); }, {logits}));
  out.emplace_back("layer_norm", max_grad_error([&] { return project(layer_norm(x, alpha, beta, 1e-8), 21); },
                                                {x, alpha, beta}));
  out.emplace_back("dropout", max_grad_error(
                                  [&] {
                                    Rng r(99);
                                    return project(dropout(a, 0.3, true, r), 22);
                                  },
                                  {a}));
  return out;
}

}  // namespace poprec::testing
