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

// Minimal dense tensor core with reverse-mode differentiation.
//
// Tensors are rank-2 row-major matrices (vectors are 1 x n, scalars 1 x 1).
// A Tensor is a cheap handle onto a shared graph node; ops record a backward
// closure whenever gradient tracking is enabled and an input requires grad.
// Instantiated for float (training) and double (gradient checks).

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "poprec/common.hpp"

namespace poprec::nn {

struct Shape {
  std::size_t rows = 0;
  std::size_t cols = 0;

  std::size_t size() const { return rows * cols; }
  bool operator==(const Shape&) const = default;
  std::string str() const;
};

template <class T>
struct Node {
  Shape shape;
  std::vector<T> value;
  std::vector<T> grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward;

  void ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), T(0));
  }
};

template <class T>
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<Node<T>> node) : node_(std::move(node)) {}

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<T> values, bool requires_grad = false);
  static Tensor scalar(T v) { return from({1, 1}, {v}); }

  bool defined() const { return static_cast<bool>(node_); }
  const Shape& shape() const { return node_->shape; }
  std::size_t rows() const { return node_->shape.rows; }
  std::size_t cols() const { return node_->shape.cols; }
  std::size_t size() const { return node_->value.size(); }

  std::span<T> values() { return node_->value; }
  std::span<const T> values() const { return node_->value; }
  T at(std::size_t r, std::size_t c) const { return node_->value[r * cols() + c]; }
  T item() const;

  bool requires_grad() const { return node_->requires_grad; }
  // Empty until a backward pass reaches this tensor.
  std::span<const T> grad() const { return node_->grad; }
  std::span<T> grad_mut() {
    node_->ensure_grad();
    return node_->grad;
  }
  void zero_grad() { std::fill(node_->grad.begin(), node_->grad.end(), T(0)); }

  Node<T>* node() const { return node_.get(); }
  const std::shared_ptr<Node<T>>& node_ptr() const { return node_; }

 private:
  std::shared_ptr<Node<T>> node_;
};

// Thread-local switch; while a guard is alive ops record no graph.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};
bool grad_enabled();

// Mask entries: nonzero keeps the logit, zero removes it.
using Mask = std::vector<std::uint8_t>;

// Lower-triangular-inclusive n x n mask: row i may see columns j <= i.
Mask causal_mask(std::size_t n);

template <class T> Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);
// a * b^T
template <class T> Tensor<T> matmul_bt(const Tensor<T>& a, const Tensor<T>& b);
// Same shape, or b a 1 x cols row broadcast over a's rows.
template <class T> Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <class T> Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <class T> Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <class T> Tensor<T> scale(const Tensor<T>& a, T s);
template <class T> Tensor<T> add_scalar(const Tensor<T>& a, T s);
template <class T> Tensor<T> transpose(const Tensor<T>& a);
template <class T> Tensor<T> concat_cols(const std::vector<Tensor<T>>& parts);
template <class T> Tensor<T> concat_rows(const std::vector<Tensor<T>>& parts);
template <class T> Tensor<T> slice_cols(const Tensor<T>& a, std::size_t begin, std::size_t count);
template <class T> Tensor<T> slice_rows(const Tensor<T>& a, std::size_t begin, std::size_t count);
template <class T> Tensor<T> gather_rows(const Tensor<T>& a, const std::vector<std::size_t>& index);
template <class T> Tensor<T> relu(const Tensor<T>& a);
template <class T> Tensor<T> sigmoid(const Tensor<T>& a);
// Natural log with the argument floored at the smallest normal value.
template <class T> Tensor<T> log(const Tensor<T>& a);
// log(sigmoid(a)) evaluated without overflow.
template <class T> Tensor<T> log_sigmoid(const Tensor<T>& a);
// Row-wise softmax over unmasked entries. Masked entries are exactly 0 and a
// fully masked row is all zero.
template <class T> Tensor<T> softmax_masked(const Tensor<T>& logits, const Mask& mask);
// Normalises each row with the population variance, then alpha * x + beta.
template <class T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& alpha, const Tensor<T>& beta, T eps);
template <class T> Tensor<T> dropout(const Tensor<T>& x, T rate, bool training, Rng& rng);
template <class T> Tensor<T> sum(const Tensor<T>& a);
template <class T> Tensor<T> mean(const Tensor<T>& a);
// rows x 1 column of per-row inner products.
template <class T> Tensor<T> rowwise_dot(const Tensor<T>& a, const Tensor<T>& b);

// Reverse-mode sweep from a 1 x 1 loss. Gradients accumulate into every
// reachable tensor that requires grad.
template <class T> void backward(const Tensor<T>& loss);

template <class T>
class Adam {
 public:
  struct Options {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    // Added to the gradient as weight_decay * w.
    double weight_decay = 0.0;
  };

  Adam(std::vector<Tensor<T>> params, Options opts);

  void step();
  void zero_grad();
  std::int64_t steps() const { return step_; }
  const Options& options() const { return opts_; }
  void set_lr(double lr) { opts_.lr = lr; }

 private:
  std::vector<Tensor<T>> params_;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
  Options opts_;
  std::int64_t step_ = 0;
};

}  // namespace poprec::nn
