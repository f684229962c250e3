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

#include "poprec/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <unordered_set>

#include "poprec/kernels.hpp"

namespace poprec::nn {

namespace {

thread_local bool g_grad_enabled = true;

[[noreturn]] void shape_fail(const char* op, const Shape& a, const Shape& b) {
  throw ShapeError(std::string(op) + ": incompatible shapes " + a.str() + " and " + b.str());
}

template <class T>
std::shared_ptr<Node<T>> make_node(Shape shape) {
  auto n = std::make_shared<Node<T>>();
  n->shape = shape;
  n->value.assign(shape.size(), T(0));
  return n;
}

// Wires inputs and the backward rule into `out` when any input tracks grad.
template <class T, class Fn>
Tensor<T> finish(std::shared_ptr<Node<T>> out, std::initializer_list<Tensor<T>> inputs, Fn&& fn) {
  if (g_grad_enabled) {
    bool any = false;
    for (const auto& t : inputs) any = any || t.requires_grad();
    if (any) {
      out->requires_grad = true;
      for (const auto& t : inputs) out->inputs.push_back(t.node_ptr());
      out->backward = std::forward<Fn>(fn);
    }
  }
  return Tensor<T>(std::move(out));
}

template <class T, class Fn>
Tensor<T> finish_vec(std::shared_ptr<Node<T>> out, const std::vector<Tensor<T>>& inputs, Fn&& fn) {
  if (g_grad_enabled) {
    bool any = false;
    for (const auto& t : inputs) any = any || t.requires_grad();
    if (any) {
      out->requires_grad = true;
      for (const auto& t : inputs) out->inputs.push_back(t.node_ptr());
      out->backward = std::forward<Fn>(fn);
    }
  }
  return Tensor<T>(std::move(out));
}

// Gradient buffer of input i, or nullptr when that input is constant.
template <class T>
T* grad_of(Node<T>& self, std::size_t i) {
  Node<T>& in = *self.inputs[i];
  if (!in.requires_grad) return nullptr;
  in.ensure_grad();
  return in.grad.data();
}

template <class T>
T stable_sigmoid(T x) {
  if (x >= 0) {
    T z = std::exp(-x);
    return T(1) / (T(1) + z);
  }
  T z = std::exp(x);
  return z / (T(1) + z);
}

}  // namespace

std::string Shape::str() const { return "(" + std::to_string(rows) + "x" + std::to_string(cols) + ")"; }

NoGradGuard::NoGradGuard() : prev_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = prev_; }
bool grad_enabled() { return g_grad_enabled; }

Mask causal_mask(std::size_t n) {
  Mask m(n * n, 0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j <= i; ++j) m[i * n + j] = 1;
  return m;
}

template <class T>
Tensor<T> Tensor<T>::zeros(Shape shape, bool requires_grad) {
  auto n = make_node<T>(shape);
  n->requires_grad = requires_grad;
  return Tensor(std::move(n));
}

template <class T>
Tensor<T> Tensor<T>::from(Shape shape, std::vector<T> values, bool requires_grad) {
  if (values.size() != shape.size()) {
    throw ShapeError("tensor: " + std::to_string(values.size()) + " values for shape " + shape.str());
  }
  auto n = std::make_shared<Node<T>>();
  n->shape = shape;
  n->value = std::move(values);
  n->requires_grad = requires_grad;
  return Tensor(std::move(n));
}

template <class T>
T Tensor<T>::item() const {
  if (size() != 1) throw ShapeError("item: tensor of shape " + shape().str() + " is not a scalar");
  return node_->value[0];
}

template <class T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.cols() != b.rows()) shape_fail("matmul", a.shape(), b.shape());
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  auto out = make_node<T>({m, n});
  kernels::gemm_nn(a.values().data(), b.values().data(), out->value.data(), m, k, n, false);
  return finish<T>(std::move(out), {a, b}, [m, k, n](Node<T>& self) {
    const T* g = self.grad.data();
    const T* av = self.inputs[0]->value.data();
    const T* bv = self.inputs[1]->value.data();
    // dA = G * B^T, dB = A^T * G
    if (T* ga = grad_of(self, 0)) kernels::gemm_nt(g, bv, ga, m, n, k, true);
    if (T* gb = grad_of(self, 1)) kernels::gemm_tn_acc(av, g, gb, m, k, n);
  });
}

template <class T>
Tensor<T> matmul_bt(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.cols() != b.cols()) shape_fail("matmul_bt", a.shape(), b.shape());
  const std::size_t m = a.rows(), k = a.cols(), n = b.rows();
  auto out = make_node<T>({m, n});
  kernels::gemm_nt(a.values().data(), b.values().data(), out->value.data(), m, k, n, false);
  return finish<T>(std::move(out), {a, b}, [m, k, n](Node<T>& self) {
    const T* g = self.grad.data();
    const T* av = self.inputs[0]->value.data();
    const T* bv = self.inputs[1]->value.data();
    // dA = G * B, dB = G^T * A
    if (T* ga = grad_of(self, 0)) kernels::gemm_nn(g, bv, ga, m, n, k, true);
    if (T* gb = grad_of(self, 1)) kernels::gemm_tn_acc(g, av, gb, m, n, k);
  });
}

template <class T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  const bool broadcast = b.rows() == 1 && a.rows() != 1 && b.cols() == a.cols();
  if (!broadcast && a.shape() != b.shape()) shape_fail("add", a.shape(), b.shape());
  const std::size_t rows = a.rows(), cols = a.cols();
  auto out = make_node<T>(a.shape());
  auto av = a.values();
  auto bv = b.values();
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c)
      out->value[r * cols + c] = av[r * cols + c] + bv[broadcast ? c : r * cols + c];
  return finish<T>(std::move(out), {a, b}, [rows, cols, broadcast](Node<T>& self) {
    const auto& g = self.grad;
    if (T* ga = grad_of(self, 0))
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    if (T* gb = grad_of(self, 1)) {
      if (broadcast) {
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t c = 0; c < cols; ++c) gb[c] += g[r * cols + c];
      } else {
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
      }
    }
  });
}

template <class T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape()) shape_fail("sub", a.shape(), b.shape());
  auto out = make_node<T>(a.shape());
  for (std::size_t i = 0; i < out->value.size(); ++i) out->value[i] = a.values()[i] - b.values()[i];
  return finish<T>(std::move(out), {a, b}, [](Node<T>& self) {
    const auto& g = self.grad;
    if (T* ga = grad_of(self, 0))
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    if (T* gb = grad_of(self, 1))
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
  });
}

template <class T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape()) shape_fail("mul", a.shape(), b.shape());
  auto out = make_node<T>(a.shape());
  for (std::size_t i = 0; i < out->value.size(); ++i) out->value[i] = a.values()[i] * b.values()[i];
  return finish<T>(std::move(out), {a, b}, [](Node<T>& self) {
    const auto& g = self.grad;
    const auto& av = self.inputs[0]->value;
    const auto& bv = self.inputs[1]->value;
    if (T* ga = grad_of(self, 0))
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
    if (T* gb = grad_of(self, 1))
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
  });
}

template <class T>
Tensor<T> scale(const Tensor<T>& a, T s) {
  auto out = make_node<T>(a.shape());
  for (std::size_t i = 0; i < out->value.size(); ++i) out->value[i] = a.values()[i] * s;
  return finish<T>(std::move(out), {a}, [s](Node<T>& self) {
    if (T* ga = grad_of(self, 0))
      for (std::size_t i = 0; i < self.grad.size(); ++i) ga[i] += self.grad[i] * s;
  });
}

template <class T>
Tensor<T> add_scalar(const Tensor<T>& a, T s) {
  auto out = make_node<T>(a.shape());
  for (std::size_t i = 0; i < out->value.size(); ++i) out->value[i] = a.values()[i] + s;
  return finish<T>(std::move(out), {a}, [](Node<T>& self) {
    if (T* ga = grad_of(self, 0))
      for (std::size_t i = 0; i < self.grad.size(); ++i) ga[i] += self.grad[i];
  });
}

template <class T>
Tensor<T> transpose(const Tensor<T>& a) {
  const std::size_t r = a.rows(), c = a.cols();
  auto out = make_node<T>({c, r});
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out->value[j * r + i] = a.values()[i * c + j];
  return finish<T>(std::move(out), {a}, [r, c](Node<T>& self) {
    if (T* ga = grad_of(self, 0))
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) ga[i * c + j] += self.grad[j * r + i];
  });
}

template <class T>
Tensor<T> concat_cols(const std::vector<Tensor<T>>& parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no inputs");
  const std::size_t rows = parts[0].rows();
  std::size_t cols = 0;
  for (const auto& p : parts) {
    if (p.rows() != rows) shape_fail("concat_cols", parts[0].shape(), p.shape());
    cols += p.cols();
  }
  auto out = make_node<T>({rows, cols});
  std::vector<std::size_t> offsets;
  std::size_t off = 0;
  for (const auto& p : parts) {
    offsets.push_back(off);
    for (std::size_t r = 0; r < rows; ++r)
      std::copy_n(p.values().data() + r * p.cols(), p.cols(), out->value.data() + r * cols + off);
    off += p.cols();
  }
  return finish_vec<T>(std::move(out), parts, [rows, cols, offsets](Node<T>& self) {
    for (std::size_t i = 0; i < self.inputs.size(); ++i) {
      T* gi = grad_of(self, i);
      if (!gi) continue;
      const std::size_t pc = self.inputs[i]->shape.cols;
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < pc; ++c) gi[r * pc + c] += self.grad[r * cols + offsets[i] + c];
    }
  });
}

template <class T>
Tensor<T> concat_rows(const std::vector<Tensor<T>>& parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no inputs");
  const std::size_t cols = parts[0].cols();
  std::size_t rows = 0;
  for (const auto& p : parts) {
    if (p.cols() != cols) shape_fail("concat_rows", parts[0].shape(), p.shape());
    rows += p.rows();
  }
  auto out = make_node<T>({rows, cols});
  std::vector<std::size_t> offsets;
  std::size_t off = 0;
  for (const auto& p : parts) {
    offsets.push_back(off);
    std::copy(p.values().begin(), p.values().end(), out->value.begin() + static_cast<std::ptrdiff_t>(off));
    off += p.size();
  }
  return finish_vec<T>(std::move(out), parts, [offsets](Node<T>& self) {
    for (std::size_t i = 0; i < self.inputs.size(); ++i) {
      T* gi = grad_of(self, i);
      if (!gi) continue;
      const std::size_t n = self.inputs[i]->value.size();
      for (std::size_t j = 0; j < n; ++j) gi[j] += self.grad[offsets[i] + j];
    }
  });
}

template <class T>
Tensor<T> slice_cols(const Tensor<T>& a, std::size_t begin, std::size_t count) {
  if (begin + count > a.cols()) shape_fail("slice_cols", a.shape(), Shape{a.rows(), begin + count});
  const std::size_t rows = a.rows(), cols = a.cols();
  auto out = make_node<T>({rows, count});
  for (std::size_t r = 0; r < rows; ++r)
    std::copy_n(a.values().data() + r * cols + begin, count, out->value.data() + r * count);
  return finish<T>(std::move(out), {a}, [rows, cols, begin, count](Node<T>& self) {
    if (T* ga = grad_of(self, 0))
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < count; ++c) ga[r * cols + begin + c] += self.grad[r * count + c];
  });
}

template <class T>
Tensor<T> slice_rows(const Tensor<T>& a, std::size_t begin, std::size_t count) {
  if (begin + count > a.rows()) shape_fail("slice_rows", a.shape(), Shape{begin + count, a.cols()});
  const std::size_t cols = a.cols();
  auto out = make_node<T>({count, cols});
  std::copy_n(a.values().data() + begin * cols, count * cols, out->value.data());
  return finish<T>(std::move(out), {a}, [begin, cols](Node<T>& self) {
    if (T* ga = grad_of(self, 0))
      for (std::size_t i = 0; i < self.grad.size(); ++i) ga[begin * cols + i] += self.grad[i];
  });
}

template <class T>
Tensor<T> gather_rows(const Tensor<T>& a, const std::vector<std::size_t>& index) {
  const std::size_t cols = a.cols();
  for (std::size_t r : index)
    if (r >= a.rows()) shape_fail("gather_rows", a.shape(), Shape{r + 1, cols});
  auto out = make_node<T>({index.size(), cols});
  for (std::size_t i = 0; i < index.size(); ++i)
    std::copy_n(a.values().data() + index[i] * cols, cols, out->value.data() + i * cols);
  return finish<T>(std::move(out), {a}, [index, cols](Node<T>& self) {
    if (T* ga = grad_of(self, 0))
      for (std::size_t i = 0; i < index.size(); ++i)
        for (std::size_t c = 0; c < cols; ++c) ga[index[i] * cols + c] += self.grad[i * cols + c];
  });
}

template <class T>
Tensor<T> relu(const Tensor<T>& a) {
  auto out = make_node<T>(a.shape());
  for (std::size_t i = 0; i < out->value.size(); ++i) out->value[i] = std::max(a.values()[i], T(0));
  return finish<T>(std::move(out), {a}, [](Node<T>& self) {
    const auto& x = self.inputs[0]->value;
    if (T* ga = grad_of(self, 0))
      for (std::size_t i = 0; i < x.size(); ++i)
        if (x[i] > 0) ga[i] += self.grad[i];
  });
}

template <class T>
Tensor<T> sigmoid(const Tensor<T>& a) {
  auto out = make_node<T>(a.shape());
  for (std::size_t i = 0; i < out->value.size(); ++i) out->value[i] = stable_sigmoid(a.values()[i]);
  return finish<T>(std::move(out), {a}, [](Node<T>& self) {
    if (T* ga = grad_of(self, 0))
      for (std::size_t i = 0; i < self.value.size(); ++i) {
        const T s = self.value[i];
        ga[i] += self.grad[i] * s * (T(1) - s);
      }
  });
}

template <class T>
Tensor<T> log(const Tensor<T>& a) {
  constexpr T kFloor = std::numeric_limits<T>::min();
  auto out = make_node<T>(a.shape());
  for (std::size_t i = 0; i < out->value.size(); ++i) out->value[i] = std::log(std::max(a.values()[i], kFloor));
  return finish<T>(std::move(out), {a}, [](Node<T>& self) {
    const auto& x = self.inputs[0]->value;
    if (T* ga = grad_of(self, 0))
      for (std::size_t i = 0; i < x.size(); ++i)
        if (x[i] > kFloor) ga[i] += self.grad[i] / x[i];
  });
}

template <class T>
Tensor<T> log_sigmoid(const Tensor<T>& a) {
  auto out = make_node<T>(a.shape());
  for (std::size_t i = 0; i < out->value.size(); ++i) {
    const T x = a.values()[i];
    out->value[i] = std::min(x, T(0)) - std::log1p(std::exp(-std::abs(x)));
  }
  return finish<T>(std::move(out), {a}, [](Node<T>& self) {
    const auto& x = self.inputs[0]->value;
    if (T* ga = grad_of(self, 0))
      for (std::size_t i = 0; i < x.size(); ++i) ga[i] += self.grad[i] * stable_sigmoid(-x[i]);
  });
}

template <class T>
Tensor<T> softmax_masked(const Tensor<T>& logits, const Mask& mask) {
  if (mask.size() != logits.size()) {
    throw ShapeError("softmax_masked: mask of " + std::to_string(mask.size()) + " entries for logits " +
                     logits.shape().str());
  }
  const std::size_t rows = logits.rows(), cols = logits.cols();
  auto out = make_node<T>(logits.shape());
  auto x = logits.values();
  for (std::size_t r = 0; r < rows; ++r) {
    const std::size_t base = r * cols;
    T mx = -std::numeric_limits<T>::infinity();
    for (std::size_t c = 0; c < cols; ++c)
      if (mask[base + c]) mx = std::max(mx, x[base + c]);
    if (mx == -std::numeric_limits<T>::infinity()) continue;  // fully masked: stays zero
    T denom = 0;
    for (std::size_t c = 0; c < cols; ++c) {
      if (!mask[base + c]) continue;
      const T e = std::exp(x[base + c] - mx);
      out->value[base + c] = e;
      denom += e;
    }
    for (std::size_t c = 0; c < cols; ++c) out->value[base + c] /= denom;
  }
  return finish<T>(std::move(out), {logits}, [rows, cols](Node<T>& self) {
    T* ga = grad_of(self, 0);
    if (!ga) return;
    for (std::size_t r = 0; r < rows; ++r) {
      const T* y = self.value.data() + r * cols;
      const T* g = self.grad.data() + r * cols;
      T inner = 0;
      for (std::size_t c = 0; c < cols; ++c) inner += y[c] * g[c];
      for (std::size_t c = 0; c < cols; ++c) ga[r * cols + c] += y[c] * (g[c] - inner);
    }
  });
}

template <class T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& alpha, const Tensor<T>& beta, T eps) {
  const std::size_t rows = x.rows(), cols = x.cols();
  if (alpha.size() != cols) shape_fail("layer_norm", x.shape(), alpha.shape());
  if (beta.size() != cols) shape_fail("layer_norm", x.shape(), beta.shape());
  auto out = make_node<T>(x.shape());
  std::vector<T> xhat(rows * cols);
  std::vector<T> inv_std(rows);
  auto xv = x.values();
  auto av = alpha.values();
  auto bv = beta.values();
  for (std::size_t r = 0; r < rows; ++r) {
    const T* row = xv.data() + r * cols;
    T mu = 0;
    for (std::size_t c = 0; c < cols; ++c) mu += row[c];
    mu /= static_cast<T>(cols);
    T var = 0;
    for (std::size_t c = 0; c < cols; ++c) var += (row[c] - mu) * (row[c] - mu);
    var /= static_cast<T>(cols);
    const T is = T(1) / std::sqrt(var + eps);
    inv_std[r] = is;
    for (std::size_t c = 0; c < cols; ++c) {
      const T h = (row[c] - mu) * is;
      xhat[r * cols + c] = h;
      out->value[r * cols + c] = av[c] * h + bv[c];
    }
  }
  return finish<T>(std::move(out), {x, alpha, beta},
                   [rows, cols, xhat = std::move(xhat), inv_std = std::move(inv_std)](Node<T>& self) {
                     const T* g = self.grad.data();
                     const auto& av = self.inputs[1]->value;
                     T* gx = grad_of(self, 0);
                     T* galpha = grad_of(self, 1);
                     T* gbeta = grad_of(self, 2);
                     const T n = static_cast<T>(cols);
                     for (std::size_t r = 0; r < rows; ++r) {
                       const T* h = xhat.data() + r * cols;
                       const T* gr = g + r * cols;
                       if (galpha)
                         for (std::size_t c = 0; c < cols; ++c) galpha[c] += gr[c] * h[c];
                       if (gbeta)
                         for (std::size_t c = 0; c < cols; ++c) gbeta[c] += gr[c];
                       if (gx) {
                         T mean_dh = 0, mean_dh_h = 0;
                         for (std::size_t c = 0; c < cols; ++c) {
                           const T dh = gr[c] * av[c];
                           mean_dh += dh;
                           mean_dh_h += dh * h[c];
                         }
                         mean_dh /= n;
                         mean_dh_h /= n;
                         for (std::size_t c = 0; c < cols; ++c) {
                           const T dh = gr[c] * av[c];
                           gx[r * cols + c] += inv_std[r] * (dh - mean_dh - h[c] * mean_dh_h);
                         }
                       }
                     }
                   });
}

template <class T>
Tensor<T> dropout(const Tensor<T>& x, T rate, bool training, Rng& rng) {
  if (!(rate >= 0) || rate >= 1) throw ConfigError("dropout: rate must be in [0, 1), got " + std::to_string(rate));
  if (!training || rate == 0) return x;
  std::bernoulli_distribution keep(1.0 - static_cast<double>(rate));
  const T s = T(1) / (T(1) - rate);
  std::vector<T> factor(x.size());
  for (auto& f : factor) f = keep(rng) ? s : T(0);
  auto out = make_node<T>(x.shape());
  for (std::size_t i = 0; i < factor.size(); ++i) out->value[i] = x.values()[i] * factor[i];
  return finish<T>(std::move(out), {x}, [factor = std::move(factor)](Node<T>& self) {
    if (T* ga = grad_of(self, 0))
      for (std::size_t i = 0; i < factor.size(); ++i) ga[i] += self.grad[i] * factor[i];
  });
}

template <class T>
Tensor<T> sum(const Tensor<T>& a) {
  auto out = make_node<T>({1, 1});
  T s = 0;
  for (T v : a.values()) s += v;
  out->value[0] = s;
  return finish<T>(std::move(out), {a}, [](Node<T>& self) {
    if (T* ga = grad_of(self, 0)) {
      const std::size_t n = self.inputs[0]->value.size();
      for (std::size_t i = 0; i < n; ++i) ga[i] += self.grad[0];
    }
  });
}

template <class T>
Tensor<T> mean(const Tensor<T>& a) {
  return scale(sum(a), T(1) / static_cast<T>(std::max<std::size_t>(1, a.size())));
}

template <class T>
Tensor<T> rowwise_dot(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape()) shape_fail("rowwise_dot", a.shape(), b.shape());
  const std::size_t rows = a.rows(), cols = a.cols();
  auto out = make_node<T>({rows, 1});
  const auto& op = kernels::ops<T>();
  for (std::size_t r = 0; r < rows; ++r)
    out->value[r] = op.dot(a.values().data() + r * cols, b.values().data() + r * cols, cols);
  return finish<T>(std::move(out), {a, b}, [rows, cols](Node<T>& self) {
    const auto& op = kernels::ops<T>();
    const T* av = self.inputs[0]->value.data();
    const T* bv = self.inputs[1]->value.data();
    T* ga = grad_of(self, 0);
    T* gb = grad_of(self, 1);
    for (std::size_t r = 0; r < rows; ++r) {
      const T g = self.grad[r];
      if (ga) op.axpy(g, bv + r * cols, ga + r * cols, cols);
      if (gb) op.axpy(g, av + r * cols, gb + r * cols, cols);
    }
  });
}

template <class T>
void backward(const Tensor<T>& loss) {
  if (loss.size() != 1) throw ShapeError("backward: loss must be a scalar, got shape " + loss.shape().str());
  if (!std::isfinite(static_cast<double>(loss.item()))) throw NumericalError("backward: non-finite loss");
  if (!loss.requires_grad()) return;

  // Iterative post-order DFS; reversed it is a valid reverse-mode schedule.
  std::vector<Node<T>*> order;
  std::unordered_set<Node<T>*> seen;
  std::vector<std::pair<Node<T>*, std::size_t>> stack{{loss.node(), 0}};
  seen.insert(loss.node());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      Node<T>* child = node->inputs[next++].get();
      if (child->requires_grad && seen.insert(child).second) stack.emplace_back(child, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  // Interior nodes start from zero; leaves keep what they have accumulated.
  for (Node<T>* n : order)
    if (n->backward) n->grad.assign(n->value.size(), T(0));
  loss.node()->ensure_grad();
  loss.node()->grad[0] += T(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it)
    if ((*it)->backward) (*it)->backward(**it);
}

template <class T>
Adam<T>::Adam(std::vector<Tensor<T>> params, Options opts) : params_(std::move(params)), opts_(opts) {
  for (const auto& p : params_) {
    m_.emplace_back(p.size(), 0.0);
    v_.emplace_back(p.size(), 0.0);
  }
}

template <class T>
void Adam<T>::step() {
  ++step_;
  const double b1 = opts_.beta1, b2 = opts_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(step_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(step_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto w = params_[i].values();
    auto g = params_[i].grad();
    auto& m = m_[i];
    auto& v = v_[i];
    for (std::size_t j = 0; j < w.size(); ++j) {
      const double gj = (g.empty() ? 0.0 : static_cast<double>(g[j])) + opts_.weight_decay * static_cast<double>(w[j]);
      m[j] = b1 * m[j] + (1.0 - b1) * gj;
      v[j] = b2 * v[j] + (1.0 - b2) * gj * gj;
      const double mhat = m[j] / c1;
      const double vhat = v[j] / c2;
      w[j] = static_cast<T>(static_cast<double>(w[j]) - opts_.lr * mhat / (std::sqrt(vhat) + opts_.eps));
    }
  }
}

template <class T>
void Adam<T>::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

#define POPREC_INSTANTIATE(T)                                                                  \
  template class Tensor<T>;                                                                    \
  template class Adam<T>;                                                                      \
  template Tensor<T> matmul(const Tensor<T>&, const Tensor<T>&);                               \
  template Tensor<T> matmul_bt(const Tensor<T>&, const Tensor<T>&);                            \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                                  \
  template Tensor<T> sub(const Tensor<T>&, const Tensor<T>&);                                  \
  template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                                  \
  template Tensor<T> scale(const Tensor<T>&, T);                                               \
  template Tensor<T> add_scalar(const Tensor<T>&, T);                                          \
  template Tensor<T> transpose(const Tensor<T>&);                                              \
  template Tensor<T> concat_cols(const std::vector<Tensor<T>>&);                               \
  template Tensor<T> concat_rows(const std::vector<Tensor<T>>&);                               \
  template Tensor<T> slice_cols(const Tensor<T>&, std::size_t, std::size_t);                   \
  template Tensor<T> slice_rows(const Tensor<T>&, std::size_t, std::size_t);                   \
  template Tensor<T> gather_rows(const Tensor<T>&, const std::vector<std::size_t>&);           \
  template Tensor<T> relu(const Tensor<T>&);                                                   \
  template Tensor<T> sigmoid(const Tensor<T>&);                                                \
  template Tensor<T> log(const Tensor<T>&);                                                    \
  template Tensor<T> log_sigmoid(const Tensor<T>&);                                            \
  template Tensor<T> softmax_masked(const Tensor<T>&, const Mask&);                            \
  template Tensor<T> layer_norm(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, T);      \
  template Tensor<T> dropout(const Tensor<T>&, T, bool, Rng&);                                 \
  template Tensor<T> sum(const Tensor<T>&);                                                    \
  template Tensor<T> mean(const Tensor<T>&);                                                   \
  template Tensor<T> rowwise_dot(const Tensor<T>&, const Tensor<T>&);                          \
  template void backward(const Tensor<T>&);

POPREC_INSTANTIATE(float)
POPREC_INSTANTIATE(double)

#undef POPREC_INSTANTIATE

}  // namespace poprec::nn
