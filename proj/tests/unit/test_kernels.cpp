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

#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include "poprec/common.hpp"
#include "poprec/kernels.hpp"

using namespace poprec;
using namespace poprec::kernels;

namespace {

template <class T>
std::vector<T> random_vec(std::size_t n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> d(-1.0, 1.0);
  std::vector<T> v(n);
  for (auto& x : v) x = static_cast<T>(d(rng));
  return v;
}

// Naive long-double reference.
template <class T>
long double ref_dot(const std::vector<T>& a, const std::vector<T>& b) {
  long double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += static_cast<long double>(a[i]) * b[i];
  return s;
}

std::vector<Isa> vector_isas() {
  std::vector<Isa> out;
  for (Isa isa : {Isa::kAvx2, Isa::kNeon})
    if (isa_supported(isa)) out.push_back(isa);
  return out;
}

template <class T>
void check_equivalence(double tol) {
  std::mt19937_64 rng(7);
  const auto& ref = ops_for<T>(Isa::kScalar);
  for (Isa isa : vector_isas()) {
    CAPTURE(isa_name(isa));
    const auto& vec = ops_for<T>(isa);
    for (std::size_t n : {0u, 1u, 3u, 7u, 8u, 9u, 15u, 16u, 17u, 31u, 50u, 176u, 1000u}) {
      CAPTURE(n);
      auto a = random_vec<T>(n, rng), b = random_vec<T>(n, rng);
      const long double exact = ref_dot(a, b);
      const double bound = tol * (1.0 + static_cast<double>(n));
      CHECK(std::fabs(static_cast<double>(ref.dot(a.data(), b.data(), n) - exact)) <= bound);
      CHECK(std::fabs(static_cast<double>(vec.dot(a.data(), b.data(), n) - exact)) <= bound);

      auto y1 = random_vec<T>(n, rng);
      auto y2 = y1;
      const T alpha = static_cast<T>(0.37);
      ref.axpy(alpha, a.data(), y1.data(), n);
      vec.axpy(alpha, a.data(), y2.data(), n);
      for (std::size_t i = 0; i < n; ++i) CHECK(std::fabs(static_cast<double>(y1[i] - y2[i])) <= 2 * tol);
    }
  }
}

}  // namespace

TEST_CASE("scalar kernel matches a long-double reference") {
  std::mt19937_64 rng(1);
  auto a = random_vec<double>(101, rng), b = random_vec<double>(101, rng);
  CHECK(static_cast<double>(std::fabs(scalar::dot(a.data(), b.data(), a.size()) - ref_dot(a, b))) < 1e-13);
  std::vector<double> y(101, 1.0);
  scalar::axpy(2.0, a.data(), y.data(), y.size());
  for (std::size_t i = 0; i < y.size(); ++i) CHECK(y[i] == 1.0 + 2.0 * a[i]);
}

TEST_CASE("vector kernels agree with the scalar reference (float)") { check_equivalence<float>(1e-6); }

TEST_CASE("vector kernels agree with the scalar reference (double)") { check_equivalence<double>(1e-14); }

TEST_CASE("detected ISA is supported and selectable") {
  CHECK(isa_supported(Isa::kScalar));
  CHECK(isa_supported(detected_isa()));
  const Isa before = active_isa();
  set_active_isa(Isa::kScalar);
  CHECK(active_isa() == Isa::kScalar);
  set_active_isa(before);
  for (Isa isa : {Isa::kAvx2, Isa::kNeon})
    if (!isa_supported(isa)) CHECK_THROWS_AS(set_active_isa(isa), ConfigError);
}

TEST_CASE("gemm variants match a triple loop under every ISA") {
  std::mt19937_64 rng(3);
  const std::size_t m = 5, k = 13, n = 9;
  auto a = random_vec<double>(m * k, rng);
  auto b = random_vec<double>(k * n, rng);
  auto bt = random_vec<double>(n * k, rng);
  const Isa before = active_isa();
  std::vector<Isa> isas{Isa::kScalar};
  for (Isa i : vector_isas()) isas.push_back(i);
  for (Isa isa : isas) {
    set_active_isa(isa);
    std::vector<double> c(m * n, 0.0), cbt(m * n, 0.0), ctn(k * n, 0.5);
    gemm_nn(a.data(), b.data(), c.data(), m, k, n, false);
    gemm_nt(a.data(), bt.data(), cbt.data(), m, k, n, false);
    // A is m x k, viewed as K=m rows of M=k columns: C[k x n] += A^T B[m x n]
    auto b2 = random_vec<double>(m * n, rng);
    gemm_tn_acc(a.data(), b2.data(), ctn.data(), m, k, n);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        double s = 0, sbt = 0;
        for (std::size_t p = 0; p < k; ++p) {
          s += a[i * k + p] * b[p * n + j];
          sbt += a[i * k + p] * bt[j * k + p];
        }
        CHECK(c[i * n + j] == doctest::Approx(s).epsilon(1e-12));
        CHECK(cbt[i * n + j] == doctest::Approx(sbt).epsilon(1e-12));
      }
    for (std::size_t i = 0; i < k; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        double s = 0.5;
        for (std::size_t p = 0; p < m; ++p) s += a[p * k + i] * b2[p * n + j];
        CHECK(ctn[i * n + j] == doctest::Approx(s).epsilon(1e-12));
      }
  }
  set_active_isa(before);
}

TEST_CASE("gemm rows do not depend on the other rows") {
  std::mt19937_64 rng(4);
  const std::size_t k = 37, n = 11;
  auto a = random_vec<float>(6 * k, rng);
  auto b = random_vec<float>(k * n, rng);
  std::vector<float> full(6 * n), one(n);
  gemm_nn(a.data(), b.data(), full.data(), 6, k, n, false);
  gemm_nn(a.data() + 4 * k, b.data(), one.data(), 1, k, n, false);
  for (std::size_t j = 0; j < n; ++j) CHECK(full[4 * n + j] == one[j]);
}
