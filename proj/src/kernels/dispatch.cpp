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

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <string>

#include "poprec/common.hpp"
#include "poprec/kernels.hpp"

namespace poprec::kernels {

namespace {

template <class T>
constexpr Ops<T> kScalarOps{
    static_cast<T (*)(const T*, const T*, std::size_t)>(&scalar::dot),
    static_cast<void (*)(T, const T*, T*, std::size_t)>(&scalar::axpy)};

#if defined(__x86_64__) || defined(_M_X64)
template <class T>
constexpr Ops<T> kAvx2Ops{
    static_cast<T (*)(const T*, const T*, std::size_t)>(&avx2::dot),
    static_cast<void (*)(T, const T*, T*, std::size_t)>(&avx2::axpy)};
#endif

#if defined(__ARM_NEON) && defined(__aarch64__)
template <class T>
constexpr Ops<T> kNeonOps{
    static_cast<T (*)(const T*, const T*, std::size_t)>(&neon::dot),
    static_cast<void (*)(T, const T*, T*, std::size_t)>(&neon::axpy)};
#endif

Isa initial_isa() {
  Isa isa = detected_isa();
  if (const char* env = std::getenv("POPREC_ISA")) {
    std::string v(env);
    Isa wanted = isa;
    if (v == "scalar") wanted = Isa::kScalar;
    else if (v == "avx2") wanted = Isa::kAvx2;
    else if (v == "neon") wanted = Isa::kNeon;
    if (isa_supported(wanted)) isa = wanted;
  }
  return isa;
}

std::atomic<Isa>& active() {
  static std::atomic<Isa> isa{initial_isa()};
  return isa;
}

}  // namespace

std::string_view isa_name(Isa isa) {
  switch (isa) {
    case Isa::kScalar: return "scalar";
    case Isa::kAvx2: return "avx2";
    case Isa::kNeon: return "neon";
  }
  return "unknown";
}

bool isa_supported(Isa isa) {
  switch (isa) {
    case Isa::kScalar:
      return true;
    case Isa::kAvx2:
#if defined(__x86_64__) || defined(_M_X64)
      return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
      return false;
#endif
    case Isa::kNeon:
#if defined(__ARM_NEON) && defined(__aarch64__)
      return true;
#else
      return false;
#endif
  }
  return false;
}

Isa detected_isa() {
  if (isa_supported(Isa::kAvx2)) return Isa::kAvx2;
  if (isa_supported(Isa::kNeon)) return Isa::kNeon;
  return Isa::kScalar;
}

Isa active_isa() { return active().load(std::memory_order_relaxed); }

void set_active_isa(Isa isa) {
  if (!isa_supported(isa)) throw ConfigError("ISA not supported on this host: " + std::string(isa_name(isa)));
  active().store(isa, std::memory_order_relaxed);
}

template <class T>
const Ops<T>& ops_for(Isa isa) {
  switch (isa) {
#if defined(__x86_64__) || defined(_M_X64)
    case Isa::kAvx2: return kAvx2Ops<T>;
#endif
#if defined(__ARM_NEON) && defined(__aarch64__)
    case Isa::kNeon: return kNeonOps<T>;
#endif
    default: return kScalarOps<T>;
  }
}

template const Ops<float>& ops_for<float>(Isa);
template const Ops<double>& ops_for<double>(Isa);

template <class T>
void gemm_nn(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n, bool accumulate) {
  const auto& op = ops<T>();
  for (std::size_t i = 0; i < m; ++i) {
    T* crow = c + i * n;
    if (!accumulate) std::fill(crow, crow + n, T(0));
    const T* arow = a + i * k;
    for (std::size_t p = 0; p < k; ++p) op.axpy(arow[p], b + p * n, crow, n);
  }
}

template <class T>
void gemm_nt(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n, bool accumulate) {
  const auto& op = ops<T>();
  for (std::size_t i = 0; i < m; ++i) {
    const T* arow = a + i * k;
    T* crow = c + i * n;
    for (std::size_t j = 0; j < n; ++j) {
      T v = op.dot(arow, b + j * k, k);
      crow[j] = accumulate ? crow[j] + v : v;
    }
  }
}

template <class T>
void gemm_tn_acc(const T* a, const T* b, T* c, std::size_t k, std::size_t m, std::size_t n) {
  const auto& op = ops<T>();
  for (std::size_t p = 0; p < k; ++p) {
    const T* arow = a + p * m;
    const T* brow = b + p * n;
    for (std::size_t i = 0; i < m; ++i) op.axpy(arow[i], brow, c + i * n, n);
  }
}

template void gemm_nn<float>(const float*, const float*, float*, std::size_t, std::size_t, std::size_t, bool);
template void gemm_nn<double>(const double*, const double*, double*, std::size_t, std::size_t, std::size_t, bool);
template void gemm_nt<float>(const float*, const float*, float*, std::size_t, std::size_t, std::size_t, bool);
template void gemm_nt<double>(const double*, const double*, double*, std::size_t, std::size_t, std::size_t, bool);
template void gemm_tn_acc<float>(const float*, const float*, float*, std::size_t, std::size_t, std::size_t);
template void gemm_tn_acc<double>(const double*, const double*, double*, std::size_t, std::size_t, std::size_t);

}  // namespace poprec::kernels
