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

// Data-parallel inner loops used by the tensor core. Every kernel has a
// scalar reference implementation; vector variants (AVX2+FMA on x86-64,
// NEON on AArch64) are selected once at runtime from CPU features and may be
// overridden with POPREC_ISA=scalar|avx2|neon.

#include <cstddef>
#include <string_view>

namespace poprec::kernels {

enum class Isa { kScalar, kAvx2, kNeon };

template <class T>
struct Ops {
  // sum_i a[i] * b[i]
  T (*dot)(const T* a, const T* b, std::size_t n);
  // y[i] += alpha * x[i]
  void (*axpy)(T alpha, const T* x, T* y, std::size_t n);
};

std::string_view isa_name(Isa isa);
bool isa_supported(Isa isa);
// Best ISA the host supports, ignoring any override.
Isa detected_isa();
Isa active_isa();
// Throws ConfigError when the host cannot run `isa`.
void set_active_isa(Isa isa);

template <class T>
const Ops<T>& ops_for(Isa isa);

template <class T>
const Ops<T>& ops() {
  return ops_for<T>(active_isa());
}

// Row-major matrix products built on the active dot/axpy kernels.
// Each output row depends only on the matching row of A, which keeps row
// results bit-identical regardless of how many other rows are present.

// C[M x N] (+)= A[M x K] * B[K x N]
template <class T>
void gemm_nn(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n, bool accumulate);

// C[M x N] (+)= A[M x K] * B[N x K]^T
template <class T>
void gemm_nt(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n, bool accumulate);

// C[M x N] += A[K x M]^T * B[K x N]
template <class T>
void gemm_tn_acc(const T* a, const T* b, T* c, std::size_t k, std::size_t m, std::size_t n);

namespace scalar {
float dot(const float* a, const float* b, std::size_t n);
double dot(const double* a, const double* b, std::size_t n);
void axpy(float alpha, const float* x, float* y, std::size_t n);
void axpy(double alpha, const double* x, double* y, std::size_t n);
}  // namespace scalar

#if defined(__x86_64__) || defined(_M_X64)
namespace avx2 {
float dot(const float* a, const float* b, std::size_t n);
double dot(const double* a, const double* b, std::size_t n);
void axpy(float alpha, const float* x, float* y, std::size_t n);
void axpy(double alpha, const double* x, double* y, std::size_t n);
}  // namespace avx2
#endif

#if defined(__ARM_NEON) && defined(__aarch64__)
namespace neon {
float dot(const float* a, const float* b, std::size_t n);
double dot(const double* a, const double* b, std::size_t n);
void axpy(float alpha, const float* x, float* y, std::size_t n);
void axpy(double alpha, const double* x, double* y, std::size_t n);
}  // namespace neon
#endif

}  // namespace poprec::kernels
