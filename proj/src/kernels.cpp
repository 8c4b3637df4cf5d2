// Copyright 2026 The sais Authors
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

#include "sais/kernels.hpp"

#include <atomic>
#include <cstdlib>
#include <cstring>

namespace sais::kernels {

namespace scalar {

double dot(const double* a, const double* b, size_t n) {
  double acc = 0.0;
  for (size_t i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

void axpy(double alpha, const double* x, double* y, size_t n) {
  for (size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void matvec(const double* a, size_t rows, size_t cols, const double* x, double* out) {
  for (size_t r = 0; r < rows; ++r) out[r] = dot(a + r * cols, x, cols);
}

double sum(const double* x, size_t n) {
  double acc = 0.0;
  for (size_t i = 0; i < n; ++i) acc += x[i];
  return acc;
}

}  // namespace scalar

bool avx2_available() {
#if SAIS_HAVE_AVX2_TU && (defined(__x86_64__) || defined(__i386__))
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

namespace {

struct Dispatch {
  double (*dot)(const double*, const double*, size_t) = scalar::dot;
  void (*axpy)(double, const double*, double*, size_t) = scalar::axpy;
  void (*matvec)(const double*, size_t, size_t, const double*, double*) = scalar::matvec;
  double (*sum)(const double*, size_t) = scalar::sum;
  Backend backend = Backend::scalar;
};

Dispatch make_dispatch(Backend b) {
  Dispatch d;
#if SAIS_HAVE_AVX2_TU
  if (b == Backend::avx2) {
    d.dot = avx2::dot;
    d.axpy = avx2::axpy;
    d.matvec = avx2::matvec;
    d.sum = avx2::sum;
    d.backend = Backend::avx2;
  }
#else
  (void)b;
#endif
  return d;
}

Backend initial_backend() {
  const char* env = std::getenv("SAIS_KERNELS");
  if (env != nullptr) {
    if (std::strcmp(env, "scalar") == 0) return Backend::scalar;
    if (std::strcmp(env, "avx2") == 0 && avx2_available()) return Backend::avx2;
    // "auto" and unknown values fall through to detection.
  }
  return avx2_available() ? Backend::avx2 : Backend::scalar;
}

Dispatch& dispatch() {
  static Dispatch d = make_dispatch(initial_backend());
  return d;
}

}  // namespace

Backend active_backend() { return dispatch().backend; }

bool set_backend(Backend b) {
  if (b == Backend::avx2 && !avx2_available()) return false;
  dispatch() = make_dispatch(b);
  return true;
}

std::string backend_name(Backend b) {
  return b == Backend::avx2 ? "avx2" : "scalar";
}

double dot(const double* a, const double* b, size_t n) { return dispatch().dot(a, b, n); }

void axpy(double alpha, const double* x, double* y, size_t n) {
  dispatch().axpy(alpha, x, y, n);
}

void matvec(const double* a, size_t rows, size_t cols, const double* x, double* out) {
  dispatch().matvec(a, rows, cols, x, out);
}

double sum(const double* x, size_t n) { return dispatch().sum(x, n); }

#if !SAIS_HAVE_AVX2_TU
namespace avx2 {
double dot(const double* a, const double* b, size_t n) { return scalar::dot(a, b, n); }
void axpy(double alpha, const double* x, double* y, size_t n) { scalar::axpy(alpha, x, y, n); }
void matvec(const double* a, size_t rows, size_t cols, const double* x, double* out) {
  scalar::matvec(a, rows, cols, x, out);
}
double sum(const double* x, size_t n) { return scalar::sum(x, n); }
}  // namespace avx2
#endif

}  // namespace sais::kernels
