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
//
// Dense double-precision kernels behind the arithmetic inner loops
// (mask assembly, convolutions, least-squares normal equations).
// A scalar reference implementation always exists; an AVX2+FMA variant is
// selected at runtime when the CPU supports it. The two backends agree to
// within reassociation rounding (equivalence-tested at 1e-12).

#ifndef SAIS_KERNELS_HPP_
#define SAIS_KERNELS_HPP_

#include <cstddef>
#include <string>

namespace sais::kernels {

enum class Backend { scalar, avx2 };

/// Backend currently in effect. Resolved once from CPU capabilities and the
/// SAIS_KERNELS environment variable (scalar|avx2|auto, default auto).
Backend active_backend();

/// Force a backend. Returns false (and leaves the selection unchanged)
/// when the requested backend is not available on this CPU/build.
bool set_backend(Backend b);

bool avx2_available();

std::string backend_name(Backend b);

/// sum_i a[i]*b[i]
double dot(const double* a, const double* b, size_t n);

/// y[i] += alpha * x[i]
void axpy(double alpha, const double* x, double* y, size_t n);

/// out[r] = dot(a + r*cols, x, cols) for r in [0, rows)
void matvec(const double* a, size_t rows, size_t cols, const double* x, double* out);

/// sum_i x[i]
double sum(const double* x, size_t n);

// Reference kernels: plain scalar loops in index order, fixed operation
// order, independent of the dispatch above. Tests compare backends here.
namespace scalar {
double dot(const double* a, const double* b, size_t n);
void axpy(double alpha, const double* x, double* y, size_t n);
void matvec(const double* a, size_t rows, size_t cols, const double* x, double* out);
double sum(const double* x, size_t n);
}  // namespace scalar

namespace avx2 {
double dot(const double* a, const double* b, size_t n);
void axpy(double alpha, const double* x, double* y, size_t n);
void matvec(const double* a, size_t rows, size_t cols, const double* x, double* out);
double sum(const double* x, size_t n);
}  // namespace avx2

}  // namespace sais::kernels

#endif  // SAIS_KERNELS_HPP_
