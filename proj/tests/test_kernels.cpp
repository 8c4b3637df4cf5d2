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
// Backend equivalence: the AVX2 variants must agree with the scalar
// reference kernels to reassociation rounding on every size, including the
// unaligned tails.

#include <doctest.h>

#include <cmath>
#include <vector>

#include "sais/kernels.hpp"
#include "sais/rng.hpp"

using namespace sais;

namespace {

std::vector<double> random_vec(rng::SplitMix64& gen, size_t n) {
  std::vector<double> v(n);
  for (double& x : v) x = gen.next_uniform(-2.0, 2.0);
  return v;
}

}  // namespace

TEST_CASE("scalar dot matches a plain loop exactly") {
  rng::SplitMix64 gen(5);
  const auto a = random_vec(gen, 37);
  const auto b = random_vec(gen, 37);
  double expect = 0.0;
  for (size_t i = 0; i < a.size(); ++i) expect += a[i] * b[i];
  CHECK(kernels::scalar::dot(a.data(), b.data(), a.size()) == expect);
}

TEST_CASE("avx2 kernels match scalar within 1e-12") {
  if (!kernels::avx2_available()) {
    MESSAGE("AVX2 not available; dispatch falls back to scalar");
    return;
  }
  rng::SplitMix64 gen(99);
  for (size_t n : {0UL, 1UL, 3UL, 4UL, 7UL, 8UL, 15UL, 32UL, 100UL, 1000UL, 4097UL}) {
    const auto a = random_vec(gen, n);
    const auto b = random_vec(gen, n);
    CHECK(std::fabs(kernels::avx2::dot(a.data(), b.data(), n) -
                    kernels::scalar::dot(a.data(), b.data(), n)) < 1e-12);
    CHECK(std::fabs(kernels::avx2::sum(a.data(), n) - kernels::scalar::sum(a.data(), n)) <
          1e-12);

    auto y1 = random_vec(gen, n);
    auto y2 = y1;
    const double alpha = gen.next_uniform(-3.0, 3.0);
    kernels::scalar::axpy(alpha, a.data(), y1.data(), n);
    kernels::avx2::axpy(alpha, a.data(), y2.data(), n);
    for (size_t i = 0; i < n; ++i) CHECK(std::fabs(y1[i] - y2[i]) < 1e-12);
  }
}

TEST_CASE("avx2 matvec matches scalar within 1e-12") {
  if (!kernels::avx2_available()) return;
  rng::SplitMix64 gen(1);
  for (size_t cols : {1UL, 2UL, 5UL, 8UL, 32UL, 33UL}) {
    const size_t rows = 17;
    const auto a = random_vec(gen, rows * cols);
    const auto x = random_vec(gen, cols);
    std::vector<double> o1(rows), o2(rows);
    kernels::scalar::matvec(a.data(), rows, cols, x.data(), o1.data());
    kernels::avx2::matvec(a.data(), rows, cols, x.data(), o2.data());
    for (size_t r = 0; r < rows; ++r) CHECK(std::fabs(o1[r] - o2[r]) < 1e-12);
  }
}

TEST_CASE("backend selection") {
  const kernels::Backend original = kernels::active_backend();
  CHECK(kernels::set_backend(kernels::Backend::scalar));
  CHECK(kernels::active_backend() == kernels::Backend::scalar);
  if (kernels::avx2_available()) {
    CHECK(kernels::set_backend(kernels::Backend::avx2));
    CHECK(kernels::active_backend() == kernels::Backend::avx2);
  } else {
    CHECK_FALSE(kernels::set_backend(kernels::Backend::avx2));
    CHECK(kernels::active_backend() == kernels::Backend::scalar);
  }
  kernels::set_backend(original);
}

TEST_CASE("dispatched kernels agree with the reference under both backends") {
  const kernels::Backend original = kernels::active_backend();
  rng::SplitMix64 gen(42);
  const auto a = random_vec(gen, 301);
  const auto b = random_vec(gen, 301);
  const double ref = kernels::scalar::dot(a.data(), b.data(), a.size());
  for (kernels::Backend backend : {kernels::Backend::scalar, kernels::Backend::avx2}) {
    if (!kernels::set_backend(backend)) continue;
    CHECK(std::fabs(kernels::dot(a.data(), b.data(), a.size()) - ref) < 1e-12);
  }
  kernels::set_backend(original);
}
