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

#include "sais/mask_assembly.hpp"

#include <algorithm>
#include <cmath>

#include "sais/error.hpp"
#include "sais/kernels.hpp"
#include "sais/mathutil.hpp"
#include "sais/rng.hpp"

namespace sais::maskops {

PrototypeStack PrototypeStack::zeros(int w, int h, int k) {
  PrototypeStack p;
  p.w = w;
  p.h = h;
  p.k = k;
  p.values.assign(static_cast<size_t>(w) * h * k, 0.0);
  return p;
}

void PrototypeStack::validate() const {
  if (w <= 0 || h <= 0 || k < 1) {
    throw ShapeError("prototype stack requires positive dims and k >= 1");
  }
  if (values.size() != static_cast<size_t>(w) * h * k) {
    throw ShapeError("prototype stack value count does not equal h*w*k");
  }
  for (double v : values) {
    if (!std::isfinite(v)) throw ValidationError("prototype value is not finite");
  }
}

SoftMask assemble(const PrototypeStack& p, const CoefficientVector& c) {
  p.validate();
  if (static_cast<int>(c.values.size()) != p.k) {
    throw ShapeError("assemble: coefficient length does not match prototype channels");
  }
  SoftMask out = SoftMask::filled(p.w, p.h, 0.0);
  const size_t pixels = static_cast<size_t>(p.w) * p.h;
  // One k-wide dot product per pixel: the stack is a (h*w) x k matrix.
  kernels::matvec(p.values.data(), pixels, p.k, c.values.data(), out.values.data());
  for (double& v : out.values) v = sigmoid(v);
  return out;
}

SoftMask upsample_bilinear(const SoftMask& mask, int out_w, int out_h) {
  mask.validate();
  if (out_w <= 0 || out_h <= 0) {
    throw ShapeError("upsample_bilinear: target dimensions must be positive");
  }
  SoftMask out = SoftMask::filled(out_w, out_h, 0.0);
  const double scale_x = static_cast<double>(mask.width) / out_w;
  const double scale_y = static_cast<double>(mask.height) / out_h;
  for (int y = 0; y < out_h; ++y) {
    double sy = (y + 0.5) * scale_y - 0.5;
    sy = std::clamp(sy, 0.0, static_cast<double>(mask.height - 1));
    const int y0 = static_cast<int>(std::floor(sy));
    const int y1 = std::min(y0 + 1, mask.height - 1);
    const double fy = sy - y0;
    for (int x = 0; x < out_w; ++x) {
      double sx = (x + 0.5) * scale_x - 0.5;
      sx = std::clamp(sx, 0.0, static_cast<double>(mask.width - 1));
      const int x0 = static_cast<int>(std::floor(sx));
      const int x1 = std::min(x0 + 1, mask.width - 1);
      const double fx = sx - x0;
      const double top = mask.at(x0, y0) * (1.0 - fx) + mask.at(x1, y0) * fx;
      const double bot = mask.at(x0, y1) * (1.0 - fx) + mask.at(x1, y1) * fx;
      out.set(x, y, top * (1.0 - fy) + bot * fy);
    }
  }
  return out;
}

SoftMask crop_to_box(const SoftMask& mask, const BBox& box) {
  mask.validate();
  box.validate();
  SoftMask out = SoftMask::filled(mask.width, mask.height, 0.0);
  const double x1 = std::max(box.x1, 0.0);
  const double y1 = std::max(box.y1, 0.0);
  const double x2 = std::min(box.x2, static_cast<double>(mask.width));
  const double y2 = std::min(box.y2, static_cast<double>(mask.height));
  for (int y = 0; y < mask.height; ++y) {
    const double cy = y + 0.5;
    if (cy < y1 || cy >= y2) continue;
    for (int x = 0; x < mask.width; ++x) {
      const double cx = x + 0.5;
      if (cx < x1 || cx >= x2) continue;
      out.set(x, y, mask.at(x, y));
    }
  }
  return out;
}

BinaryMask binarize(const SoftMask& mask, double threshold) {
  mask.validate();
  if (!(threshold > 0.0 && threshold < 1.0)) {
    throw DomainError("binarize: threshold must lie in (0,1)");
  }
  BinaryMask out = BinaryMask::zeros(mask.width, mask.height);
  for (size_t i = 0; i < mask.values.size(); ++i) {
    out.bits[i] = mask.values[i] > threshold ? 1 : 0;
  }
  return out;
}

namespace {

// Cholesky solve of (spd) m x = rhs, in place. m is n x n row-major.
std::vector<double> cholesky_solve(std::vector<double> m, std::vector<double> rhs, int n) {
  for (int j = 0; j < n; ++j) {
    double d = m[static_cast<size_t>(j) * n + j];
    for (int p = 0; p < j; ++p) {
      const double v = m[static_cast<size_t>(j) * n + p];
      d -= v * v;
    }
    if (!(d > 0.0)) throw DomainError("normal equations are not positive definite");
    const double ljj = std::sqrt(d);
    m[static_cast<size_t>(j) * n + j] = ljj;
    for (int i = j + 1; i < n; ++i) {
      double v = m[static_cast<size_t>(i) * n + j];
      for (int p = 0; p < j; ++p) {
        v -= m[static_cast<size_t>(i) * n + p] * m[static_cast<size_t>(j) * n + p];
      }
      m[static_cast<size_t>(i) * n + j] = v / ljj;
    }
  }
  // forward: L y = rhs
  for (int i = 0; i < n; ++i) {
    double v = rhs[i];
    for (int p = 0; p < i; ++p) v -= m[static_cast<size_t>(i) * n + p] * rhs[p];
    rhs[i] = v / m[static_cast<size_t>(i) * n + i];
  }
  // backward: L^T x = y
  for (int i = n - 1; i >= 0; --i) {
    double v = rhs[i];
    for (int p = i + 1; p < n; ++p) v -= m[static_cast<size_t>(p) * n + i] * rhs[p];
    rhs[i] = v / m[static_cast<size_t>(i) * n + i];
  }
  return rhs;
}

constexpr double kLogitClamp = 1e-3;

}  // namespace

FitResult fit_coefficients(const PrototypeStack& p, const BinaryMask& target, double ridge) {
  p.validate();
  target.validate();
  if (target.width != p.w || target.height != p.h) {
    throw ShapeError("fit_coefficients: target dims do not match prototype dims");
  }
  if (ridge < 0.0) throw DomainError("fit_coefficients: ridge must be >= 0");
  const size_t pixels = static_cast<size_t>(p.w) * p.h;
  const int k = p.k;
  if (static_cast<size_t>(k) > pixels && ridge == 0.0) {
    throw DomainError("fit_coefficients: k > h*w is ill-posed without ridge > 0");
  }

  const double z_on = logit(1.0 - kLogitClamp);
  const double z_off = logit(kLogitClamp);

  // Normal equations: (A^T A + ridge I) C = A^T z, accumulated row by row.
  std::vector<double> ata(static_cast<size_t>(k) * k, 0.0);
  std::vector<double> atz(k, 0.0);
  for (size_t px = 0; px < pixels; ++px) {
    const double* row = p.values.data() + px * k;
    const double z = target.bits[px] ? z_on : z_off;
    for (int j = 0; j < k; ++j) {
      kernels::axpy(row[j], row, ata.data() + static_cast<size_t>(j) * k, k);
    }
    kernels::axpy(z, row, atz.data(), k);
  }
  for (int j = 0; j < k; ++j) ata[static_cast<size_t>(j) * k + j] += ridge;

  FitResult result;
  result.coefficients.values = cholesky_solve(std::move(ata), std::move(atz), k);

  double residual = 0.0;
  for (size_t px = 0; px < pixels; ++px) {
    const double* row = p.values.data() + px * k;
    const double z = target.bits[px] ? z_on : z_off;
    const double diff = kernels::dot(row, result.coefficients.values.data(), k) - z;
    residual += diff * diff;
  }
  result.residual = residual;
  return result;
}

PrototypeStack smooth_random_basis(int w, int h, int k, uint64_t seed) {
  if (w <= 0 || h <= 0 || k < 1) {
    throw ShapeError("smooth_random_basis: requires positive dims and k >= 1");
  }
  constexpr uint64_t kBasisStream = 0x50524f544f424153ULL;
  constexpr int kModes = 6;  // cosine modes 0..5 per axis
  PrototypeStack p = PrototypeStack::zeros(w, h, k);
  for (int j = 0; j < k; ++j) {
    rng::SplitMix64 gen(rng::derive(seed, kBasisStream, static_cast<uint64_t>(j)));
    double coeff[kModes][kModes];
    for (int u = 0; u < kModes; ++u) {
      for (int v = 0; v < kModes; ++v) coeff[u][v] = gen.next_gaussian();
    }
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        double value = 0.0;
        for (int u = 0; u < kModes; ++u) {
          const double cu = std::cos(M_PI * u * (x + 0.5) / w);
          for (int v = 0; v < kModes; ++v) {
            value += coeff[u][v] * cu * std::cos(M_PI * v * (y + 0.5) / h);
          }
        }
        p.set(x, y, j, value);
      }
    }
  }
  return p;
}

PrototypeStack gt_mask_basis(const Scene& scene) {
  scene.validate();
  if (scene.instances.empty()) {
    throw DomainError("gt_mask_basis: scene has no instances");
  }
  PrototypeStack p = PrototypeStack::zeros(scene.width, scene.height,
                                           static_cast<int>(scene.instances.size()));
  for (size_t i = 0; i < scene.instances.size(); ++i) {
    const BinaryMask& mask = scene.instances[i].mask;
    for (int y = 0; y < scene.height; ++y) {
      for (int x = 0; x < scene.width; ++x) {
        p.set(x, y, static_cast<int>(i), mask.at(x, y) ? 1.0 : -1.0);
      }
    }
  }
  return p;
}

}  // namespace sais::maskops
