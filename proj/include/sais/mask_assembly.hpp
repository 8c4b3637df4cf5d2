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
// Instance masks from shared prototypes: a per-pixel dot product of the
// k-channel prototype stack with one instance's coefficient vector, through
// a sigmoid. Also the reverse question, answered by ridge least squares:
// how well can a given target mask be represented by this prototype basis?

#ifndef SAIS_MASK_ASSEMBLY_HPP_
#define SAIS_MASK_ASSEMBLY_HPP_

#include <vector>

#include "sais/core_types.hpp"

namespace sais::maskops {

/// h*w*k reals, row-major with channel fastest:
/// values[(y*w + x)*k + j] is channel j at pixel (x, y).
struct PrototypeStack {
  int w = 0;
  int h = 0;
  int k = 0;
  std::vector<double> values;

  static PrototypeStack zeros(int w, int h, int k);

  double at(int x, int y, int j) const {
    return values[(static_cast<size_t>(y) * w + x) * k + j];
  }
  void set(int x, int y, int j, double v) {
    values[(static_cast<size_t>(y) * w + x) * k + j] = v;
  }

  void validate() const;
};

struct CoefficientVector {
  std::vector<double> values;
};

/// sigmoid(P . C) per pixel. Throws ShapeError when C length != P.k.
SoftMask assemble(const PrototypeStack& p, const CoefficientVector& c);

/// Align-corners-false bilinear resize; identity when dims are unchanged.
SoftMask upsample_bilinear(const SoftMask& mask, int out_w, int out_h);

/// Zero out values whose pixel center falls outside the box
/// (x1 <= cx < x2, y1 <= cy < y2); box is clamped to the image bounds.
SoftMask crop_to_box(const SoftMask& mask, const BBox& box);

/// bit = 1 iff value > threshold. Threshold must lie in (0, 1).
BinaryMask binarize(const SoftMask& mask, double threshold);

struct FitResult {
  CoefficientVector coefficients;
  double residual = 0.0;  // ||A.C - z||^2 at the solution
};

/// Ridge least squares in logit space: min_C ||A.C - z||^2 + ridge*||C||^2
/// with A the (h*w) x k prototype matrix and z the logits of the target
/// clamped to [eps, 1-eps], eps = 1e-3. Solved by normal equations with a
/// Cholesky factorization; deterministic. Throws DomainError when k > h*w
/// with ridge == 0.
FitResult fit_coefficients(const PrototypeStack& p, const BinaryMask& target,
                           double ridge = 1e-6);

/// Deterministic smooth basis for capacity sweeps: each channel is a random
/// mixture of low-frequency cosine modes. Channels are a fixed stream per
/// index, so the first k channels of a wider stack equal the k-stack.
PrototypeStack smooth_random_basis(int w, int h, int k, uint64_t seed);

/// Prototype basis from a scene's ground truth: channel i is instance i's
/// mask recoded to +1 on / -1 off (k = instance count).
PrototypeStack gt_mask_basis(const Scene& scene);

}  // namespace sais::maskops

#endif  // SAIS_MASK_ASSEMBLY_HPP_
