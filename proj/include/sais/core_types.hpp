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

#ifndef SAIS_CORE_TYPES_HPP_
#define SAIS_CORE_TYPES_HPP_

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace sais {

/// Axis-aligned box in continuous pixel coordinates, origin top-left,
/// y growing downward. Strictly positive width and height.
struct BBox {
  double x1 = 0.0;
  double y1 = 0.0;
  double x2 = 0.0;
  double y2 = 0.0;

  double width() const { return x2 - x1; }
  double height() const { return y2 - y1; }

  /// Throws GeometryError unless x2 > x1, y2 > y1 and all coordinates finite.
  void validate() const;
};

/// Row-major binary grid. bits[y * width + x] is pixel (x, y).
struct BinaryMask {
  int width = 0;
  int height = 0;
  std::vector<uint8_t> bits;  // values 0 or 1

  static BinaryMask zeros(int width, int height);

  uint8_t at(int x, int y) const { return bits[static_cast<size_t>(y) * width + x]; }
  void set(int x, int y, uint8_t v) { bits[static_cast<size_t>(y) * width + x] = v; }
  size_t count_on() const;

  void validate() const;
};

/// Row-major grid of reals in [0, 1].
struct SoftMask {
  int width = 0;
  int height = 0;
  std::vector<double> values;

  static SoftMask filled(int width, int height, double v);

  double at(int x, int y) const { return values[static_cast<size_t>(y) * width + x]; }
  void set(int x, int y, double v) { values[static_cast<size_t>(y) * width + x] = v; }

  void validate() const;
};

/// One ground-truth instance: class, box, mask, cached box area.
struct InstanceAnnotation {
  int class_id = 0;
  BBox box;
  BinaryMask mask;
  double area = 0.0;  // box area, cached at construction

  static InstanceAnnotation make(int class_id, const BBox& box, BinaryMask mask);
};

/// An image-sized canvas plus its instance annotations. No pixel data;
/// images are derived (see synth).
struct Scene {
  std::string id;
  int width = 0;
  int height = 0;
  std::vector<InstanceAnnotation> instances;

  /// Throws ValidationError naming the offending instance index on any
  /// core invariant violation.
  void validate() const;
};

/// One predicted instance. The mask is optional for box-only evaluation.
struct Detection {
  int class_id = 0;
  double score = 0.0;
  BBox box;
  std::optional<SoftMask> mask;
};

/// Box area (x2-x1)*(y2-y1). Throws GeometryError on a degenerate box.
double box_area(const BBox& box);

/// Intersection over union of two valid boxes, in [0, 1].
double box_iou(const BBox& a, const BBox& b);

/// |a AND b| / |a OR b|. Defined as 1.0 when both masks are empty.
/// Throws ShapeError on dimension mismatch.
double mask_iou(const BinaryMask& a, const BinaryMask& b);

/// Row-major run-length counts: alternating zero-runs then one-runs,
/// leading zero-run first (possibly 0).
std::vector<int64_t> rle_encode(const BinaryMask& mask);

/// Inverse of rle_encode. Throws CorruptDataError when counts are negative
/// or do not sum to width*height.
BinaryMask rle_decode(const std::vector<int64_t>& counts, int width, int height);

}  // namespace sais

#endif  // SAIS_CORE_TYPES_HPP_
