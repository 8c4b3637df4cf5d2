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

#include "sais/core_types.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "sais/error.hpp"

namespace sais {

void BBox::validate() const {
  if (!(std::isfinite(x1) && std::isfinite(y1) && std::isfinite(x2) && std::isfinite(y2))) {
    throw GeometryError("box coordinate is not finite");
  }
  if (!(x2 > x1 && y2 > y1)) {
    throw GeometryError("degenerate box: requires x2 > x1 and y2 > y1");
  }
}

BinaryMask BinaryMask::zeros(int width, int height) {
  BinaryMask m;
  m.width = width;
  m.height = height;
  m.bits.assign(static_cast<size_t>(width) * height, 0);
  return m;
}

size_t BinaryMask::count_on() const {
  size_t n = 0;
  for (uint8_t b : bits) n += b;
  return n;
}

void BinaryMask::validate() const {
  if (width <= 0 || height <= 0) {
    throw ShapeError("mask dimensions must be positive");
  }
  if (bits.size() != static_cast<size_t>(width) * height) {
    throw ShapeError("mask bit count does not equal width*height");
  }
  for (uint8_t b : bits) {
    if (b > 1) throw ValidationError("mask bit outside {0,1}");
  }
}

SoftMask SoftMask::filled(int width, int height, double v) {
  SoftMask m;
  m.width = width;
  m.height = height;
  m.values.assign(static_cast<size_t>(width) * height, v);
  return m;
}

void SoftMask::validate() const {
  if (width <= 0 || height <= 0) {
    throw ShapeError("mask dimensions must be positive");
  }
  if (values.size() != static_cast<size_t>(width) * height) {
    throw ShapeError("mask value count does not equal width*height");
  }
  for (double v : values) {
    if (!(v >= 0.0 && v <= 1.0)) throw ValidationError("soft mask value outside [0,1]");
  }
}

InstanceAnnotation InstanceAnnotation::make(int class_id, const BBox& box, BinaryMask mask) {
  InstanceAnnotation a;
  a.class_id = class_id;
  a.box = box;
  a.mask = std::move(mask);
  a.area = box_area(box);
  return a;
}

void Scene::validate() const {
  if (width <= 0 || height <= 0) {
    throw ValidationError("scene '" + id + "': dimensions must be positive");
  }
  for (size_t i = 0; i < instances.size(); ++i) {
    const auto& inst = instances[i];
    const std::string where = "scene '" + id + "' instance " + std::to_string(i);
    if (inst.class_id < 0) {
      throw ValidationError(where + ": negative class_id");
    }
    try {
      inst.box.validate();
      inst.mask.validate();
    } catch (const Error& e) {
      throw ValidationError(where + ": " + e.what());
    }
    if (inst.mask.width != width || inst.mask.height != height) {
      throw ValidationError(where + ": mask dimensions do not match scene");
    }
    const double expected = (inst.box.x2 - inst.box.x1) * (inst.box.y2 - inst.box.y1);
    if (!(inst.area > 0.0) || std::abs(inst.area - expected) > 1e-9 * std::max(1.0, expected)) {
      throw ValidationError(where + ": cached area does not match box");
    }
  }
}

double box_area(const BBox& box) {
  box.validate();
  return (box.x2 - box.x1) * (box.y2 - box.y1);
}

double box_iou(const BBox& a, const BBox& b) {
  a.validate();
  b.validate();
  const double ix = std::min(a.x2, b.x2) - std::max(a.x1, b.x1);
  const double iy = std::min(a.y2, b.y2) - std::max(a.y1, b.y1);
  if (ix <= 0.0 || iy <= 0.0) return 0.0;
  const double inter = ix * iy;
  const double uni = a.width() * a.height() + b.width() * b.height() - inter;
  return inter / uni;
}

double mask_iou(const BinaryMask& a, const BinaryMask& b) {
  if (a.width != b.width || a.height != b.height) {
    throw ShapeError("mask_iou: dimension mismatch");
  }
  size_t inter = 0;
  size_t uni = 0;
  for (size_t i = 0; i < a.bits.size(); ++i) {
    inter += a.bits[i] & b.bits[i];
    uni += a.bits[i] | b.bits[i];
  }
  if (uni == 0) return 1.0;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

std::vector<int64_t> rle_encode(const BinaryMask& mask) {
  mask.validate();
  std::vector<int64_t> counts;
  uint8_t current = 0;  // leading zero-run first, possibly empty
  int64_t run = 0;
  for (uint8_t b : mask.bits) {
    if (b == current) {
      ++run;
    } else {
      counts.push_back(run);
      current = b;
      run = 1;
    }
  }
  counts.push_back(run);
  return counts;
}

BinaryMask rle_decode(const std::vector<int64_t>& counts, int width, int height) {
  if (width <= 0 || height <= 0) {
    throw ShapeError("rle_decode: dimensions must be positive");
  }
  const int64_t total = static_cast<int64_t>(width) * height;
  int64_t sum = 0;
  for (int64_t c : counts) {
    if (c < 0) throw CorruptDataError("rle_decode: negative run count");
    sum += c;
  }
  if (sum != total) {
    throw CorruptDataError("rle_decode: counts sum to " + std::to_string(sum) +
                           ", expected " + std::to_string(total));
  }
  BinaryMask mask = BinaryMask::zeros(width, height);
  size_t pos = 0;
  uint8_t value = 0;
  for (int64_t c : counts) {
    for (int64_t i = 0; i < c; ++i) mask.bits[pos++] = value;
    value ^= 1;
  }
  return mask;
}

}  // namespace sais
