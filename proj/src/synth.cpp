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

#include "sais/synth.hpp"

#include <algorithm>
#include <cmath>

#include "sais/assignment.hpp"
#include "sais/error.hpp"
#include "sais/rng.hpp"

namespace sais::synth {

namespace {

// Stream salts: one per purpose so adding a stream never shifts another.
constexpr uint64_t kSceneStream = 0x5143454e45533101ULL;
constexpr uint64_t kOcclusionStream = 0x4f43434c55444531ULL;
constexpr uint64_t kNoiseStream = 0x4e4f495345313131ULL;

// Snap to the quarter-integer grid: exact in binary and in %.6f decimal.
double quarter(double v) { return std::round(v * 4.0) / 4.0; }

struct ShapeParams {
  ShapeKind kind = ShapeKind::rectangle;
  int class_id = 0;
  double cx = 0.0, cy = 0.0;  // center
  double hx = 0.0, hy = 0.0;  // half extents
};

BBox shape_box(const ShapeParams& s) {
  return BBox{s.cx - s.hx, s.cy - s.hy, s.cx + s.hx, s.cy + s.hy};
}

// Pixel-center membership; the rectangle rule matches the rasterizer's
// half-open fill, the ellipse uses the strict interior inequality.
bool shape_contains(const ShapeParams& s, double px, double py) {
  if (s.kind == ShapeKind::rectangle) {
    return px >= s.cx - s.hx && px < s.cx + s.hx && py >= s.cy - s.hy && py < s.cy + s.hy;
  }
  const double dx = (px - s.cx) / s.hx;
  const double dy = (py - s.cy) / s.hy;
  return dx * dx + dy * dy < 1.0;
}

BinaryMask shape_mask(const ShapeParams& s, int width, int height) {
  BinaryMask m = BinaryMask::zeros(width, height);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      if (shape_contains(s, x + 0.5, y + 0.5)) m.set(x, y, 1);
    }
  }
  return m;
}

Scene scene_from_shapes(std::string id, int width, int height,
                        const std::vector<ShapeParams>& shapes) {
  Scene scene;
  scene.id = std::move(id);
  scene.width = width;
  scene.height = height;
  std::vector<BinaryMask> full;
  full.reserve(shapes.size());
  for (const ShapeParams& s : shapes) full.push_back(shape_mask(s, width, height));
  for (size_t i = 0; i < shapes.size(); ++i) {
    BinaryMask visible = full[i];
    for (size_t j = i + 1; j < shapes.size(); ++j) {
      for (size_t px = 0; px < visible.bits.size(); ++px) {
        visible.bits[px] &= static_cast<uint8_t>(1 - full[j].bits[px]);
      }
    }
    scene.instances.push_back(
        InstanceAnnotation::make(shapes[i].class_id, shape_box(shapes[i]), std::move(visible)));
  }
  scene.validate();
  return scene;
}

}  // namespace

void SynthConfig::validate() const {
  if (width <= 0 || height <= 0) throw ConfigError("synth: dimensions must be positive");
  if (min_instances < 0 || max_instances < min_instances) {
    throw ConfigError("synth: instance count range is empty");
  }
  if (shapes.empty()) throw ConfigError("synth: at least one shape kind required");
  if (!(min_size_frac > 0.0 && max_size_frac >= min_size_frac && max_size_frac <= 1.0)) {
    throw ConfigError("synth: size fraction range is empty or out of (0,1]");
  }
  if (min_size_frac * std::min(width, height) < 4.0) {
    throw ConfigError("synth: minimum size must yield boxes of at least 4x4 pixels");
  }
  if (class_count < 1) throw ConfigError("synth: class_count must be >= 1");
}

Scene gen_scene(const SynthConfig& config, uint64_t index) {
  config.validate();
  if (config.overlap == OverlapPolicy::occlusion_case) {
    return gen_occlusion_case(rng::derive(config.seed, kOcclusionStream, index));
  }
  rng::SplitMix64 gen(rng::derive(config.seed, kSceneStream, index));
  const int n = static_cast<int>(gen.next_int(config.min_instances, config.max_instances));
  std::vector<ShapeParams> shapes;
  shapes.reserve(n);
  for (int i = 0; i < n; ++i) {
    ShapeParams s;
    s.kind = config.shapes[static_cast<size_t>(
        gen.next_int(0, static_cast<int64_t>(config.shapes.size()) - 1))];
    s.class_id = static_cast<int>(gen.next_int(0, config.class_count - 1));
    const double fx = gen.next_uniform(config.min_size_frac, config.max_size_frac);
    const double fy = gen.next_uniform(config.min_size_frac, config.max_size_frac);
    s.hx = std::max(2.0, quarter(fx * config.width / 2.0));
    s.hy = std::max(2.0, quarter(fy * config.height / 2.0));
    s.cx = quarter(gen.next_uniform(s.hx, config.width - s.hx));
    s.cy = quarter(gen.next_uniform(s.hy, config.height - s.hy));
    // Quantization can push the center off the feasible interval by a
    // quarter pixel; clamp back so the box stays inside the canvas.
    s.cx = std::clamp(s.cx, s.hx, config.width - s.hx);
    s.cy = std::clamp(s.cy, s.hy, config.height - s.hy);
    shapes.push_back(s);
  }
  return scene_from_shapes(
      "synth-" + std::to_string(config.seed) + "-" + std::to_string(index), config.width,
      config.height, shapes);
}

Scene gen_occlusion_case(uint64_t seed) {
  rng::SplitMix64 gen(rng::mix(seed ^ kOcclusionStream));
  const int width = 128;
  const int height = 128;

  ShapeParams large;
  large.kind = ShapeKind::rectangle;
  large.class_id = 0;
  large.hx = quarter(gen.next_uniform(24.0, 48.0));
  large.hy = quarter(gen.next_uniform(24.0, 48.0));
  // Center on a stride-8 grid point (4 + 8*i) with the box inside the canvas.
  const auto grid_center = [&gen](double half, int extent) {
    const int lo = static_cast<int>(std::ceil((half - 4.0) / 8.0));
    const int hi = static_cast<int>(std::floor((extent - 4.0 - half) / 8.0));
    return 4.0 + 8.0 * static_cast<double>(gen.next_int(lo, hi));
  };
  large.cx = grid_center(large.hx, width);
  large.cy = grid_center(large.hy, height);

  ShapeParams small;
  small.kind = ShapeKind::rectangle;
  small.class_id = 0;
  small.hx = quarter(gen.next_uniform(6.0, 14.0));
  small.hy = quarter(gen.next_uniform(6.0, 14.0));
  // Offset center: the large box's center stays strictly inside the small
  // box, but off its center, so the small box's score there is < 1.
  const double dx = quarter(gen.next_uniform(1.0, small.hx - 2.0)) *
                    (gen.next_u64() % 2 == 0 ? 1.0 : -1.0);
  const double dy = quarter(gen.next_uniform(1.0, small.hy - 2.0)) *
                    (gen.next_u64() % 2 == 0 ? 1.0 : -1.0);
  small.cx = large.cx + dx;
  small.cy = large.cy + dy;

  Scene scene = scene_from_shapes("occlusion-" + std::to_string(seed), width, height,
                                  {large, small});

  // Post-condition check: the two assignment modes must disagree exactly as
  // constructed at the contested location.
  const auto specs = assign::default_level_specs();
  const assign::TargetMap by_area = assign::build_targets(scene, specs, assign::AssignMode::area);
  const assign::TargetMap by_center =
      assign::build_targets(scene, specs, assign::AssignMode::center);
  const ContestedLocation loc = occlusion_contested_location(scene);
  const size_t idx =
      static_cast<size_t>(loc.row) * by_area.levels[0].grid_width + loc.col;
  if (by_area.levels[0].owner[idx] != 1 || by_center.levels[0].owner[idx] != 0) {
    throw InternalError("occlusion case construction failed its defining inequality");
  }
  return scene;
}

ContestedLocation occlusion_contested_location(const Scene& scene) {
  if (scene.instances.size() != 2) {
    throw DomainError("contested location is defined for two-instance occlusion scenes");
  }
  const BBox& big = scene.instances[0].box;
  ContestedLocation loc;
  loc.x = (big.x1 + big.x2) / 2.0;
  loc.y = (big.y1 + big.y2) / 2.0;
  loc.col = static_cast<int>((loc.x - 4.0) / 8.0);
  loc.row = static_cast<int>((loc.y - 4.0) / 8.0);
  return loc;
}

double class_intensity(int class_id) {
  // Low-discrepancy spacing keeps classes apart and away from background.
  const double golden = 0.6180339887498949;
  const double f = std::fmod((class_id + 1) * golden, 1.0);
  return 0.4 + 0.6 * f;
}

std::vector<double> render_image(const Scene& scene) {
  scene.validate();
  const size_t n = static_cast<size_t>(scene.width) * scene.height;
  std::vector<double> img(n, 0.1);
  // Visible masks are already painter-resolved; painting them in annotation
  // order reproduces the same occlusion.
  for (const InstanceAnnotation& inst : scene.instances) {
    const double v = class_intensity(inst.class_id);
    for (size_t i = 0; i < n; ++i) {
      if (inst.mask.bits[i]) img[i] = v;
    }
  }
  rng::SplitMix64 noise(rng::derive(rng::hash_str(scene.id), kNoiseStream, 0));
  for (size_t i = 0; i < n; ++i) {
    img[i] = std::clamp(img[i] + 0.02 * noise.next_gaussian(), 0.0, 1.0);
  }
  return img;
}

std::string to_pgm(const std::vector<double>& image, int width, int height) {
  if (image.size() != static_cast<size_t>(width) * height) {
    throw ShapeError("to_pgm: image size does not match dimensions");
  }
  std::string out = "P5\n" + std::to_string(width) + " " + std::to_string(height) + "\n255\n";
  out.reserve(out.size() + image.size());
  for (double v : image) {
    const int g = static_cast<int>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
    out.push_back(static_cast<char>(g));
  }
  return out;
}

}  // namespace sais::synth
