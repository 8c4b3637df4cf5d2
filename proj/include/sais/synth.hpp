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
// Deterministic synthetic scenes: seeded random multi-instance layouts,
// engineered center-occlusion fixtures, and rendering of scenes into the
// single-channel images the toy model trains on. All generation is a pure
// function of (config, seed, index); geometry lives on a quarter-integer
// grid so scene files round-trip exactly.

#ifndef SAIS_SYNTH_HPP_
#define SAIS_SYNTH_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include "sais/core_types.hpp"

namespace sais::synth {

enum class ShapeKind { rectangle, ellipse };

enum class OverlapPolicy { free, occlusion_case };

struct SynthConfig {
  int width = 64;
  int height = 64;
  int min_instances = 1;
  int max_instances = 3;
  std::vector<ShapeKind> shapes = {ShapeKind::rectangle, ShapeKind::ellipse};
  double min_size_frac = 0.15;  // shape extent as a fraction of image size
  double max_size_frac = 0.5;
  OverlapPolicy overlap = OverlapPolicy::free;
  int class_count = 1;
  uint64_t seed = 0;

  void validate() const;
};

/// Deterministic scene index `index` of the stream defined by config.seed.
/// Instance masks follow painter's order: later instances occlude earlier
/// ones, so ground truth matches the rendered image.
Scene gen_scene(const SynthConfig& config, uint64_t index);

/// Exactly two rectangles on a 128x128 canvas: a large one centered on a
/// stride-8 grid point and a smaller one covering that point with an offset
/// center, so the large box's center score there strictly exceeds the small
/// box's. The defining inequality is re-checked at generation time.
Scene gen_occlusion_case(uint64_t seed);

/// Grid location (stride 8) contested in a gen_occlusion_case scene.
struct ContestedLocation {
  int col = 0;
  int row = 0;
  double x = 0.0;
  double y = 0.0;
};
ContestedLocation occlusion_contested_location(const Scene& scene);

/// Single-channel image in [0,1]: background 0.1, instances filled with a
/// per-class intensity in [0.4, 1.0] in painter's order, plus seeded
/// Gaussian noise (sigma 0.02) clamped to [0,1]. Row-major, scene dims.
std::vector<double> render_image(const Scene& scene);

double class_intensity(int class_id);

/// 8-bit binary PGM (P5) from values in [0,1].
std::string to_pgm(const std::vector<double>& image, int width, int height);

}  // namespace sais::synth

#endif  // SAIS_SYNTH_HPP_
