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
// Per-location training targets on feature-pyramid grids. Ambiguous
// locations (inside several boxes) are resolved either by minimal box area
// or by the center-aware rule: every containing candidate is scored by how
// centered the location is within its box, and the highest score wins.

#ifndef SAIS_ASSIGNMENT_HPP_
#define SAIS_ASSIGNMENT_HPP_

#include <limits>
#include <string>
#include <vector>

#include "sais/core_types.hpp"

namespace sais::assign {

/// One pyramid level: feature stride plus the (min_range, max_range] bounds
/// on max(l,t,r,b) deciding which locations are eligible here.
struct LevelSpec {
  int stride = 8;
  double min_range = 0.0;
  double max_range = std::numeric_limits<double>::infinity();

  void validate() const;
};

struct Point {
  double x = 0.0;
  double y = 0.0;
};

/// Image-coordinate sample points of one level, row-major.
/// Point (col,row) = (stride/2 + col*stride, stride/2 + row*stride).
struct LocationGrid {
  LevelSpec level;
  int grid_width = 0;
  int grid_height = 0;
  std::vector<Point> points;

  const Point& at(int col, int row) const {
    return points[static_cast<size_t>(row) * grid_width + col];
  }
};

/// Distances from a location to the four sides of a box, in pixels.
/// All four strictly positive iff the location is strictly inside the box.
struct RegressionTarget {
  double l = 0.0;
  double t = 0.0;
  double r = 0.0;
  double b = 0.0;

  double max_side() const;
  bool inside() const { return l > 0.0 && t > 0.0 && r > 0.0 && b > 0.0; }
};

/// Per-location assignment results for one level. Parallel row-major grids;
/// negatives carry class_label -1, owner -1, center 0 and zero regression.
struct LevelTargets {
  LevelSpec level;
  int grid_width = 0;
  int grid_height = 0;
  std::vector<int> class_label;
  std::vector<int> owner;
  std::vector<double> center_score;
  std::vector<double> l, t, r, b;

  size_t size() const { return class_label.size(); }
  bool positive(size_t i) const { return owner[i] >= 0; }
  size_t positive_count() const;
};

struct TargetMap {
  std::vector<LevelTargets> levels;
};

enum class AssignMode { area, center };

AssignMode assign_mode_from_string(const std::string& s);
std::string to_string(AssignMode mode);

/// Grid dims are ceil(image_dim / stride).
LocationGrid make_locations(const LevelSpec& level, int width, int height);

/// l = px-x1, t = py-y1, r = x2-px, b = y2-py. Defined for any point;
/// non-positive components signal non-containment.
RegressionTarget regression_target(const Point& p, const BBox& box);

/// sqrt( min(l,r)/max(l,r) * min(t,b)/max(t,b) ), in (0,1].
/// Throws DomainError unless all four distances are strictly positive.
double center_score(const RegressionTarget& t);

/// Instance indices ordered by box area ascending, stable for equal areas.
std::vector<int> area_rank(const std::vector<InstanceAnnotation>& instances);

/// Every location gets the smallest-area candidate among instances that
/// strictly contain it and pass the level range filter; ties by original
/// index; no candidate means negative.
TargetMap assign_area_minimal(const Scene& scene, const std::vector<LocationGrid>& grids);

/// Every location gets the candidate with the largest center score; exact
/// score ties resolve small-area-first, then original index. The stored
/// center_score is the winner's score.
TargetMap assign_center_aware(const Scene& scene, const std::vector<LocationGrid>& grids);

/// make_locations per level + the chosen assigner. Level specs must have
/// strictly increasing strides and contiguous ranges (next.min == prev.max);
/// throws ConfigError otherwise.
TargetMap build_targets(const Scene& scene, const std::vector<LevelSpec>& levels,
                        AssignMode mode);

/// Strides {8,16,32,64,128} with range bounds {0,64,128,256,512,inf}.
std::vector<LevelSpec> default_level_specs();

/// Contiguity/monotonicity validation used by build_targets.
void validate_level_specs(const std::vector<LevelSpec>& levels);

/// JSON export: per level dims plus flattened class/center/owner and the
/// four regression arrays.
std::string targets_to_json(const TargetMap& map, const std::string& scene_id);

}  // namespace sais::assign

#endif  // SAIS_ASSIGNMENT_HPP_
