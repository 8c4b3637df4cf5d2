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

#include "sais/assignment.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <json.hpp>

#include "sais/error.hpp"

namespace sais::assign {

void LevelSpec::validate() const {
  if (stride < 1) throw ConfigError("level stride must be >= 1");
  if (!(min_range < max_range)) throw ConfigError("level range requires min_range < max_range");
  if (min_range < 0.0) throw ConfigError("level min_range must be >= 0");
}

double RegressionTarget::max_side() const {
  return std::max(std::max(l, r), std::max(t, b));
}

size_t LevelTargets::positive_count() const {
  size_t n = 0;
  for (size_t i = 0; i < size(); ++i) n += positive(i) ? 1 : 0;
  return n;
}

AssignMode assign_mode_from_string(const std::string& s) {
  if (s == "area") return AssignMode::area;
  if (s == "center") return AssignMode::center;
  throw ConfigError("unknown assignment mode '" + s + "' (expected area|center)");
}

std::string to_string(AssignMode mode) {
  return mode == AssignMode::area ? "area" : "center";
}

LocationGrid make_locations(const LevelSpec& level, int width, int height) {
  level.validate();
  if (width <= 0 || height <= 0) throw ConfigError("make_locations: dimensions must be positive");
  LocationGrid grid;
  grid.level = level;
  grid.grid_width = (width + level.stride - 1) / level.stride;
  grid.grid_height = (height + level.stride - 1) / level.stride;
  grid.points.reserve(static_cast<size_t>(grid.grid_width) * grid.grid_height);
  const double half = level.stride / 2.0;
  for (int row = 0; row < grid.grid_height; ++row) {
    for (int col = 0; col < grid.grid_width; ++col) {
      grid.points.push_back(Point{half + static_cast<double>(col) * level.stride,
                                  half + static_cast<double>(row) * level.stride});
    }
  }
  return grid;
}

RegressionTarget regression_target(const Point& p, const BBox& box) {
  RegressionTarget t;
  t.l = p.x - box.x1;
  t.t = p.y - box.y1;
  t.r = box.x2 - p.x;
  t.b = box.y2 - p.y;
  return t;
}

double center_score(const RegressionTarget& t) {
  if (!t.inside()) {
    throw DomainError("center_score: all four distances must be strictly positive");
  }
  const double rx = std::min(t.l, t.r) / std::max(t.l, t.r);
  const double ry = std::min(t.t, t.b) / std::max(t.t, t.b);
  return std::sqrt(rx * ry);
}

std::vector<int> area_rank(const std::vector<InstanceAnnotation>& instances) {
  std::vector<int> order(instances.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  std::stable_sort(order.begin(), order.end(), [&instances](int a, int b) {
    return instances[a].area < instances[b].area;
  });
  return order;
}

namespace {

LevelTargets empty_targets(const LocationGrid& grid) {
  LevelTargets t;
  t.level = grid.level;
  t.grid_width = grid.grid_width;
  t.grid_height = grid.grid_height;
  const size_t n = grid.points.size();
  t.class_label.assign(n, -1);
  t.owner.assign(n, -1);
  t.center_score.assign(n, 0.0);
  t.l.assign(n, 0.0);
  t.t.assign(n, 0.0);
  t.r.assign(n, 0.0);
  t.b.assign(n, 0.0);
  return t;
}

void store_positive(LevelTargets& out, size_t i, const Scene& scene, int winner,
                    const RegressionTarget& reg, double score) {
  out.class_label[i] = scene.instances[winner].class_id;
  out.owner[i] = winner;
  out.center_score[i] = score;
  out.l[i] = reg.l;
  out.t[i] = reg.t;
  out.r[i] = reg.r;
  out.b[i] = reg.b;
}

template <typename SelectFn>
TargetMap assign_with(const Scene& scene, const std::vector<LocationGrid>& grids,
                      SelectFn select) {
  scene.validate();
  const std::vector<int> rank = area_rank(scene.instances);
  TargetMap map;
  map.levels.reserve(grids.size());
  for (const LocationGrid& grid : grids) {
    LevelTargets out = empty_targets(grid);
    for (size_t i = 0; i < grid.points.size(); ++i) {
      select(grid.points[i], grid.level, rank, out, i);
    }
    map.levels.push_back(std::move(out));
  }
  return map;
}

bool eligible(const RegressionTarget& reg, const LevelSpec& level) {
  const double m = reg.max_side();
  return m > level.min_range && m <= level.max_range;
}

}  // namespace

TargetMap assign_area_minimal(const Scene& scene, const std::vector<LocationGrid>& grids) {
  return assign_with(
      scene, grids,
      [&scene](const Point& p, const LevelSpec& level, const std::vector<int>& rank,
               LevelTargets& out, size_t i) {
        // rank is area-ascending with original-index ties, so the first
        // candidate in rank order is the area-minimal choice.
        for (int idx : rank) {
          const RegressionTarget reg = regression_target(p, scene.instances[idx].box);
          if (!reg.inside() || !eligible(reg, level)) continue;
          store_positive(out, i, scene, idx, reg, center_score(reg));
          return;
        }
      });
}

TargetMap assign_center_aware(const Scene& scene, const std::vector<LocationGrid>& grids) {
  return assign_with(
      scene, grids,
      [&scene](const Point& p, const LevelSpec& level, const std::vector<int>& rank,
               LevelTargets& out, size_t i) {
        int winner = -1;
        double best = -1.0;
        RegressionTarget winner_reg;
        // Iterating in area-rank order with a strict max makes exact score
        // ties resolve small-area-first, then original index.
        for (int idx : rank) {
          const RegressionTarget reg = regression_target(p, scene.instances[idx].box);
          if (!reg.inside() || !eligible(reg, level)) continue;
          const double score = center_score(reg);
          if (score > best) {
            best = score;
            winner = idx;
            winner_reg = reg;
          }
        }
        if (winner >= 0) store_positive(out, i, scene, winner, winner_reg, best);
      });
}

void validate_level_specs(const std::vector<LevelSpec>& levels) {
  if (levels.empty()) throw ConfigError("at least one level spec required");
  for (const LevelSpec& level : levels) level.validate();
  for (size_t i = 1; i < levels.size(); ++i) {
    if (levels[i].stride <= levels[i - 1].stride) {
      throw ConfigError("level strides must be strictly increasing");
    }
    if (levels[i].min_range != levels[i - 1].max_range) {
      throw ConfigError("level ranges must be contiguous (next min == previous max)");
    }
  }
}

TargetMap build_targets(const Scene& scene, const std::vector<LevelSpec>& levels,
                        AssignMode mode) {
  validate_level_specs(levels);
  std::vector<LocationGrid> grids;
  grids.reserve(levels.size());
  for (const LevelSpec& level : levels) {
    grids.push_back(make_locations(level, scene.width, scene.height));
  }
  return mode == AssignMode::area ? assign_area_minimal(scene, grids)
                                  : assign_center_aware(scene, grids);
}

std::vector<LevelSpec> default_level_specs() {
  const double inf = std::numeric_limits<double>::infinity();
  return {
      {8, 0.0, 64.0}, {16, 64.0, 128.0}, {32, 128.0, 256.0}, {64, 256.0, 512.0}, {128, 512.0, inf},
  };
}

std::string targets_to_json(const TargetMap& map, const std::string& scene_id) {
  nlohmann::json j;
  j["scene_id"] = scene_id;
  j["levels"] = nlohmann::json::array();
  for (const LevelTargets& lt : map.levels) {
    nlohmann::json level;
    level["stride"] = lt.level.stride;
    level["min_range"] = lt.level.min_range;
    level["max_range"] =
        std::isinf(lt.level.max_range) ? nlohmann::json() : nlohmann::json(lt.level.max_range);
    level["width"] = lt.grid_width;
    level["height"] = lt.grid_height;
    level["class"] = lt.class_label;
    level["center"] = lt.center_score;
    level["owner"] = lt.owner;
    level["l"] = lt.l;
    level["t"] = lt.t;
    level["r"] = lt.r;
    level["b"] = lt.b;
    j["levels"].push_back(std::move(level));
  }
  return j.dump();
}

}  // namespace sais::assign
