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

#include "sais/ingest.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <set>

#include <json.hpp>

#include "sais/error.hpp"

namespace sais::ingest {

using nlohmann::json;

void Polygon::validate() const {
  if (vertices.size() < 3) {
    throw ValidationError("invalid polygon: requires at least 3 vertices");
  }
  for (const auto& [x, y] : vertices) {
    if (!std::isfinite(x) || !std::isfinite(y)) {
      throw ValidationError("polygon vertex is not finite");
    }
  }
}

namespace {

json parse_json(const std::string& bytes) {
  try {
    return json::parse(bytes);
  } catch (const json::parse_error& e) {
    throw ParseError(e.what());  // nlohmann reports line/offset in the message
  }
}

const json& require(const json& j, const char* key, const std::string& where) {
  auto it = j.find(key);
  if (it == j.end()) throw ParseError(where + ": missing required key '" + key + "'");
  return *it;
}

}  // namespace

std::vector<Scene> parse_scene_file(const std::string& bytes) {
  const json doc = parse_json(bytes);
  if (!doc.is_object()) throw ParseError("scene file: top level must be an object");
  const json& version = require(doc, "version", "scene file");
  if (!version.is_number_integer() || version.get<int>() != 1) {
    throw ValidationError("scene file: unsupported version (expected 1)");
  }
  const json& scenes_j = require(doc, "scenes", "scene file");
  if (!scenes_j.is_array()) throw ParseError("scene file: 'scenes' must be an array");

  std::vector<Scene> scenes;
  std::set<std::string> seen_ids;
  for (const json& sj : scenes_j) {
    Scene scene;
    scene.id = require(sj, "id", "scene").get<std::string>();
    const std::string where = "scene '" + scene.id + "'";
    if (!seen_ids.insert(scene.id).second) {
      throw ValidationError(where + ": duplicate scene id");
    }
    scene.width = require(sj, "width", where).get<int>();
    scene.height = require(sj, "height", where).get<int>();
    const json& instances = require(sj, "instances", where);
    if (!instances.is_array()) throw ParseError(where + ": 'instances' must be an array");
    for (size_t i = 0; i < instances.size(); ++i) {
      const json& ij = instances[i];
      const std::string iwhere = where + " instance " + std::to_string(i);
      const json& bbox = require(ij, "bbox", iwhere);
      if (!bbox.is_array() || bbox.size() != 4) {
        throw ParseError(iwhere + ": bbox must be [x1,y1,x2,y2]");
      }
      BBox box{bbox[0].get<double>(), bbox[1].get<double>(), bbox[2].get<double>(),
               bbox[3].get<double>()};
      const int class_id = require(ij, "class_id", iwhere).get<int>();
      if (class_id < 0) throw ValidationError(iwhere + ": class_id out of range");
      const json& rle = require(ij, "rle", iwhere);
      if (!rle.is_array()) throw ParseError(iwhere + ": rle must be an array of counts");
      std::vector<int64_t> counts;
      counts.reserve(rle.size());
      for (const json& c : rle) counts.push_back(c.get<int64_t>());
      try {
        BinaryMask mask = rle_decode(counts, scene.width, scene.height);
        scene.instances.push_back(InstanceAnnotation::make(class_id, box, std::move(mask)));
      } catch (const CorruptDataError& e) {
        throw CorruptDataError(iwhere + ": " + e.what());
      } catch (const Error& e) {
        throw ValidationError(iwhere + ": " + e.what());
      }
    }
    scene.validate();
    scenes.push_back(std::move(scene));
  }
  return scenes;
}

namespace {

void append_coord(std::string& out, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  out += buf;
}

}  // namespace

std::string write_scene_file(const std::vector<Scene>& scenes) {
  std::string out = "{\"version\":1,\"scenes\":[";
  for (size_t s = 0; s < scenes.size(); ++s) {
    const Scene& scene = scenes[s];
    scene.validate();
    if (s > 0) out += ',';
    out += "{\"id\":";
    out += json(scene.id).dump();
    out += ",\"width\":" + std::to_string(scene.width);
    out += ",\"height\":" + std::to_string(scene.height);
    out += ",\"instances\":[";
    for (size_t i = 0; i < scene.instances.size(); ++i) {
      const InstanceAnnotation& inst = scene.instances[i];
      if (i > 0) out += ',';
      out += "{\"class_id\":" + std::to_string(inst.class_id);
      out += ",\"bbox\":[";
      append_coord(out, inst.box.x1);
      out += ',';
      append_coord(out, inst.box.y1);
      out += ',';
      append_coord(out, inst.box.x2);
      out += ',';
      append_coord(out, inst.box.y2);
      out += "],\"rle\":[";
      const std::vector<int64_t> counts = rle_encode(inst.mask);
      for (size_t c = 0; c < counts.size(); ++c) {
        if (c > 0) out += ',';
        out += std::to_string(counts[c]);
      }
      out += "]}";
    }
    out += "]}";
  }
  out += "]}";
  return out;
}

BinaryMask rasterize_polygon(const Polygon& poly, int width, int height) {
  poly.validate();
  if (width <= 0 || height <= 0) {
    throw ShapeError("rasterize_polygon: dimensions must be positive");
  }
  BinaryMask mask = BinaryMask::zeros(width, height);
  const size_t n = poly.vertices.size();
  std::vector<double> crossings;
  crossings.reserve(n);
  for (int row = 0; row < height; ++row) {
    const double py = row + 0.5;
    crossings.clear();
    for (size_t e = 0; e < n; ++e) {
      const auto& [ax, ay] = poly.vertices[e];
      const auto& [bx, by] = poly.vertices[(e + 1) % n];
      if ((ay > py) == (by > py)) continue;  // skips horizontal edges too
      crossings.push_back(ax + (py - ay) * (bx - ax) / (by - ay));
    }
    if (crossings.empty()) continue;
    std::sort(crossings.begin(), crossings.end());
    // Crossing count is even; fill pixels with c[2k] <= px < c[2k+1].
    for (size_t k = 0; k + 1 < crossings.size(); k += 2) {
      const double c0 = crossings[k];
      const double c1 = crossings[k + 1];
      int first = static_cast<int>(std::floor(c0 - 0.5));
      while (first + 0.5 < c0) ++first;
      while (first - 1 + 0.5 >= c0) --first;
      int last = static_cast<int>(std::ceil(c1 - 0.5));
      while (last + 0.5 >= c1) --last;
      while (last + 1 + 0.5 < c1) ++last;
      for (int j = std::max(first, 0); j <= std::min(last, width - 1); ++j) {
        mask.set(j, row, 1);
      }
    }
  }
  return mask;
}

namespace {

struct CocoImage {
  int width = 0;
  int height = 0;
};

}  // namespace

CocoImportResult import_coco_subset(const std::string& bytes,
                                    const std::vector<int>& class_whitelist) {
  const json doc = parse_json(bytes);
  if (!doc.is_object()) throw ParseError("coco file: top level must be an object");
  const json& images = require(doc, "images", "coco file");
  const json& annotations = require(doc, "annotations", "coco file");
  const json& categories = require(doc, "categories", "coco file");

  std::map<int64_t, CocoImage> image_index;
  for (const json& img : images) {
    const int64_t id = require(img, "id", "coco image").get<int64_t>();
    CocoImage entry;
    entry.width = require(img, "width", "coco image").get<int>();
    entry.height = require(img, "height", "coco image").get<int>();
    image_index[id] = entry;
  }

  std::set<int> kept_categories;
  if (class_whitelist.empty()) {
    for (const json& cat : categories) {
      kept_categories.insert(require(cat, "id", "coco category").get<int>());
    }
  } else {
    kept_categories.insert(class_whitelist.begin(), class_whitelist.end());
  }
  std::map<int, int> class_of_category;  // ascending category id -> contiguous class id
  for (int cat : kept_categories) {
    const int next = static_cast<int>(class_of_category.size());
    class_of_category[cat] = next;
  }

  CocoImportResult result;
  std::map<int64_t, std::vector<InstanceAnnotation>> per_image;
  std::set<int64_t> referenced;  // images with >= 1 kept annotation, even if later skipped
  for (const json& ann : annotations) {
    const int64_t image_id = require(ann, "image_id", "coco annotation").get<int64_t>();
    const int category = require(ann, "category_id", "coco annotation").get<int>();
    auto cls = class_of_category.find(category);
    if (cls == class_of_category.end()) continue;
    auto img = image_index.find(image_id);
    if (img == image_index.end()) {
      throw ValidationError("coco annotation references unknown image " +
                            std::to_string(image_id));
    }
    if (ann.value("iscrowd", 0) != 0) {
      ++result.skipped_crowd;
      continue;
    }
    const json& seg = require(ann, "segmentation", "coco annotation");
    if (!seg.is_array()) {
      ++result.skipped_rle;
      continue;
    }
    referenced.insert(image_id);
    const json& bbox = require(ann, "bbox", "coco annotation");
    if (!bbox.is_array() || bbox.size() != 4) {
      throw ParseError("coco annotation: bbox must be [x,y,w,h]");
    }
    const double x = bbox[0].get<double>();
    const double y = bbox[1].get<double>();
    const double w = bbox[2].get<double>();
    const double h = bbox[3].get<double>();
    if (!(w > 0.0 && h > 0.0)) {
      ++result.skipped_degenerate;
      continue;
    }
    const CocoImage& dims = img->second;
    BinaryMask mask = BinaryMask::zeros(dims.width, dims.height);
    for (const json& part : seg) {
      if (!part.is_array() || part.size() < 6 || part.size() % 2 != 0) {
        throw ParseError("coco annotation: polygon part must be a flat even-length list");
      }
      Polygon poly;
      for (size_t i = 0; i + 1 < part.size(); i += 2) {
        poly.vertices.emplace_back(part[i].get<double>(), part[i + 1].get<double>());
      }
      const BinaryMask part_mask = rasterize_polygon(poly, dims.width, dims.height);
      for (size_t i = 0; i < mask.bits.size(); ++i) mask.bits[i] |= part_mask.bits[i];
    }
    per_image[image_id].push_back(
        InstanceAnnotation::make(class_of_category.at(category), BBox{x, y, x + w, y + h},
                                 std::move(mask)));
  }

  for (int64_t image_id : referenced) {
    Scene scene;
    scene.id = std::to_string(image_id);
    scene.width = image_index.at(image_id).width;
    scene.height = image_index.at(image_id).height;
    auto it = per_image.find(image_id);
    if (it != per_image.end()) scene.instances = std::move(it->second);
    scene.validate();
    result.scenes.push_back(std::move(scene));
  }
  return result;
}

}  // namespace sais::ingest
