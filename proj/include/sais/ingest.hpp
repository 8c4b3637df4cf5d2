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
// Scene dataset I/O: the native JSON scene format (version 1, masks as
// row-major RLE counts) and a COCO-annotation subset with polygon
// segmentations rasterized by pixel-center scanline fill.

#ifndef SAIS_INGEST_HPP_
#define SAIS_INGEST_HPP_

#include <string>
#include <vector>

#include "sais/core_types.hpp"

namespace sais::ingest {

/// Closed polygon; vertices in image coordinates.
struct Polygon {
  std::vector<std::pair<double, double>> vertices;

  void validate() const;
};

/// Parse the native scene JSON format. Rejects rather than repairs:
/// ParseError on malformed syntax, ValidationError (naming scene id and
/// instance index) on invariant violations, CorruptDataError on bad RLE.
std::vector<Scene> parse_scene_file(const std::string& bytes);

/// Inverse of parse_scene_file. Coordinates are serialized with 6 decimal
/// places; parse(write(scenes)) reproduces masks bit-exactly and
/// coordinates to that precision.
std::string write_scene_file(const std::vector<Scene>& scenes);

/// Scanline fill, even-odd rule: pixel (i,j) is on iff its center
/// (j+0.5, i+0.5) is inside the polygon.
BinaryMask rasterize_polygon(const Polygon& poly, int width, int height);

struct CocoImportResult {
  std::vector<Scene> scenes;
  int skipped_rle = 0;         // RLE-typed segmentations (unsupported)
  int skipped_crowd = 0;       // iscrowd == 1
  int skipped_degenerate = 0;  // non-positive bbox width/height
};

/// Import COCO-style instance annotations (polygon segmentations only).
/// Keeps categories in `class_whitelist` (all categories when empty),
/// remapping category ids to contiguous class ids by ascending category id.
/// One Scene per image referenced by at least one kept annotation.
CocoImportResult import_coco_subset(const std::string& bytes,
                                    const std::vector<int>& class_whitelist = {});

}  // namespace sais::ingest

#endif  // SAIS_INGEST_HPP_
