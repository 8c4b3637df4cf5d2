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

#include <doctest.h>

#include <string>

#include "sais/core_types.hpp"
#include "sais/error.hpp"
#include "sais/ingest.hpp"
#include "sais/rng.hpp"
#include "sais/synth.hpp"

using namespace sais;
using ingest::Polygon;

namespace {

// Independent oracle: per-pixel even-odd crossing count, no scanline, no
// sorting. Shares only the standard edge-crossing expression.
bool point_in_polygon(const Polygon& poly, double px, double py) {
  int crossings = 0;
  const size_t n = poly.vertices.size();
  for (size_t e = 0; e < n; ++e) {
    const auto& [ax, ay] = poly.vertices[e];
    const auto& [bx, by] = poly.vertices[(e + 1) % n];
    if ((ay > py) == (by > py)) continue;
    const double xc = ax + (py - ay) * (bx - ax) / (by - ay);
    if (px < xc) ++crossings;
  }
  return (crossings % 2) == 1;
}

BinaryMask brute_force_rasterize(const Polygon& poly, int width, int height) {
  BinaryMask m = BinaryMask::zeros(width, height);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      if (point_in_polygon(poly, x + 0.5, y + 0.5)) m.set(x, y, 1);
    }
  }
  return m;
}

}  // namespace

TEST_CASE("parse_scene_file: zero scenes") {
  CHECK(ingest::parse_scene_file(R"({"version":1,"scenes":[]})").empty());
}

TEST_CASE("parse_scene_file: one 10x10 box with full-box mask") {
  const std::string text = R"({"version":1,"scenes":[
    {"id":"a","width":10,"height":10,"instances":[
      {"class_id":0,"bbox":[0,0,10,10],"rle":[0,100]}]}]})";
  const auto scenes = ingest::parse_scene_file(text);
  REQUIRE(scenes.size() == 1);
  CHECK(scenes[0].instances.size() == 1);
  CHECK(scenes[0].instances[0].area == 100.0);
  CHECK(scenes[0].instances[0].mask.count_on() == 100);
}

TEST_CASE("parse_scene_file: RLE with wrong total is corrupt data") {
  const std::string text = R"({"version":1,"scenes":[
    {"id":"a","width":10,"height":10,"instances":[
      {"class_id":0,"bbox":[0,0,10,10],"rle":[0,99]}]}]})";
  CHECK_THROWS_AS(ingest::parse_scene_file(text), CorruptDataError);
}

TEST_CASE("parse_scene_file: error taxonomy") {
  CHECK_THROWS_AS(ingest::parse_scene_file("{not json"), ParseError);
  CHECK_THROWS_AS(ingest::parse_scene_file(R"({"version":2,"scenes":[]})"), ValidationError);
  // degenerate box names the scene and instance
  const std::string bad_box = R"({"version":1,"scenes":[
    {"id":"theid","width":4,"height":4,"instances":[
      {"class_id":0,"bbox":[2,0,2,4],"rle":[16]}]}]})";
  try {
    ingest::parse_scene_file(bad_box);
    CHECK(false);
  } catch (const ValidationError& e) {
    CHECK(std::string(e.what()).find("theid") != std::string::npos);
    CHECK(std::string(e.what()).find("instance 0") != std::string::npos);
  }
  const std::string bad_class = R"({"version":1,"scenes":[
    {"id":"x","width":4,"height":4,"instances":[
      {"class_id":-1,"bbox":[0,0,4,4],"rle":[0,16]}]}]})";
  CHECK_THROWS_AS(ingest::parse_scene_file(bad_class), ValidationError);
  const std::string dup = R"({"version":1,"scenes":[
    {"id":"x","width":4,"height":4,"instances":[]},
    {"id":"x","width":4,"height":4,"instances":[]}]})";
  CHECK_THROWS_AS(ingest::parse_scene_file(dup), ValidationError);
}

TEST_CASE("write/parse roundtrip reproduces synthetic scenes exactly") {
  synth::SynthConfig cfg;
  cfg.seed = 21;
  cfg.max_instances = 4;
  cfg.class_count = 3;
  std::vector<Scene> scenes;
  for (int i = 0; i < 25; ++i) scenes.push_back(synth::gen_scene(cfg, i));
  const std::string text = ingest::write_scene_file(scenes);
  const auto back = ingest::parse_scene_file(text);
  REQUIRE(back.size() == scenes.size());
  for (size_t s = 0; s < scenes.size(); ++s) {
    CHECK(back[s].id == scenes[s].id);
    CHECK(back[s].width == scenes[s].width);
    REQUIRE(back[s].instances.size() == scenes[s].instances.size());
    for (size_t i = 0; i < scenes[s].instances.size(); ++i) {
      const auto& orig = scenes[s].instances[i];
      const auto& got = back[s].instances[i];
      CHECK(got.class_id == orig.class_id);
      CHECK(got.box.x1 == orig.box.x1);
      CHECK(got.box.y1 == orig.box.y1);
      CHECK(got.box.x2 == orig.box.x2);
      CHECK(got.box.y2 == orig.box.y2);
      CHECK(got.mask.bits == orig.mask.bits);
    }
  }
  // a second trip is byte-identical
  CHECK(ingest::write_scene_file(back) == text);
}

TEST_CASE("rasterize_polygon: axis-aligned square") {
  Polygon square;
  square.vertices = {{1, 1}, {5, 1}, {5, 5}, {1, 5}};
  const BinaryMask m = ingest::rasterize_polygon(square, 8, 8);
  CHECK(m.count_on() == 16);
  for (int y = 0; y < 8; ++y) {
    for (int x = 0; x < 8; ++x) {
      const bool inside = (x + 0.5 >= 1.0 && x + 0.5 < 5.0 && y + 0.5 >= 1.0 && y + 0.5 < 5.0);
      CHECK(m.at(x, y) == (inside ? 1 : 0));
    }
  }
}

TEST_CASE("rasterize_polygon: triangle equals brute force") {
  Polygon tri;
  tri.vertices = {{0, 0}, {8, 0}, {0, 8}};
  const BinaryMask fast = ingest::rasterize_polygon(tri, 8, 8);
  const BinaryMask slow = brute_force_rasterize(tri, 8, 8);
  CHECK(fast.bits == slow.bits);
  CHECK(fast.count_on() == slow.count_on());
}

TEST_CASE("rasterize_polygon: degenerate collinear polygon covers nothing") {
  Polygon line;
  line.vertices = {{1, 1}, {4, 4}, {7, 7}};
  CHECK(ingest::rasterize_polygon(line, 8, 8).count_on() == 0);
}

TEST_CASE("rasterize_polygon: errors") {
  Polygon two;
  two.vertices = {{0, 0}, {1, 1}};
  CHECK_THROWS_AS(ingest::rasterize_polygon(two, 8, 8), ValidationError);
  Polygon inf_poly;
  inf_poly.vertices = {{0, 0}, {1, 0}, {std::numeric_limits<double>::infinity(), 1}};
  CHECK_THROWS_AS(ingest::rasterize_polygon(inf_poly, 8, 8), ValidationError);
}

TEST_CASE("rasterize_polygon equals brute force on 100 random polygons") {
  rng::SplitMix64 gen(400);
  for (int trial = 0; trial < 100; ++trial) {
    Polygon poly;
    const int nv = static_cast<int>(gen.next_int(3, 9));
    for (int v = 0; v < nv; ++v) {
      poly.vertices.emplace_back(gen.next_uniform(-2.0, 18.0), gen.next_uniform(-2.0, 18.0));
    }
    const int w = static_cast<int>(gen.next_int(4, 16));
    const int h = static_cast<int>(gen.next_int(4, 16));
    const BinaryMask fast = ingest::rasterize_polygon(poly, w, h);
    const BinaryMask slow = brute_force_rasterize(poly, w, h);
    CHECK(fast.bits == slow.bits);
  }
}

namespace {

std::string coco_doc(const std::string& annotations) {
  return R"({"images":[{"id":7,"width":16,"height":16,"file_name":"x.png"}],
    "annotations":[)" +
         annotations + R"(],
    "categories":[{"id":3,"name":"thing"},{"id":9,"name":"other"}]})";
}

}  // namespace

TEST_CASE("import_coco_subset: empty annotation list") {
  CHECK(ingest::import_coco_subset(coco_doc("")).scenes.empty());
}

TEST_CASE("import_coco_subset: polygon square covers its bbox") {
  const std::string ann = R"({"id":1,"image_id":7,"category_id":3,
    "bbox":[2,2,8,8],"segmentation":[[2,2,10,2,10,10,2,10]],"iscrowd":0})";
  const auto result = ingest::import_coco_subset(coco_doc(ann));
  REQUIRE(result.scenes.size() == 1);
  const Scene& scene = result.scenes[0];
  REQUIRE(scene.instances.size() == 1);
  CHECK(scene.instances[0].class_id == 0);  // category 3 -> class 0
  // rasterized polygon against the filled bbox
  BinaryMask full = BinaryMask::zeros(16, 16);
  for (int y = 2; y < 10; ++y) {
    for (int x = 2; x < 10; ++x) full.set(x, y, 1);
  }
  CHECK(mask_iou(scene.instances[0].mask, full) >= 0.9);
}

TEST_CASE("import_coco_subset: degenerate bbox skipped, counted") {
  const std::string anns = R"({"id":1,"image_id":7,"category_id":3,
    "bbox":[2,2,0,8],"segmentation":[[2,2,10,2,10,10]],"iscrowd":0},
    {"id":2,"image_id":7,"category_id":3,
    "bbox":[1,1,4,4],"segmentation":[[1,1,5,1,5,5,1,5]],"iscrowd":0})";
  const auto result = ingest::import_coco_subset(coco_doc(anns));
  CHECK(result.skipped_degenerate == 1);
  REQUIRE(result.scenes.size() == 1);
  CHECK(result.scenes[0].instances.size() == 1);
}

TEST_CASE("import_coco_subset: RLE segmentations and crowds are skipped") {
  const std::string anns = R"({"id":1,"image_id":7,"category_id":3,
    "bbox":[2,2,4,4],"segmentation":{"counts":[1,2],"size":[16,16]},"iscrowd":0},
    {"id":2,"image_id":7,"category_id":3,
    "bbox":[1,1,4,4],"segmentation":[[1,1,5,1,5,5,1,5]],"iscrowd":1})";
  const auto result = ingest::import_coco_subset(coco_doc(anns));
  CHECK(result.skipped_rle == 1);
  CHECK(result.skipped_crowd == 1);
  CHECK(result.scenes.empty());
}

TEST_CASE("import_coco_subset: whitelist remaps categories in ascending order") {
  const std::string anns = R"({"id":1,"image_id":7,"category_id":9,
    "bbox":[1,1,4,4],"segmentation":[[1,1,5,1,5,5,1,5]],"iscrowd":0})";
  const auto all = ingest::import_coco_subset(coco_doc(anns));
  REQUIRE(all.scenes.size() == 1);
  CHECK(all.scenes[0].instances[0].class_id == 1);  // categories {3,9} -> {0,1}
  const auto only9 = ingest::import_coco_subset(coco_doc(anns), {9});
  REQUIRE(only9.scenes.size() == 1);
  CHECK(only9.scenes[0].instances[0].class_id == 0);
  const auto only3 = ingest::import_coco_subset(coco_doc(anns), {3});
  CHECK(only3.scenes.empty());
}

TEST_CASE("import_coco_subset: missing keys are schema errors") {
  CHECK_THROWS_AS(ingest::import_coco_subset(R"({"images":[],"annotations":[]})"),
                  ParseError);
}

TEST_CASE("import never produces invalid scenes from fuzzed inputs") {
  rng::SplitMix64 gen(555);
  int ok = 0;
  for (int trial = 0; trial < 200; ++trial) {
    // random fragments: valid-ish docs with randomly corrupted fields
    std::string bbox = "[" + std::to_string(gen.next_int(-4, 12)) + "," +
                       std::to_string(gen.next_int(-4, 12)) + "," +
                       std::to_string(gen.next_int(-2, 12)) + "," +
                       std::to_string(gen.next_int(-2, 12)) + "]";
    std::string seg = trial % 5 == 0 ? R"({"counts":[5],"size":[4,4]})"
                                     : R"([[1,1,5,1,5,5,1,5]])";
    std::string ann = R"({"id":1,"image_id":7,"category_id":)" +
                      std::to_string(gen.next_int(0, 12)) + R"(,"bbox":)" + bbox +
                      R"(,"segmentation":)" + seg + R"(,"iscrowd":)" +
                      std::to_string(gen.next_int(0, 1)) + "}";
    try {
      const auto result = ingest::import_coco_subset(coco_doc(ann));
      for (const Scene& scene : result.scenes) scene.validate();
      ++ok;
    } catch (const Error&) {
      // rejection is fine; invalid Scenes are not
    }
  }
  CHECK(ok > 0);
}
