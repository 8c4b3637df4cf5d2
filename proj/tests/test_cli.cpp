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
// End-to-end checks against the built binary. Each case works in its own
// scratch directory under the system temp dir.

#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include <json.hpp>

#include "sais/evaluation.hpp"
#include "sais/ingest.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Scratch {
  fs::path dir;
  explicit Scratch(const std::string& name) {
    dir = fs::temp_directory_path() / ("sais-test-" + name + "-" + std::to_string(::getpid()));
    fs::remove_all(dir);
    fs::create_directories(dir);
  }
  ~Scratch() { fs::remove_all(dir); }
  std::string path(const std::string& name) const { return (dir / name).string(); }
};

int run(const std::string& args, const std::string& stdout_file = "",
        const std::string& stderr_file = "") {
  std::string cmd = std::string(SAIS_CLI_PATH) + " " + args;
  if (!stdout_file.empty()) cmd += " > " + stdout_file;
  if (!stderr_file.empty()) cmd += " 2> " + stderr_file;
  const int rc = std::system(cmd.c_str());
  return WEXITSTATUS(rc);
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

}  // namespace

TEST_CASE("gen-scenes writes a parseable file and a manifest") {
  Scratch tmp("gen");
  const std::string out = tmp.path("scenes.json");
  CHECK(run("gen-scenes --out " + out + " --count 5 --seed 3") == 0);
  const auto scenes = sais::ingest::parse_scene_file(slurp(out));
  CHECK(scenes.size() == 5);
  const json manifest = json::parse(slurp(out + ".manifest.json"));
  CHECK(manifest.at("command") == "gen-scenes");
  CHECK(manifest.at("seed") == 3);
  CHECK(manifest.at("config").at("count") == 5);
}

TEST_CASE("gen-scenes is bit-reproducible for a fixed seed") {
  Scratch tmp("gen-repro");
  const std::string a = tmp.path("a.json");
  const std::string b = tmp.path("b.json");
  CHECK(run("gen-scenes --out " + a + " --count 10 --seed 9") == 0);
  CHECK(run("gen-scenes --out " + b + " --count 10 --seed 9") == 0);
  CHECK(slurp(a) == slurp(b));
}

TEST_CASE("assign on an occlusion fixture reports disagreement") {
  Scratch tmp("assign");
  const std::string scenes = tmp.path("occ.json");
  CHECK(run("gen-occlusion --out " + scenes + " --count 3 --seed 1") == 0);
  const std::string stats = tmp.path("stats.json");
  CHECK(run("assign --scenes " + scenes + " --mode center --out " + tmp.path("t.json"),
            stats) == 0);
  const json s = json::parse(slurp(stats));
  CHECK(s.at("center_steal").get<int>() >= 3);  // one steal per fixture at least
  CHECK(s.at("scenes") == 3);
  const json targets = json::parse(slurp(tmp.path("t.json")));
  CHECK(targets.at("mode") == "center");
  CHECK(targets.at("scenes").size() == 3);
  // area mode on the same scenes writes different targets
  CHECK(run("assign --scenes " + scenes + " --mode area --out " + tmp.path("ta.json")) == 0);
  CHECK(slurp(tmp.path("t.json")) != slurp(tmp.path("ta.json")));
}

TEST_CASE("assign output is independent of --jobs") {
  Scratch tmp("assign-jobs");
  const std::string scenes = tmp.path("s.json");
  CHECK(run("gen-scenes --out " + scenes + " --count 12 --seed 4 --max-instances 4") == 0);
  CHECK(run("assign --scenes " + scenes + " --mode center --jobs 1 --out " +
            tmp.path("j1.json")) == 0);
  CHECK(run("assign --scenes " + scenes + " --mode center --jobs 4 --out " +
            tmp.path("j4.json")) == 0);
  CHECK(slurp(tmp.path("j1.json")) == slurp(tmp.path("j4.json")));
}

TEST_CASE("train-toy twice with one seed gives byte-identical models") {
  Scratch tmp("train");
  const std::string scenes = tmp.path("train.json");
  CHECK(run("gen-scenes --out " + scenes +
            " --count 6 --seed 2 --width 32 --height 32 --max-instances 1") == 0);
  const std::string args = "train-toy --scenes " + scenes +
                           " --epochs 2 --seed 7 --k 2 --trunk 3,4,4 --head-channels 4";
  CHECK(run(args + " --out " + tmp.path("m1.json") + " --curve " + tmp.path("c1.csv")) == 0);
  CHECK(run(args + " --out " + tmp.path("m2.json") + " --curve " + tmp.path("c2.csv")) == 0);
  CHECK(slurp(tmp.path("m1.json")) == slurp(tmp.path("m2.json")));
  CHECK(slurp(tmp.path("c1.csv")) == slurp(tmp.path("c2.csv")));
  CHECK(slurp(tmp.path("c1.csv")).substr(0, 5) == "epoch");
}

TEST_CASE("infer then eval runs the full loop; perfect preds give mAP 1") {
  Scratch tmp("inferevAl");
  const std::string scenes = tmp.path("s.json");
  CHECK(run("gen-scenes --out " + scenes +
            " --count 4 --seed 6 --width 32 --height 32 --max-instances 1") == 0);
  CHECK(run("train-toy --scenes " + scenes +
            " --epochs 1 --seed 1 --k 2 --trunk 3,4,4 --head-channels 4 --out " +
            tmp.path("m.json")) == 0);
  CHECK(run("infer --model " + tmp.path("m.json") + " --scenes " + scenes + " --out " +
            tmp.path("preds.json") + " --jobs 2") == 0);
  CHECK(run("eval --preds " + tmp.path("preds.json") + " --scenes " + scenes +
            " --kind box --out " + tmp.path("report.json")) == 0);
  const json report = json::parse(slurp(tmp.path("report.json")));
  CHECK(report.at("kind") == "box");
  CHECK(report.contains("mAP"));

  // hand-made perfect predictions evaluate to mAP 1.0
  const auto parsed = sais::ingest::parse_scene_file(slurp(scenes));
  std::map<std::string, std::vector<sais::Detection>> perfect;
  for (const auto& scene : parsed) {
    for (const auto& inst : scene.instances) {
      sais::Detection det;
      det.class_id = inst.class_id;
      det.score = 1.0;
      det.box = inst.box;
      sais::SoftMask sm = sais::SoftMask::filled(scene.width, scene.height, 0.0);
      for (size_t i = 0; i < inst.mask.bits.size(); ++i) {
        sm.values[i] = inst.mask.bits[i] ? 1.0 : 0.0;
      }
      det.mask = std::move(sm);
      perfect[scene.id].push_back(std::move(det));
    }
  }
  std::ofstream(tmp.path("perfect.json")) << sais::eval::predictions_to_json(perfect);
  const std::string stdout_file = tmp.path("eval_out.json");
  CHECK(run("eval --preds " + tmp.path("perfect.json") + " --scenes " + scenes +
            " --kind mask",
            stdout_file) == 0);
  const json perfect_report = json::parse(slurp(stdout_file));
  CHECK(perfect_report.at("mAP").get<double>() == 1.0);
}

TEST_CASE("fit-masks emits per-instance rows and a k table") {
  Scratch tmp("fit");
  const std::string scenes = tmp.path("s.json");
  CHECK(run("gen-scenes --out " + scenes + " --count 3 --seed 8 --max-instances 2") == 0);
  CHECK(run("fit-masks --scenes " + scenes + " --basis gt --out " + tmp.path("gt.json")) == 0);
  const json gt = json::parse(slurp(tmp.path("gt.json")));
  CHECK(gt.at("basis") == "gt");
  CHECK(gt.at("scenes").size() == 3);
  CHECK(!gt.at("scenes")[0].at("instances").empty());
  CHECK(gt.at("scenes")[0].at("instances")[0].contains("residual"));
  CHECK(gt.at("scenes")[0].at("instances")[0].contains("iou"));

  CHECK(run("fit-masks --scenes " + scenes + " --basis random --k 2,4 --seed 5 --out " +
            tmp.path("rnd.json")) == 0);
  const json rnd = json::parse(slurp(tmp.path("rnd.json")));
  CHECK(rnd.at("table").size() == 2);
}

TEST_CASE("render writes PGM files") {
  Scratch tmp("render");
  const std::string scenes = tmp.path("s.json");
  CHECK(run("gen-scenes --out " + scenes + " --count 2 --seed 5") == 0);
  CHECK(run("render --scenes " + scenes + " --out " + tmp.path("imgs") +
            " --what image") == 0);
  CHECK(run("render --scenes " + scenes + " --out " + tmp.path("imgs") +
            " --what masks") == 0);
  const std::string pgm = slurp(tmp.path("imgs") + "/synth-5-0.image.pgm");
  CHECK(pgm.substr(0, 3) == "P5\n");
}

TEST_CASE("ingest-coco imports polygons") {
  Scratch tmp("coco");
  const std::string coco = tmp.path("coco.json");
  std::ofstream(coco) << R"({"images":[{"id":1,"width":32,"height":32,"file_name":"a"}],
    "annotations":[{"id":1,"image_id":1,"category_id":5,"bbox":[4,4,10,10],
      "segmentation":[[4,4,14,4,14,14,4,14]],"iscrowd":0}],
    "categories":[{"id":5,"name":"x"}]})";
  const std::string stats = tmp.path("stats.json");
  CHECK(run("ingest-coco --in " + coco + " --out " + tmp.path("s.json"), stats) == 0);
  CHECK(json::parse(slurp(stats)).at("scenes") == 1);
  const auto scenes = sais::ingest::parse_scene_file(slurp(tmp.path("s.json")));
  CHECK(scenes[0].instances.size() == 1);
}

TEST_CASE("exit codes and --json-errors") {
  Scratch tmp("errors");
  // unknown flag -> 1
  CHECK(run("gen-scenes --out x.json --frobnicate 2", "/dev/null", "/dev/null") == 1);
  // missing input file -> 1 with a JSON error payload
  const std::string err = tmp.path("err.json");
  CHECK(run("--json-errors assign --scenes " + tmp.path("nope.json") + " --mode center --out " +
            tmp.path("t.json"),
            "/dev/null", err) == 1);
  const json parsed = json::parse(slurp(err));
  CHECK(parsed.contains("error"));
  CHECK(parsed.contains("message"));
  // corrupt scene file -> 1
  std::ofstream(tmp.path("bad.json")) << R"({"version":1,"scenes":[{"id":"x","width":4,)"
                                      << R"("height":4,"instances":[{"class_id":0,)"
                                      << R"("bbox":[0,0,4,4],"rle":[5]}]}]})";
  CHECK(run("assign --scenes " + tmp.path("bad.json") + " --mode area --out " +
            tmp.path("t2.json"),
            "/dev/null", "/dev/null") == 1);
  // no partial output was left behind
  CHECK_FALSE(fs::exists(tmp.path("t2.json")));
}

TEST_CASE("--config supplies defaults but explicit flags win") {
  Scratch tmp("config");
  std::ofstream(tmp.path("cfg.json")) << R"({"count": 7, "seed": 11})";
  CHECK(run("gen-scenes --out " + tmp.path("a.json") + " --config " + tmp.path("cfg.json")) ==
        0);
  CHECK(sais::ingest::parse_scene_file(slurp(tmp.path("a.json"))).size() == 7);
  CHECK(run("gen-scenes --out " + tmp.path("b.json") + " --config " + tmp.path("cfg.json") +
            " --count 2") == 0);
  CHECK(sais::ingest::parse_scene_file(slurp(tmp.path("b.json"))).size() == 2);
  const json manifest = json::parse(slurp(tmp.path("a.json") + ".manifest.json"));
  CHECK(manifest.at("seed") == 11);
}
