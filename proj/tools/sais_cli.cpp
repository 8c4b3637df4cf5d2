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
// Command-line entry point for the whole pipeline: scene generation,
// ingestion, assignment analysis, capacity fitting, toy training,
// inference, evaluation and rendering.
//
// Exit codes: 0 success, 1 input/validation error, 2 internal failure.

#include <unistd.h>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "sais/assignment.hpp"
#include "sais/core_types.hpp"
#include "sais/error.hpp"
#include "sais/evaluation.hpp"
#include "sais/ingest.hpp"
#include "sais/kernels.hpp"
#include "sais/mask_assembly.hpp"
#include "sais/parallel.hpp"
#include "sais/synth.hpp"
#include "sais/toy_model.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kToolVersion = "0.1.0";

// ---------------------------------------------------------------------------
// Logging (SAIS_LOG=error|info|debug)

enum class LogLevel { error = 0, info = 1, debug = 2 };

LogLevel log_level() {
  static const LogLevel level = [] {
    const char* env = std::getenv("SAIS_LOG");
    if (env == nullptr) return LogLevel::info;
    const std::string v = env;
    if (v == "error") return LogLevel::error;
    if (v == "debug") return LogLevel::debug;
    return LogLevel::info;
  }();
  return level;
}

void log_info(const std::string& msg) {
  if (log_level() >= LogLevel::info) std::cerr << "[info] " << msg << "\n";
}

void log_debug(const std::string& msg) {
  if (log_level() >= LogLevel::debug) std::cerr << "[debug] " << msg << "\n";
}

// ---------------------------------------------------------------------------
// File helpers

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw sais::ValidationError("cannot open input file '" + path + "'");
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return bytes;
}

// Write-to-temp then rename: no partial output is ever visible.
void write_file_atomic(const std::string& path, const std::string& bytes) {
  const fs::path target(path);
  if (target.has_parent_path()) fs::create_directories(target.parent_path());
  const std::string tmp = path + ".tmp-" + std::to_string(::getpid());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw sais::ValidationError("cannot open output file '" + tmp + "'");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw sais::ValidationError("failed writing '" + tmp + "'");
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp);
    throw sais::ValidationError("failed to move output into place: " + ec.message());
  }
}

class Manifest {
 public:
  Manifest(std::string command, uint64_t seed) : seed_(seed) {
    j_["command"] = std::move(command);
    j_["tool_version"] = kToolVersion;
    start_ = std::chrono::steady_clock::now();
  }

  json& config() { return j_["config"]; }
  void add_input(const std::string& path) { j_["inputs"].push_back(path); }
  void add_output(const std::string& path) { j_["outputs"].push_back(path); }

  /// Written next to the primary output as <output>.manifest.json.
  void write(const std::string& primary_output) {
    j_["seed"] = seed_;
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    j_["wall_time_seconds"] = secs;
    write_file_atomic(primary_output + ".manifest.json", j_.dump(2) + "\n");
  }

 private:
  json j_;
  uint64_t seed_;
  std::chrono::steady_clock::time_point start_;
};

// --config overlay: values fill in flags the user did not pass explicitly.
class Overlay {
 public:
  Overlay(CLI::App* cmd, const std::string& config_path) : cmd_(cmd) {
    if (!config_path.empty()) {
      try {
        cfg_ = json::parse(read_file(config_path));
      } catch (const json::parse_error& e) {
        throw sais::ParseError(std::string("config file: ") + e.what());
      }
    }
  }

  template <typename T>
  void maybe(const std::string& flag, T& var, const std::string& key) {
    if (!cfg_.is_object() || !cfg_.contains(key)) return;
    if (cmd_->count(flag) > 0) return;  // explicit flags win
    var = cfg_.at(key).get<T>();
  }

 private:
  CLI::App* cmd_;
  json cfg_;
};

std::vector<sais::Scene> load_scenes(const std::string& path) {
  return sais::ingest::parse_scene_file(read_file(path));
}

std::vector<sais::assign::LevelSpec> parse_level_specs(const std::vector<int>& strides,
                                                       const std::vector<std::string>& ranges) {
  if (ranges.size() != strides.size() + 1) {
    throw sais::ConfigError("--ranges must list one more bound than --strides");
  }
  std::vector<double> bounds;
  for (const std::string& r : ranges) {
    if (r == "inf") {
      bounds.push_back(std::numeric_limits<double>::infinity());
    } else {
      bounds.push_back(std::stod(r));
    }
  }
  std::vector<sais::assign::LevelSpec> specs;
  for (size_t i = 0; i < strides.size(); ++i) {
    specs.push_back({strides[i], bounds[i], bounds[i + 1]});
  }
  return specs;
}

// ---------------------------------------------------------------------------
// Subcommand bodies

struct GenScenesArgs {
  std::string out;
  int count = 100;
  uint64_t seed = 0;
  int width = 64, height = 64;
  int min_instances = 1, max_instances = 3;
  std::vector<std::string> shapes = {"rectangle", "ellipse"};
  double min_size = 0.15, max_size = 0.5;
  int classes = 1;
  std::string overlap = "free";
};

int run_gen_scenes(const GenScenesArgs& a) {
  sais::synth::SynthConfig cfg;
  cfg.width = a.width;
  cfg.height = a.height;
  cfg.min_instances = a.min_instances;
  cfg.max_instances = a.max_instances;
  cfg.shapes.clear();
  for (const std::string& s : a.shapes) {
    if (s == "rectangle") {
      cfg.shapes.push_back(sais::synth::ShapeKind::rectangle);
    } else if (s == "ellipse") {
      cfg.shapes.push_back(sais::synth::ShapeKind::ellipse);
    } else {
      throw sais::ConfigError("unknown shape kind '" + s + "'");
    }
  }
  cfg.min_size_frac = a.min_size;
  cfg.max_size_frac = a.max_size;
  cfg.class_count = a.classes;
  cfg.seed = a.seed;
  if (a.overlap == "free") {
    cfg.overlap = sais::synth::OverlapPolicy::free;
  } else if (a.overlap == "occlusion-case") {
    cfg.overlap = sais::synth::OverlapPolicy::occlusion_case;
  } else {
    throw sais::ConfigError("unknown overlap policy '" + a.overlap + "'");
  }

  Manifest manifest("gen-scenes", a.seed);
  manifest.config() = {{"count", a.count},       {"width", a.width},
                       {"height", a.height},     {"min_instances", a.min_instances},
                       {"max_instances", a.max_instances}, {"shapes", a.shapes},
                       {"min_size", a.min_size}, {"max_size", a.max_size},
                       {"classes", a.classes},   {"overlap", a.overlap}};
  std::vector<sais::Scene> scenes;
  scenes.reserve(a.count);
  for (int i = 0; i < a.count; ++i) {
    scenes.push_back(sais::synth::gen_scene(cfg, static_cast<uint64_t>(i)));
  }
  write_file_atomic(a.out, sais::ingest::write_scene_file(scenes));
  manifest.add_output(a.out);
  manifest.write(a.out);
  log_info("wrote " + std::to_string(scenes.size()) + " scenes to " + a.out);
  return 0;
}

int run_gen_occlusion(const std::string& out, int count, uint64_t seed) {
  Manifest manifest("gen-occlusion", seed);
  manifest.config() = {{"count", count}};
  std::vector<sais::Scene> scenes;
  scenes.reserve(count);
  for (int i = 0; i < count; ++i) {
    scenes.push_back(sais::synth::gen_occlusion_case(seed + static_cast<uint64_t>(i)));
  }
  write_file_atomic(out, sais::ingest::write_scene_file(scenes));
  manifest.add_output(out);
  manifest.write(out);
  log_info("wrote " + std::to_string(scenes.size()) + " occlusion fixtures to " + out);
  return 0;
}

int run_ingest_coco(const std::string& in, const std::string& out,
                    const std::vector<int>& whitelist) {
  Manifest manifest("ingest-coco", 0);
  manifest.config() = {{"class_whitelist", whitelist}};
  manifest.add_input(in);
  const sais::ingest::CocoImportResult result =
      sais::ingest::import_coco_subset(read_file(in), whitelist);
  write_file_atomic(out, sais::ingest::write_scene_file(result.scenes));
  manifest.add_output(out);
  manifest.write(out);
  json stats = {{"scenes", result.scenes.size()},
                {"skipped_rle", result.skipped_rle},
                {"skipped_crowd", result.skipped_crowd},
                {"skipped_degenerate", result.skipped_degenerate}};
  std::cout << stats.dump(2) << "\n";
  return 0;
}

struct AssignArgs {
  std::string scenes;
  std::string out;
  std::string mode = "center";
  std::vector<int> strides = {8, 16, 32, 64, 128};
  std::vector<std::string> ranges = {"0", "64", "128", "256", "512", "inf"};
  uint64_t seed = 0;
  int jobs = 1;
};

int run_assign(const AssignArgs& a) {
  const auto specs = parse_level_specs(a.strides, a.ranges);
  sais::assign::validate_level_specs(specs);
  const sais::assign::AssignMode mode = sais::assign::assign_mode_from_string(a.mode);
  std::vector<sais::Scene> scenes = load_scenes(a.scenes);
  std::sort(scenes.begin(), scenes.end(),
            [](const sais::Scene& x, const sais::Scene& y) { return x.id < y.id; });

  Manifest manifest("assign", a.seed);
  manifest.config() = {{"mode", a.mode}, {"strides", a.strides}, {"ranges", a.ranges},
                       {"jobs", a.jobs}};
  manifest.add_input(a.scenes);

  struct PerScene {
    std::string requested_json;
    std::vector<size_t> positives_per_level;
    size_t disagreements = 0;
  };
  std::vector<PerScene> results(scenes.size());
  sais::parallel_for(scenes.size(), a.jobs, [&](size_t i) {
    const sais::Scene& scene = scenes[i];
    const auto by_area = sais::assign::build_targets(scene, specs, sais::assign::AssignMode::area);
    const auto by_center =
        sais::assign::build_targets(scene, specs, sais::assign::AssignMode::center);
    const auto& requested = mode == sais::assign::AssignMode::area ? by_area : by_center;
    PerScene& r = results[i];
    r.requested_json = sais::assign::targets_to_json(requested, scene.id);
    r.positives_per_level.resize(specs.size(), 0);
    for (size_t li = 0; li < specs.size(); ++li) {
      r.positives_per_level[li] = requested.levels[li].positive_count();
      const auto& la = by_area.levels[li];
      const auto& lc = by_center.levels[li];
      for (size_t loc = 0; loc < la.size(); ++loc) {
        if (la.owner[loc] != lc.owner[loc]) ++r.disagreements;
      }
    }
  });

  std::string out_json = "{\"mode\":\"" + a.mode + "\",\"scenes\":[";
  std::vector<size_t> positives(specs.size(), 0);
  size_t steal = 0;
  for (size_t i = 0; i < results.size(); ++i) {
    if (i > 0) out_json += ',';
    out_json += results[i].requested_json;
    for (size_t li = 0; li < specs.size(); ++li) {
      positives[li] += results[i].positives_per_level[li];
    }
    steal += results[i].disagreements;
  }
  out_json += "]}";
  write_file_atomic(a.out, out_json);
  manifest.add_output(a.out);
  manifest.write(a.out);

  json stats;
  stats["scenes"] = scenes.size();
  stats["positives_per_level"] = positives;
  stats["center_steal"] = steal;
  std::cout << stats.dump(2) << "\n";
  return 0;
}

struct FitMasksArgs {
  std::string scenes;
  std::string out;
  std::string basis = "gt";
  std::vector<int> k_list = {1, 2, 4, 8, 16, 32};
  double ridge = 1e-6;
  uint64_t seed = 0;
  std::string prototypes_file;
};

int run_fit_masks(const FitMasksArgs& a) {
  const std::vector<sais::Scene> scenes = load_scenes(a.scenes);
  Manifest manifest("fit-masks", a.seed);
  manifest.config() = {{"basis", a.basis}, {"k_list", a.k_list}, {"ridge", a.ridge}};
  manifest.add_input(a.scenes);

  json out;
  out["basis"] = a.basis;
  out["ridge"] = a.ridge;
  out["scenes"] = json::array();
  std::map<int, std::pair<double, size_t>> iou_by_k;  // k -> (sum, count)

  const auto fit_instances = [&](const sais::Scene& scene,
                                 const sais::maskops::PrototypeStack& basis_full,
                                 const std::vector<int>& ks, json& scene_json) {
    for (int k : ks) {
      if (k > basis_full.k) continue;
      sais::maskops::PrototypeStack p = sais::maskops::PrototypeStack::zeros(
          basis_full.w, basis_full.h, k);
      for (int y = 0; y < p.h; ++y) {
        for (int x = 0; x < p.w; ++x) {
          for (int j = 0; j < k; ++j) p.set(x, y, j, basis_full.at(x, y, j));
        }
      }
      for (size_t i = 0; i < scene.instances.size(); ++i) {
        const auto fit = sais::maskops::fit_coefficients(p, scene.instances[i].mask, a.ridge);
        const sais::SoftMask reconstructed = sais::maskops::assemble(p, fit.coefficients);
        const double iou = sais::mask_iou(sais::maskops::binarize(reconstructed, 0.5),
                                          scene.instances[i].mask);
        scene_json["instances"].push_back({{"instance", i},
                                           {"k", k},
                                           {"residual", fit.residual},
                                           {"iou", iou}});
        auto& acc = iou_by_k[k];
        acc.first += iou;
        acc.second += 1;
      }
    }
  };

  for (const sais::Scene& scene : scenes) {
    json scene_json;
    scene_json["scene_id"] = scene.id;
    scene_json["instances"] = json::array();
    if (scene.instances.empty()) {
      out["scenes"].push_back(std::move(scene_json));
      continue;
    }
    if (!a.prototypes_file.empty()) {
      json pj = json::parse(read_file(a.prototypes_file));
      sais::maskops::PrototypeStack p;
      p.w = pj.at("w").get<int>();
      p.h = pj.at("h").get<int>();
      p.k = pj.at("k").get<int>();
      p.values = pj.at("values").get<std::vector<double>>();
      p.validate();
      fit_instances(scene, p, {p.k}, scene_json);
    } else if (a.basis == "gt") {
      const auto basis = sais::maskops::gt_mask_basis(scene);
      fit_instances(scene, basis, {basis.k}, scene_json);
    } else if (a.basis == "random") {
      const int k_max = *std::max_element(a.k_list.begin(), a.k_list.end());
      const auto basis =
          sais::maskops::smooth_random_basis(scene.width, scene.height, k_max, a.seed);
      fit_instances(scene, basis, a.k_list, scene_json);
    } else {
      throw sais::ConfigError("unknown basis '" + a.basis + "' (expected gt|random)");
    }
    out["scenes"].push_back(std::move(scene_json));
  }

  out["table"] = json::array();
  for (const auto& [k, acc] : iou_by_k) {
    out["table"].push_back(
        {{"k", k}, {"mean_iou", acc.first / static_cast<double>(acc.second)}});
  }
  write_file_atomic(a.out, out.dump(2) + "\n");
  manifest.add_output(a.out);
  manifest.write(a.out);
  std::cout << out["table"].dump(2) << "\n";
  return 0;
}

struct TrainArgs {
  std::string scenes;
  std::string out = "model.json";
  std::string curve;
  int epochs = 20;
  double lr = 0.01;
  double momentum = 0.9;
  uint64_t seed = 0;
  int classes = 1;
  int k = 8;
  std::vector<int> trunk = {8, 16, 16};
  int head_channels = 16;
  int proto_stride = 4;
  bool no_fusion = false;
  std::string mode = "center";
};

int run_train_toy(const TrainArgs& a) {
  const std::vector<sais::Scene> scenes = load_scenes(a.scenes);
  sais::toy::ModelConfig mc;
  mc.class_count = a.classes;
  mc.coeff_channels = a.k;
  mc.trunk_channels = a.trunk;
  mc.head_channels = a.head_channels;
  mc.proto_stride = a.proto_stride;
  mc.fuse_branches = !a.no_fusion;
  mc.seed = a.seed;
  sais::toy::TrainConfig tc;
  tc.lr = a.lr;
  tc.epochs = a.epochs;
  tc.momentum = a.momentum;
  tc.seed = a.seed;
  tc.mode = sais::assign::assign_mode_from_string(a.mode);

  Manifest manifest("train-toy", a.seed);
  manifest.config() = {{"epochs", a.epochs},       {"lr", a.lr},
                       {"momentum", a.momentum},   {"classes", a.classes},
                       {"k", a.k},                 {"trunk", a.trunk},
                       {"head_channels", a.head_channels}, {"proto_stride", a.proto_stride},
                       {"fusion", !a.no_fusion},
                       {"mode", a.mode}};
  manifest.add_input(a.scenes);

  sais::toy::Model model = sais::toy::init_model(mc);
  const auto curve = sais::toy::train(model, scenes, tc);
  for (size_t e = 0; e < curve.size(); ++e) {
    log_info("epoch " + std::to_string(e + 1) + " mean loss " +
             std::to_string(curve[e].total));
  }
  write_file_atomic(a.out, sais::toy::model_to_json(model));
  manifest.add_output(a.out);
  if (!a.curve.empty()) {
    write_file_atomic(a.curve, sais::toy::curve_to_csv(curve));
    manifest.add_output(a.curve);
  }
  manifest.write(a.out);
  return 0;
}

struct InferArgs {
  std::string model;
  std::string scenes;
  std::string out = "predictions.json";
  double score_thr = 0.05;
  double nms_iou = 0.5;
  int top = 100;
  double mask_thr = 0.5;
  int jobs = 1;
};

int run_infer(const InferArgs& a) {
  const sais::toy::Model model = sais::toy::model_from_json(read_file(a.model));
  std::vector<sais::Scene> scenes = load_scenes(a.scenes);
  std::sort(scenes.begin(), scenes.end(),
            [](const sais::Scene& x, const sais::Scene& y) { return x.id < y.id; });
  sais::toy::PredictConfig pc;
  pc.score_thr = a.score_thr;
  pc.nms_iou = a.nms_iou;
  pc.top = a.top;
  pc.mask_thr = a.mask_thr;

  Manifest manifest("infer", model.config.seed);
  manifest.config() = {{"score_thr", a.score_thr},
                       {"nms_iou", a.nms_iou},
                       {"top", a.top},
                       {"mask_thr", a.mask_thr},
                       {"jobs", a.jobs}};
  manifest.add_input(a.model);
  manifest.add_input(a.scenes);

  std::vector<std::vector<sais::Detection>> results(scenes.size());
  sais::parallel_for(scenes.size(), a.jobs, [&](size_t i) {
    const std::vector<double> image = sais::synth::render_image(scenes[i]);
    results[i] = sais::toy::predict(model, image, scenes[i].width, scenes[i].height, pc);
    log_debug("scene " + scenes[i].id + ": " + std::to_string(results[i].size()) +
              " detections");
  });
  std::map<std::string, std::vector<sais::Detection>> preds;
  for (size_t i = 0; i < scenes.size(); ++i) preds[scenes[i].id] = std::move(results[i]);
  write_file_atomic(a.out, sais::eval::predictions_to_json(preds, a.mask_thr));
  manifest.add_output(a.out);
  manifest.write(a.out);
  log_info("wrote predictions for " + std::to_string(scenes.size()) + " scenes to " + a.out);
  return 0;
}

struct EvalArgs {
  std::string preds;
  std::string scenes;
  std::string out;
  std::string kind = "box";
  int max_dets = 100;
  double small_max = 32.0 * 32.0;
  double medium_max = 96.0 * 96.0;
  int jobs = 1;
};

int run_eval(const EvalArgs& a) {
  const std::vector<sais::Scene> scenes = load_scenes(a.scenes);
  const auto preds = sais::eval::predictions_from_json(read_file(a.preds), scenes);
  sais::eval::EvalConfig cfg =
      sais::eval::EvalConfig::defaults(sais::eval::kind_from_string(a.kind));
  cfg.max_dets = a.max_dets;
  cfg.small_max = a.small_max;
  cfg.medium_max = a.medium_max;

  Manifest manifest("eval", 0);
  manifest.config() = {{"kind", a.kind},
                       {"max_dets", a.max_dets},
                       {"small_max", a.small_max},
                       {"medium_max", a.medium_max},
                       {"jobs", a.jobs}};
  manifest.add_input(a.preds);
  manifest.add_input(a.scenes);

  const sais::eval::EvalReport report = sais::eval::evaluate(preds, scenes, cfg, a.jobs);
  const std::string report_json = sais::eval::report_to_json(report, cfg.kind);
  std::cout << report_json << "\n";
  if (!a.out.empty()) {
    write_file_atomic(a.out, report_json + "\n");
    manifest.add_output(a.out);
    manifest.write(a.out);
  }
  return 0;
}

struct RenderArgs {
  std::string scenes;
  std::string out_dir = "render";
  std::string what = "image";
  std::string mode = "center";
};

int run_render(const RenderArgs& a) {
  const std::vector<sais::Scene> scenes = load_scenes(a.scenes);
  fs::create_directories(a.out_dir);
  Manifest manifest("render", 0);
  manifest.config() = {{"what", a.what}, {"mode", a.mode}};
  manifest.add_input(a.scenes);

  for (const sais::Scene& scene : scenes) {
    std::vector<double> img;
    if (a.what == "image") {
      img = sais::synth::render_image(scene);
    } else if (a.what == "masks") {
      img.assign(static_cast<size_t>(scene.width) * scene.height, 0.0);
      const double n = static_cast<double>(std::max<size_t>(1, scene.instances.size()));
      for (size_t i = 0; i < scene.instances.size(); ++i) {
        const double v = static_cast<double>(i + 1) / n;
        for (size_t p = 0; p < img.size(); ++p) {
          if (scene.instances[i].mask.bits[p]) img[p] = v;
        }
      }
    } else if (a.what == "center") {
      const auto targets = sais::assign::build_targets(
          scene, sais::assign::default_level_specs(),
          sais::assign::assign_mode_from_string(a.mode));
      const auto& lt = targets.levels[0];
      img.assign(static_cast<size_t>(scene.width) * scene.height, 0.0);
      for (int y = 0; y < scene.height; ++y) {
        for (int x = 0; x < scene.width; ++x) {
          const int col = std::min(x / lt.level.stride, lt.grid_width - 1);
          const int row = std::min(y / lt.level.stride, lt.grid_height - 1);
          img[static_cast<size_t>(y) * scene.width + x] =
              lt.center_score[static_cast<size_t>(row) * lt.grid_width + col];
        }
      }
    } else {
      throw sais::ConfigError("unknown render target '" + a.what +
                              "' (expected image|masks|center)");
    }
    const std::string path = a.out_dir + "/" + scene.id + "." + a.what + ".pgm";
    write_file_atomic(path, sais::synth::to_pgm(img, scene.width, scene.height));
    manifest.add_output(path);
  }
  manifest.write(a.out_dir + "/render");
  log_info("rendered " + std::to_string(scenes.size()) + " scenes into " + a.out_dir);
  return 0;
}

int error_exit_code(const sais::Error& e) {
  return e.kind() == "internal" ? 2 : 1;
}

void report_error(const std::string& kind, const std::string& msg, bool json_errors) {
  if (json_errors) {
    json j = {{"error", kind}, {"message", msg}};
    std::cerr << j.dump() << "\n";
  } else {
    std::cerr << "error (" << kind << "): " << msg << "\n";
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"single-stage anchor-free instance segmentation toolkit"};
  app.require_subcommand(1);
  bool json_errors = false;
  app.add_flag("--json-errors", json_errors, "emit machine-readable errors on stderr");

  // gen-scenes ------------------------------------------------------------
  GenScenesArgs gen;
  std::string gen_config;
  CLI::App* gen_cmd = app.add_subcommand("gen-scenes", "generate synthetic scenes");
  gen_cmd->add_option("--out", gen.out, "output scene file")->required();
  gen_cmd->add_option("--count", gen.count);
  gen_cmd->add_option("--seed", gen.seed);
  gen_cmd->add_option("--width", gen.width);
  gen_cmd->add_option("--height", gen.height);
  gen_cmd->add_option("--min-instances", gen.min_instances);
  gen_cmd->add_option("--max-instances", gen.max_instances);
  gen_cmd->add_option("--shapes", gen.shapes)->delimiter(',');
  gen_cmd->add_option("--min-size", gen.min_size);
  gen_cmd->add_option("--max-size", gen.max_size);
  gen_cmd->add_option("--classes", gen.classes);
  gen_cmd->add_option("--overlap", gen.overlap, "free|occlusion-case");
  gen_cmd->add_option("--config", gen_config, "JSON config; explicit flags win");

  // gen-occlusion ----------------------------------------------------------
  std::string occ_out;
  int occ_count = 1;
  uint64_t occ_seed = 0;
  std::string occ_config;
  CLI::App* occ_cmd = app.add_subcommand("gen-occlusion", "generate center-occlusion fixtures");
  occ_cmd->add_option("--out", occ_out)->required();
  occ_cmd->add_option("--count", occ_count);
  occ_cmd->add_option("--seed", occ_seed);
  occ_cmd->add_option("--config", occ_config);

  // ingest-coco -------------------------------------------------------------
  std::string coco_in, coco_out;
  std::vector<int> coco_whitelist;
  CLI::App* coco_cmd = app.add_subcommand("ingest-coco", "import COCO polygon annotations");
  coco_cmd->add_option("--in", coco_in)->required();
  coco_cmd->add_option("--out", coco_out)->required();
  coco_cmd->add_option("--classes", coco_whitelist, "category id whitelist")->delimiter(',');

  // assign -------------------------------------------------------------------
  AssignArgs assign_args;
  std::string assign_config;
  CLI::App* assign_cmd = app.add_subcommand("assign", "build per-location training targets");
  assign_cmd->add_option("--scenes", assign_args.scenes)->required();
  assign_cmd->add_option("--out", assign_args.out)->required();
  assign_cmd->add_option("--mode", assign_args.mode, "area|center");
  assign_cmd->add_option("--strides", assign_args.strides)->delimiter(',');
  assign_cmd->add_option("--ranges", assign_args.ranges)->delimiter(',');
  assign_cmd->add_option("--jobs", assign_args.jobs);
  assign_cmd->add_option("--config", assign_config);

  // fit-masks ------------------------------------------------------------------
  FitMasksArgs fit_args;
  std::string fit_config;
  CLI::App* fit_cmd = app.add_subcommand("fit-masks", "prototype capacity oracle");
  fit_cmd->add_option("--scenes", fit_args.scenes)->required();
  fit_cmd->add_option("--out", fit_args.out)->required();
  fit_cmd->add_option("--basis", fit_args.basis, "gt|random");
  fit_cmd->add_option("--k", fit_args.k_list)->delimiter(',');
  fit_cmd->add_option("--ridge", fit_args.ridge);
  fit_cmd->add_option("--seed", fit_args.seed);
  fit_cmd->add_option("--prototypes", fit_args.prototypes_file, "JSON tensor file");
  fit_cmd->add_option("--config", fit_config);

  // train-toy ---------------------------------------------------------------
  TrainArgs train_args;
  std::string train_config;
  CLI::App* train_cmd = app.add_subcommand("train-toy", "train the toy model");
  train_cmd->add_option("--scenes", train_args.scenes)->required();
  train_cmd->add_option("--out", train_args.out);
  train_cmd->add_option("--curve", train_args.curve, "loss curve CSV path");
  train_cmd->add_option("--epochs", train_args.epochs);
  train_cmd->add_option("--lr", train_args.lr);
  train_cmd->add_option("--momentum", train_args.momentum);
  train_cmd->add_option("--seed", train_args.seed);
  train_cmd->add_option("--classes", train_args.classes);
  train_cmd->add_option("--k", train_args.k);
  train_cmd->add_option("--trunk", train_args.trunk)->delimiter(',');
  train_cmd->add_option("--head-channels", train_args.head_channels);
  train_cmd->add_option("--proto-stride", train_args.proto_stride);
  train_cmd->add_flag("--no-fusion", train_args.no_fusion,
                      "coefficients from the classification branch only");
  train_cmd->add_option("--mode", train_args.mode, "area|center");
  train_cmd->add_option("--config", train_config);

  // infer ----------------------------------------------------------------------
  InferArgs infer_args;
  std::string infer_config;
  CLI::App* infer_cmd = app.add_subcommand("infer", "run inference over scenes");
  infer_cmd->add_option("--model", infer_args.model)->required();
  infer_cmd->add_option("--scenes", infer_args.scenes)->required();
  infer_cmd->add_option("--out", infer_args.out);
  infer_cmd->add_option("--score-thr", infer_args.score_thr);
  infer_cmd->add_option("--nms-iou", infer_args.nms_iou);
  infer_cmd->add_option("--top", infer_args.top);
  infer_cmd->add_option("--mask-thr", infer_args.mask_thr);
  infer_cmd->add_option("--jobs", infer_args.jobs);
  infer_cmd->add_option("--config", infer_config);

  // eval --------------------------------------------------------------------------
  EvalArgs eval_args;
  std::string eval_config;
  CLI::App* eval_cmd = app.add_subcommand("eval", "COCO-style evaluation");
  eval_cmd->add_option("--preds", eval_args.preds)->required();
  eval_cmd->add_option("--scenes", eval_args.scenes)->required();
  eval_cmd->add_option("--out", eval_args.out);
  eval_cmd->add_option("--kind", eval_args.kind, "box|mask");
  eval_cmd->add_option("--max-dets", eval_args.max_dets);
  eval_cmd->add_option("--small-max", eval_args.small_max);
  eval_cmd->add_option("--medium-max", eval_args.medium_max);
  eval_cmd->add_option("--jobs", eval_args.jobs);
  eval_cmd->add_option("--config", eval_config);

  // render ----------------------------------------------------------------------
  RenderArgs render_args;
  CLI::App* render_cmd = app.add_subcommand("render", "export scenes/assignments as PGM");
  render_cmd->add_option("--scenes", render_args.scenes)->required();
  render_cmd->add_option("--out", render_args.out_dir);
  render_cmd->add_option("--what", render_args.what, "image|masks|center");
  render_cmd->add_option("--mode", render_args.mode, "area|center (for --what center)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    app.exit(e);
    return 1;
  }

  try {
    log_debug("kernel backend: " +
              sais::kernels::backend_name(sais::kernels::active_backend()));
    if (gen_cmd->parsed()) {
      Overlay o(gen_cmd, gen_config);
      o.maybe("--count", gen.count, "count");
      o.maybe("--seed", gen.seed, "seed");
      o.maybe("--width", gen.width, "width");
      o.maybe("--height", gen.height, "height");
      o.maybe("--min-instances", gen.min_instances, "min_instances");
      o.maybe("--max-instances", gen.max_instances, "max_instances");
      o.maybe("--shapes", gen.shapes, "shapes");
      o.maybe("--min-size", gen.min_size, "min_size");
      o.maybe("--max-size", gen.max_size, "max_size");
      o.maybe("--classes", gen.classes, "classes");
      o.maybe("--overlap", gen.overlap, "overlap");
      return run_gen_scenes(gen);
    }
    if (occ_cmd->parsed()) {
      Overlay o(occ_cmd, occ_config);
      o.maybe("--count", occ_count, "count");
      o.maybe("--seed", occ_seed, "seed");
      return run_gen_occlusion(occ_out, occ_count, occ_seed);
    }
    if (coco_cmd->parsed()) return run_ingest_coco(coco_in, coco_out, coco_whitelist);
    if (assign_cmd->parsed()) {
      Overlay o(assign_cmd, assign_config);
      o.maybe("--mode", assign_args.mode, "mode");
      o.maybe("--strides", assign_args.strides, "strides");
      o.maybe("--ranges", assign_args.ranges, "ranges");
      o.maybe("--jobs", assign_args.jobs, "jobs");
      return run_assign(assign_args);
    }
    if (fit_cmd->parsed()) {
      Overlay o(fit_cmd, fit_config);
      o.maybe("--basis", fit_args.basis, "basis");
      o.maybe("--k", fit_args.k_list, "k");
      o.maybe("--ridge", fit_args.ridge, "ridge");
      o.maybe("--seed", fit_args.seed, "seed");
      return run_fit_masks(fit_args);
    }
    if (train_cmd->parsed()) {
      Overlay o(train_cmd, train_config);
      o.maybe("--epochs", train_args.epochs, "epochs");
      o.maybe("--lr", train_args.lr, "lr");
      o.maybe("--momentum", train_args.momentum, "momentum");
      o.maybe("--seed", train_args.seed, "seed");
      o.maybe("--classes", train_args.classes, "classes");
      o.maybe("--k", train_args.k, "k");
      o.maybe("--trunk", train_args.trunk, "trunk");
      o.maybe("--head-channels", train_args.head_channels, "head_channels");
      o.maybe("--proto-stride", train_args.proto_stride, "proto_stride");
      o.maybe("--mode", train_args.mode, "mode");
      return run_train_toy(train_args);
    }
    if (infer_cmd->parsed()) {
      Overlay o(infer_cmd, infer_config);
      o.maybe("--score-thr", infer_args.score_thr, "score_thr");
      o.maybe("--nms-iou", infer_args.nms_iou, "nms_iou");
      o.maybe("--top", infer_args.top, "top");
      o.maybe("--mask-thr", infer_args.mask_thr, "mask_thr");
      o.maybe("--jobs", infer_args.jobs, "jobs");
      return run_infer(infer_args);
    }
    if (eval_cmd->parsed()) {
      Overlay o(eval_cmd, eval_config);
      o.maybe("--kind", eval_args.kind, "kind");
      o.maybe("--max-dets", eval_args.max_dets, "max_dets");
      o.maybe("--small-max", eval_args.small_max, "small_max");
      o.maybe("--medium-max", eval_args.medium_max, "medium_max");
      o.maybe("--jobs", eval_args.jobs, "jobs");
      return run_eval(eval_args);
    }
    if (render_cmd->parsed()) return run_render(render_args);
    report_error("usage", "no subcommand given", json_errors);
    return 1;
  } catch (const sais::InternalError& e) {
    report_error(e.kind(), e.what(), json_errors);
    return 2;
  } catch (const sais::Error& e) {
    report_error(e.kind(), e.what(), json_errors);
    return error_exit_code(e);
  } catch (const std::exception& e) {
    report_error("internal", e.what(), json_errors);
    return 2;
  }
}
