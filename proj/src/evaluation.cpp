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

#include "sais/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include <json.hpp>

#include "sais/error.hpp"
#include "sais/mask_assembly.hpp"
#include "sais/parallel.hpp"

namespace sais::eval {

using nlohmann::json;

Kind kind_from_string(const std::string& s) {
  if (s == "box" || s == "bbox") return Kind::box;
  if (s == "mask" || s == "segm") return Kind::mask;
  throw ConfigError("unknown evaluation kind '" + s + "' (expected box|mask)");
}

std::string to_string(Kind kind) { return kind == Kind::box ? "box" : "mask"; }

EvalConfig EvalConfig::defaults(Kind kind) {
  EvalConfig c;
  c.kind = kind;
  c.iou_thresholds.clear();
  for (int i = 0; i < 10; ++i) c.iou_thresholds.push_back(0.5 + 0.05 * i);
  return c;
}

void EvalConfig::validate() const {
  if (iou_thresholds.empty()) throw ConfigError("eval: at least one IoU threshold required");
  for (size_t i = 0; i < iou_thresholds.size(); ++i) {
    if (!(iou_thresholds[i] > 0.0 && iou_thresholds[i] < 1.0)) {
      throw ConfigError("eval: IoU thresholds must lie in (0,1)");
    }
    if (i > 0 && !(iou_thresholds[i] > iou_thresholds[i - 1])) {
      throw ConfigError("eval: IoU thresholds must be strictly increasing");
    }
  }
  if (!(small_max > 0.0 && medium_max > small_max)) {
    throw ConfigError("eval: size bucket edges must satisfy 0 < small < medium");
  }
  if (max_dets < 1) throw ConfigError("eval: max_dets must be >= 1");
  if (!(mask_threshold > 0.0 && mask_threshold < 1.0)) {
    throw ConfigError("eval: mask threshold must lie in (0,1)");
  }
}

namespace {

double detection_iou(const Detection& det, const InstanceAnnotation& gt, Kind kind,
                     double mask_threshold) {
  if (kind == Kind::box) return box_iou(det.box, gt.box);
  if (!det.mask.has_value()) {
    throw ValidationError("mask evaluation requires a mask on every detection");
  }
  return mask_iou(maskops::binarize(*det.mask, mask_threshold), gt.mask);
}

}  // namespace

MatchResult match_detections(const std::vector<Detection>& dets,
                             const std::vector<InstanceAnnotation>& gts, double iou_thr,
                             Kind kind) {
  std::vector<size_t> order(dets.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&dets](size_t a, size_t b) { return dets[a].score > dets[b].score; });

  MatchResult result;
  result.det_is_tp.assign(dets.size(), 0);
  result.det_matched_gt.assign(dets.size(), -1);
  result.gt_matched.assign(gts.size(), 0);
  for (size_t oi : order) {
    const Detection& det = dets[oi];
    int best_gt = -1;
    double best_iou = -1.0;
    for (size_t g = 0; g < gts.size(); ++g) {
      if (result.gt_matched[g] || gts[g].class_id != det.class_id) continue;
      const double iou = detection_iou(det, gts[g], kind, 0.5);
      if (iou >= iou_thr && iou > best_iou) {
        best_iou = iou;
        best_gt = static_cast<int>(g);
      }
    }
    if (best_gt >= 0) {
      result.det_is_tp[oi] = 1;
      result.det_matched_gt[oi] = best_gt;
      result.gt_matched[best_gt] = 1;
    }
  }
  return result;
}

std::optional<double> average_precision(const std::vector<uint8_t>& tp_flags, size_t num_gt) {
  if (num_gt == 0) return std::nullopt;
  const size_t n = tp_flags.size();
  std::vector<double> recall(n);
  std::vector<double> precision(n);
  size_t tp = 0;
  for (size_t i = 0; i < n; ++i) {
    tp += tp_flags[i] ? 1 : 0;
    recall[i] = static_cast<double>(tp) / static_cast<double>(num_gt);
    precision[i] = static_cast<double>(tp) / static_cast<double>(i + 1);
  }
  for (size_t i = n; i-- > 1;) {
    precision[i - 1] = std::max(precision[i - 1], precision[i]);
  }
  double sum = 0.0;
  for (int j = 0; j <= 100; ++j) {
    const double r = static_cast<double>(j) / 100.0;
    const auto it = std::lower_bound(recall.begin(), recall.end(), r);
    if (it != recall.end()) sum += precision[static_cast<size_t>(it - recall.begin())];
  }
  return sum / 101.0;
}

namespace {

enum class Bucket { all, small, medium, large };

bool in_bucket(double measure, Bucket bucket, const EvalConfig& cfg) {
  switch (bucket) {
    case Bucket::all:
      return true;
    case Bucket::small:
      return measure < cfg.small_max;
    case Bucket::medium:
      return measure >= cfg.small_max && measure < cfg.medium_max;
    case Bucket::large:
      return measure >= cfg.medium_max;
  }
  return false;
}

// Per (scene, class) working set: detections already score-sorted and
// truncated, IoUs precomputed against every same-class GT.
struct Cell {
  std::vector<double> scores;
  std::vector<int64_t> global_order;       // insertion index for tie-breaks
  std::vector<double> det_measure;
  std::vector<double> gt_measure;
  std::vector<std::vector<double>> iou;    // [det][gt]
};

struct ApEntry {
  double score;
  int64_t order;
  uint8_t tp;
};

std::optional<double> bucket_class_ap(const std::vector<const Cell*>& cells, double thr,
                                      Bucket bucket, const EvalConfig& cfg) {
  size_t num_gt = 0;
  std::vector<ApEntry> entries;
  for (const Cell* cell : cells) {
    const size_t ng = cell->gt_measure.size();
    std::vector<uint8_t> gt_matched(ng, 0);
    std::vector<uint8_t> gt_in(ng, 0);
    for (size_t g = 0; g < ng; ++g) {
      gt_in[g] = in_bucket(cell->gt_measure[g], bucket, cfg) ? 1 : 0;
      num_gt += gt_in[g];
    }
    for (size_t d = 0; d < cell->scores.size(); ++d) {
      int best_gt = -1;
      double best_iou = -1.0;
      for (size_t g = 0; g < ng; ++g) {  // in-bucket GTs first
        if (gt_matched[g] || !gt_in[g]) continue;
        const double iou = cell->iou[d][g];
        if (iou >= thr && iou > best_iou) {
          best_iou = iou;
          best_gt = static_cast<int>(g);
        }
      }
      if (best_gt >= 0) {
        gt_matched[best_gt] = 1;
        entries.push_back({cell->scores[d], cell->global_order[d], 1});
        continue;
      }
      for (size_t g = 0; g < ng; ++g) {  // out-of-bucket GTs absorb, not score
        if (gt_matched[g] || gt_in[g]) continue;
        const double iou = cell->iou[d][g];
        if (iou >= thr && iou > best_iou) {
          best_iou = iou;
          best_gt = static_cast<int>(g);
        }
      }
      if (best_gt >= 0) {
        gt_matched[best_gt] = 1;  // matched out-of-bucket: ignored entirely
        continue;
      }
      if (in_bucket(cell->det_measure[d], bucket, cfg)) {
        entries.push_back({cell->scores[d], cell->global_order[d], 0});
      }
    }
  }
  std::sort(entries.begin(), entries.end(), [](const ApEntry& a, const ApEntry& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.order < b.order;
  });
  std::vector<uint8_t> flags(entries.size());
  for (size_t i = 0; i < entries.size(); ++i) flags[i] = entries[i].tp;
  return average_precision(flags, num_gt);
}

std::optional<double> mean(const std::vector<double>& v) {
  if (v.empty()) return std::nullopt;
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

}  // namespace

namespace {

// All cells of one scene, keyed by class. global_order is assigned later,
// sequentially in scene-id order, so results do not depend on how many
// threads built the cells.
std::map<int, Cell> build_scene_cells(const Scene& scene, const std::vector<Detection>& dets,
                                      const EvalConfig& config) {
  std::map<int, std::vector<size_t>> det_idx_by_class;
  for (size_t i = 0; i < dets.size(); ++i) {
    if (dets[i].score < 0.0 || dets[i].score > 1.0) {
      throw ValidationError("detection score outside [0,1] in scene '" + scene.id + "'");
    }
    det_idx_by_class[dets[i].class_id].push_back(i);
  }
  std::map<int, std::vector<size_t>> gt_idx_by_class;
  for (size_t g = 0; g < scene.instances.size(); ++g) {
    gt_idx_by_class[scene.instances[g].class_id].push_back(g);
  }

  std::set<int> scene_classes;
  for (const auto& [c, v] : det_idx_by_class) {
    (void)v;
    scene_classes.insert(c);
  }
  for (const auto& [c, v] : gt_idx_by_class) {
    (void)v;
    scene_classes.insert(c);
  }

  std::map<int, Cell> cells;
  for (int c : scene_classes) {
    Cell cell;
    auto dit = det_idx_by_class.find(c);
    if (dit != det_idx_by_class.end()) {
      std::vector<size_t> order = dit->second;
      std::stable_sort(order.begin(), order.end(), [&dets](size_t a, size_t b) {
        return dets[a].score > dets[b].score;
      });
      if (order.size() > static_cast<size_t>(config.max_dets)) {
        order.resize(static_cast<size_t>(config.max_dets));
      }
      for (size_t i : order) {
        cell.scores.push_back(dets[i].score);
        if (config.kind == Kind::box) {
          cell.det_measure.push_back(box_area(dets[i].box));
        } else {
          if (!dets[i].mask.has_value()) {
            throw ValidationError("mask evaluation requires a mask on every detection");
          }
          cell.det_measure.push_back(static_cast<double>(
              maskops::binarize(*dets[i].mask, config.mask_threshold).count_on()));
        }
      }
      auto git = gt_idx_by_class.find(c);
      const std::vector<size_t>* gt_ids = git == gt_idx_by_class.end() ? nullptr : &git->second;
      for (size_t i : order) {
        std::vector<double> row;
        if (gt_ids != nullptr) {
          row.reserve(gt_ids->size());
          for (size_t g : *gt_ids) {
            row.push_back(
                detection_iou(dets[i], scene.instances[g], config.kind, config.mask_threshold));
          }
        }
        cell.iou.push_back(std::move(row));
      }
    }
    auto git = gt_idx_by_class.find(c);
    if (git != gt_idx_by_class.end()) {
      for (size_t g : git->second) {
        const InstanceAnnotation& inst = scene.instances[g];
        cell.gt_measure.push_back(config.kind == Kind::box
                                      ? inst.area
                                      : static_cast<double>(inst.mask.count_on()));
      }
    }
    cells.emplace(c, std::move(cell));
  }
  return cells;
}

}  // namespace

EvalReport evaluate(const std::map<std::string, std::vector<Detection>>& preds,
                    const std::vector<Scene>& scenes, const EvalConfig& config, int jobs) {
  config.validate();
  std::map<std::string, const Scene*> by_id;
  for (const Scene& scene : scenes) {
    if (!by_id.emplace(scene.id, &scene).second) {
      throw ValidationError("duplicate scene id '" + scene.id + "'");
    }
  }
  for (const auto& [id, dets] : preds) {
    (void)dets;
    if (by_id.find(id) == by_id.end()) {
      throw ValidationError("predictions reference unknown scene id '" + id + "'");
    }
  }

  std::set<int> classes;
  for (const Scene& scene : scenes) {
    for (const InstanceAnnotation& inst : scene.instances) classes.insert(inst.class_id);
  }

  std::vector<const Scene*> ordered;
  ordered.reserve(by_id.size());
  for (const auto& [id, scene_ptr] : by_id) {
    (void)id;
    ordered.push_back(scene_ptr);
  }
  static const std::vector<Detection> kNoDets;
  std::vector<std::map<int, Cell>> scene_cells(ordered.size());
  parallel_for(ordered.size(), jobs, [&](size_t i) {
    const auto pit = preds.find(ordered[i]->id);
    scene_cells[i] =
        build_scene_cells(*ordered[i], pit == preds.end() ? kNoDets : pit->second, config);
  });

  // Merge in scene-id order; insertion indices for score-tie breaking are
  // assigned here, independent of scene file order and thread count.
  std::map<int, std::vector<Cell>> cells_by_class;
  int64_t next_order = 0;
  for (std::map<int, Cell>& cells : scene_cells) {
    for (auto& [c, cell] : cells) {
      cell.global_order.resize(cell.scores.size());
      for (size_t d = 0; d < cell.scores.size(); ++d) cell.global_order[d] = next_order++;
      cells_by_class[c].push_back(std::move(cell));
    }
  }

  const auto ap_table = [&](Bucket bucket) {
    // ap[class id] -> per-threshold AP; classes with no in-bucket GT excluded
    std::map<int, std::vector<double>> table;
    for (int c : classes) {
      std::vector<const Cell*> cells;
      for (const Cell& cell : cells_by_class[c]) cells.push_back(&cell);
      std::vector<double> aps;
      bool defined = true;
      for (double thr : config.iou_thresholds) {
        const auto ap = bucket_class_ap(cells, thr, bucket, config);
        if (!ap.has_value()) {
          defined = false;
          break;
        }
        aps.push_back(*ap);
      }
      if (defined) table[c] = std::move(aps);
    }
    return table;
  };

  const auto mean_over_classes_then_thresholds =
      [&](const std::map<int, std::vector<double>>& table) -> std::optional<double> {
    if (table.empty()) return std::nullopt;
    std::vector<double> per_thr;
    for (size_t ti = 0; ti < config.iou_thresholds.size(); ++ti) {
      std::vector<double> vals;
      for (const auto& [c, aps] : table) {
        (void)c;
        vals.push_back(aps[ti]);
      }
      per_thr.push_back(*mean(vals));
    }
    return mean(per_thr);
  };

  EvalReport report;
  const auto all_table = ap_table(Bucket::all);
  report.map = mean_over_classes_then_thresholds(all_table);
  for (const auto& [c, aps] : all_table) {
    report.per_class[c] = *mean(aps);
  }
  const auto fixed_thr = [&](double thr) -> std::optional<double> {
    for (size_t ti = 0; ti < config.iou_thresholds.size(); ++ti) {
      if (std::abs(config.iou_thresholds[ti] - thr) < 1e-9) {
        std::vector<double> vals;
        for (const auto& [c, aps] : all_table) {
          (void)c;
          vals.push_back(aps[ti]);
        }
        return mean(vals);
      }
    }
    return std::nullopt;
  };
  report.ap50 = fixed_thr(0.50);
  report.ap75 = fixed_thr(0.75);
  report.ap_small = mean_over_classes_then_thresholds(ap_table(Bucket::small));
  report.ap_medium = mean_over_classes_then_thresholds(ap_table(Bucket::medium));
  report.ap_large = mean_over_classes_then_thresholds(ap_table(Bucket::large));
  return report;
}

std::map<std::string, std::vector<Detection>> predictions_from_json(
    const std::string& bytes, const std::vector<Scene>& scenes) {
  json doc;
  try {
    doc = json::parse(bytes);
  } catch (const json::parse_error& e) {
    throw ParseError(e.what());
  }
  if (!doc.is_array()) throw ParseError("predictions file: top level must be an array");
  std::map<std::string, const Scene*> by_id;
  for (const Scene& scene : scenes) by_id[scene.id] = &scene;

  std::map<std::string, std::vector<Detection>> preds;
  for (const json& dj : doc) {
    const std::string scene_id = dj.at("scene_id").get<std::string>();
    auto it = by_id.find(scene_id);
    if (it == by_id.end()) {
      throw ValidationError("predictions reference unknown scene id '" + scene_id + "'");
    }
    Detection det;
    det.class_id = dj.at("class_id").get<int>();
    det.score = dj.at("score").get<double>();
    if (det.score < 0.0 || det.score > 1.0) {
      throw ValidationError("detection score outside [0,1]");
    }
    const json& bbox = dj.at("bbox");
    if (!bbox.is_array() || bbox.size() != 4) {
      throw ParseError("prediction bbox must be [x1,y1,x2,y2]");
    }
    det.box = BBox{bbox[0].get<double>(), bbox[1].get<double>(), bbox[2].get<double>(),
                   bbox[3].get<double>()};
    det.box.validate();
    if (dj.contains("rle")) {
      std::vector<int64_t> counts;
      for (const json& c : dj["rle"]) counts.push_back(c.get<int64_t>());
      const BinaryMask m = rle_decode(counts, it->second->width, it->second->height);
      SoftMask soft = SoftMask::filled(m.width, m.height, 0.0);
      for (size_t i = 0; i < m.bits.size(); ++i) soft.values[i] = m.bits[i] ? 1.0 : 0.0;
      det.mask = std::move(soft);
    }
    preds[scene_id].push_back(std::move(det));
  }
  return preds;
}

std::string predictions_to_json(const std::map<std::string, std::vector<Detection>>& preds,
                                double mask_threshold) {
  json arr = json::array();
  for (const auto& [scene_id, dets] : preds) {
    for (const Detection& det : dets) {
      json dj;
      dj["scene_id"] = scene_id;
      dj["class_id"] = det.class_id;
      dj["score"] = det.score;
      dj["bbox"] = {det.box.x1, det.box.y1, det.box.x2, det.box.y2};
      if (det.mask.has_value()) {
        dj["rle"] = rle_encode(maskops::binarize(*det.mask, mask_threshold));
      }
      arr.push_back(std::move(dj));
    }
  }
  return arr.dump();
}

std::string report_to_json(const EvalReport& report, Kind kind) {
  const auto opt = [](const std::optional<double>& v) {
    return v.has_value() ? json(*v) : json();
  };
  json j;
  j["kind"] = to_string(kind);
  j["mAP"] = opt(report.map);
  j["AP50"] = opt(report.ap50);
  j["AP75"] = opt(report.ap75);
  j["APS"] = opt(report.ap_small);
  j["APM"] = opt(report.ap_medium);
  j["APL"] = opt(report.ap_large);
  json per_class = json::object();
  for (const auto& [c, ap] : report.per_class) per_class[std::to_string(c)] = ap;
  j["per_class"] = std::move(per_class);
  return j.dump(2);
}

}  // namespace sais::eval
