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
// COCO-style detection/instance-segmentation metrics: greedy score-ordered
// matching, 101-point interpolated AP, mAP over IoU thresholds 0.50:0.05:0.95,
// and size-bucketed AP. Deterministic: scenes are processed in id order and
// score ties break by insertion index.

#ifndef SAIS_EVALUATION_HPP_
#define SAIS_EVALUATION_HPP_

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "sais/core_types.hpp"

namespace sais::eval {

enum class Kind { box, mask };

Kind kind_from_string(const std::string& s);
std::string to_string(Kind kind);

struct EvalConfig {
  std::vector<double> iou_thresholds;  // strictly increasing, in (0,1)
  Kind kind = Kind::box;
  // Size buckets on GT mask area (mask kind) or box area (box kind):
  // small < small_max, medium < medium_max, large otherwise.
  double small_max = 32.0 * 32.0;
  double medium_max = 96.0 * 96.0;
  int max_dets = 100;                   // per scene per class
  double mask_threshold = 0.5;          // soft-mask binarization for matching

  static EvalConfig defaults(Kind kind);
  void validate() const;
};

/// AP values are absent when the corresponding bucket has no ground truth
/// anywhere (never reported as 0).
struct EvalReport {
  std::optional<double> map;        // mean over classes then thresholds
  std::optional<double> ap50;
  std::optional<double> ap75;
  std::optional<double> ap_small;
  std::optional<double> ap_medium;
  std::optional<double> ap_large;
  std::map<int, double> per_class;  // all-sizes AP per class, mean over thresholds
};

struct MatchResult {
  // Flags are indexed in the input detection order.
  std::vector<uint8_t> det_is_tp;
  std::vector<int> det_matched_gt;  // GT index or -1
  std::vector<uint8_t> gt_matched;
};

/// Greedy one-to-one matching: detections in score order (ties by input
/// index) each take the unmatched same-class GT with the highest IoU when
/// that IoU >= iou_thr; IoU ties by GT index. Mask kind compares masks
/// binarized at 0.5; missing masks are an input error.
MatchResult match_detections(const std::vector<Detection>& dets,
                             const std::vector<InstanceAnnotation>& gts, double iou_thr,
                             Kind kind);

/// 101-point interpolated AP over a TP/FP sequence already ordered by
/// descending score. Empty optional when num_gt == 0.
std::optional<double> average_precision(const std::vector<uint8_t>& tp_flags, size_t num_gt);

/// Full COCO-style evaluation. Every prediction key must name an existing
/// scene (ValidationError otherwise). `jobs` parallelizes per-scene IoU
/// computation; the report is identical for any value.
EvalReport evaluate(const std::map<std::string, std::vector<Detection>>& preds,
                    const std::vector<Scene>& scenes, const EvalConfig& config, int jobs = 1);

/// Predictions file: JSON list of
/// {scene_id, class_id, score, bbox:[x1,y1,x2,y2], rle (optional)}.
std::map<std::string, std::vector<Detection>> predictions_from_json(
    const std::string& bytes, const std::vector<Scene>& scenes);

std::string predictions_to_json(const std::map<std::string, std::vector<Detection>>& preds,
                                double mask_threshold = 0.5);

std::string report_to_json(const EvalReport& report, Kind kind);

}  // namespace sais::eval

#endif  // SAIS_EVALUATION_HPP_
