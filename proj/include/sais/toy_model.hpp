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
// A small fully-convolutional predictor with hand-written forward and
// backward passes: shared trunk, classification/regression branches, a
// coefficient layer fed by the (optionally disabled) sum of both branches,
// and a prototype branch tapped at a finer stride. Every location carries
// c class logits, 1 center logit, 4 regression outputs and k coefficients.
// Gradients are exact reverse-mode derivatives of the training loss,
// verifiable against finite differences.

#ifndef SAIS_TOY_MODEL_HPP_
#define SAIS_TOY_MODEL_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include "sais/assignment.hpp"
#include "sais/core_types.hpp"
#include "sais/mask_assembly.hpp"

namespace sais::toy {

/// Channel-major 3D tensor: v[(ch*h + y)*w + x].
struct Tensor {
  int c = 0;
  int h = 0;
  int w = 0;
  std::vector<double> v;

  static Tensor zeros(int c, int h, int w);
  double* plane(int ch) { return v.data() + static_cast<size_t>(ch) * h * w; }
  const double* plane(int ch) const { return v.data() + static_cast<size_t>(ch) * h * w; }
  double at(int ch, int y, int x) const {
    return v[(static_cast<size_t>(ch) * h + y) * w + x];
  }
  size_t size() const { return v.size(); }
};

/// One named parameter tensor (conv kernel [co,ci,kh,kw] or bias [co]).
struct Param {
  std::string name;
  std::vector<int> shape;
  std::vector<double> v;

  size_t size() const { return v.size(); }
};

struct ModelConfig {
  int class_count = 1;                      // c
  int coeff_channels = 8;                   // k
  std::vector<int> trunk_channels = {8, 16, 16};  // one conv+pool stage each
  int head_channels = 16;
  int head_stride = 8;                      // single head level
  int proto_stride = 4;                     // prototype branch tap
  bool fuse_branches = true;                // coefficient input: cls+reg features
  std::string coeff_activation = "tanh";
  uint64_t seed = 0;
  // Loss term weights and focal parameters.
  double w_cls = 1.0, w_box = 1.0, w_center = 1.0, w_mask = 1.0;
  double focal_alpha = 0.25;
  double focal_gamma = 2.0;

  void validate() const;
};

struct Model {
  ModelConfig config;
  std::vector<Param> params;

  Param& param(const std::string& name);
  const Param& param(const std::string& name) const;
};

/// Raw head grids plus the prototype stack. Regression outputs map to side
/// distances via exp(raw)*stride; coefficients are tanh-activated.
struct HeadOutput {
  int grid_w = 0;
  int grid_h = 0;
  int class_count = 0;
  int coeff_channels = 0;
  int stride = 0;
  Tensor cls_logits;    // (c, gh, gw)
  Tensor center_logit;  // (1, gh, gw)
  Tensor reg_raw;       // (4, gh, gw)
  Tensor coefficients;  // (k, gh, gw), tanh applied
  maskops::PrototypeStack prototypes;

  /// c + 1 + 4 + k
  int per_location_outputs() const;
};

/// Full activation record of one forward pass; backward consumes it.
struct ForwardPass {
  int in_w = 0;
  int in_h = 0;
  Tensor input;
  std::vector<Tensor> trunk_conv;  // pre-activation per stage
  std::vector<Tensor> trunk_act;
  std::vector<Tensor> trunk_pool;
  Tensor cls0_z, cls0_a, cls1_z, cls1_a;
  Tensor reg0_z, reg0_a, reg1_z, reg1_a;
  Tensor coeff_in;   // fused (or classification-only) features
  Tensor coeff_pre;  // before tanh
  Tensor proto0_z, proto0_a;
  Tensor proto_lin;  // (k, ph, pw)
  HeadOutput output;
};

struct LossBreakdown {
  double total = 0.0;
  double cls_focal = 0.0;
  double box_iou_loss = 0.0;
  double center_bce = 0.0;
  double mask_bce = 0.0;
  int positive_count = 0;
};

/// Deterministic He-style init from config.seed; zero biases except the
/// classification output bias at -log((1-pi)/pi), pi = 0.01.
Model init_model(const ModelConfig& config);

/// Image is row-major single-channel, dims divisible by head_stride.
ForwardPass forward(const Model& model, const std::vector<double>& image, int width,
                    int height);

/// The single head level this model trains against: stride = head_stride,
/// range (0, inf).
assign::LevelSpec toy_level_spec(const ModelConfig& config);
assign::LevelTargets toy_targets(const Scene& scene, const ModelConfig& config,
                                 assign::AssignMode mode);

/// Focal classification + IoU-log box + centerness BCE + area-normalized
/// box-cropped mask BCE, each averaged over positives (cls normalized by
/// max(1, positives)).
LossBreakdown compute_loss(const HeadOutput& output, const assign::LevelTargets& targets,
                           const Scene& scene, const ModelConfig& config);

/// Exact reverse-mode gradients of compute_loss().total w.r.t. every
/// parameter, in model.params order.
std::vector<Param> gradients(const Model& model, const std::vector<double>& image, int width,
                             int height, const assign::LevelTargets& targets,
                             const Scene& scene);

struct TrainConfig {
  double lr = 0.01;
  int epochs = 20;
  double momentum = 0.9;
  uint64_t seed = 0;
  assign::AssignMode mode = assign::AssignMode::center;
};

/// Plain SGD with momentum, batch size 1, seeded per-epoch shuffle.
/// Returns per-epoch mean losses. Throws on non-finite loss.
std::vector<LossBreakdown> train(Model& model, const std::vector<Scene>& dataset,
                                 const TrainConfig& config);

struct PredictConfig {
  double score_thr = 0.05;
  double nms_iou = 0.5;
  int top = 100;
  double mask_thr = 0.5;
};

/// Score = class prob * center prob per location; boxes decoded from the
/// exp-mapped distances; greedy per-class NMS; soft masks assembled from
/// the winning locations' coefficients, upsampled and cropped to the
/// predicted box. Sorted by score descending.
std::vector<Detection> predict(const Model& model, const std::vector<double>& image,
                               int width, int height, const PredictConfig& config);

BBox decode_box(double px, double py, const double raw[4], int stride);

/// JSON round-trip at full precision (values as decimal strings).
std::string model_to_json(const Model& model);
Model model_from_json(const std::string& bytes);

/// CSV: epoch, mean_total, mean_cls, mean_box, mean_center, mean_mask
std::string curve_to_csv(const std::vector<LossBreakdown>& curve);

}  // namespace sais::toy

#endif  // SAIS_TOY_MODEL_HPP_
