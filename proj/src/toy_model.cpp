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

#include "sais/toy_model.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>

#include <json.hpp>

#include "sais/error.hpp"
#include "sais/kernels.hpp"
#include "sais/mathutil.hpp"
#include "sais/rng.hpp"
#include "sais/synth.hpp"

namespace sais::toy {

namespace {

constexpr uint64_t kInitStream = 0x494e495453544d31ULL;
constexpr uint64_t kShuffleStream = 0x53485546464c4531ULL;
constexpr double kClassPrior = 0.01;
constexpr double kBceClamp = 1e-9;
// Decoded side distances are clamped to exp([-12, 30])*stride: the upper cap
// keeps boxes finite, the lower one keeps extents from vanishing under
// floating-point absorption against image-scale coordinates.
constexpr double kDecodeRawMin = -12.0;
constexpr double kDecodeRawCap = 30.0;

bool is_pow2(int v) { return v > 0 && (v & (v - 1)) == 0; }

int log2i(int v) {
  int s = 0;
  while ((1 << s) < v) ++s;
  return s;
}

}  // namespace

Tensor Tensor::zeros(int c, int h, int w) {
  Tensor t;
  t.c = c;
  t.h = h;
  t.w = w;
  t.v.assign(static_cast<size_t>(c) * h * w, 0.0);
  return t;
}

void ModelConfig::validate() const {
  if (class_count < 1) throw ConfigError("model: class_count must be >= 1");
  if (coeff_channels < 1) throw ConfigError("model: coeff_channels must be >= 1");
  if (trunk_channels.empty()) throw ConfigError("model: trunk_channels must be nonempty");
  for (int c : trunk_channels) {
    if (c < 1) throw ConfigError("model: trunk channel counts must be >= 1");
  }
  if (head_channels < 1) throw ConfigError("model: head_channels must be >= 1");
  if (!is_pow2(head_stride) || !is_pow2(proto_stride)) {
    throw ConfigError("model: strides must be powers of two");
  }
  if (proto_stride > head_stride) {
    throw ConfigError("model: proto_stride must be <= head_stride");
  }
  if (proto_stride < 2) throw ConfigError("model: proto_stride must be >= 2");
  if ((1 << trunk_channels.size()) != head_stride) {
    throw ConfigError("model: trunk stage count must equal log2(head_stride)");
  }
  if (coeff_activation != "tanh") {
    throw ConfigError("model: unsupported coefficient activation '" + coeff_activation + "'");
  }
}

Param& Model::param(const std::string& name) {
  for (Param& p : params) {
    if (p.name == name) return p;
  }
  throw InternalError("unknown parameter '" + name + "'");
}

const Param& Model::param(const std::string& name) const {
  for (const Param& p : params) {
    if (p.name == name) return p;
  }
  throw InternalError("unknown parameter '" + name + "'");
}

int HeadOutput::per_location_outputs() const {
  return cls_logits.c + center_logit.c + reg_raw.c + coefficients.c;
}

namespace {

// ---------------------------------------------------------------------------
// Parameter bookkeeping

struct ParamIds {
  // index pairs (weight, bias) into Model::params
  std::vector<std::pair<int, int>> trunk;
  std::pair<int, int> cls0, cls1, reg0, reg1;
  std::pair<int, int> cls_out, ctr_out, reg_out, coeff_out;
  std::pair<int, int> proto0, proto1;
};

Model skeleton(const ModelConfig& config, ParamIds* ids) {
  config.validate();
  Model model;
  model.config = config;
  const auto add = [&model](const std::string& name, std::vector<int> shape) {
    Param p;
    p.name = name;
    size_t n = 1;
    for (int d : shape) n *= static_cast<size_t>(d);
    p.shape = std::move(shape);
    p.v.assign(n, 0.0);
    model.params.push_back(std::move(p));
    return static_cast<int>(model.params.size() - 1);
  };
  const auto add_conv = [&add](const std::string& name, int co, int ci, int kh, int kw) {
    const int w = add(name + ".w", {co, ci, kh, kw});
    const int b = add(name + ".b", {co});
    return std::pair<int, int>{w, b};
  };

  int ci = 1;
  for (size_t i = 0; i < config.trunk_channels.size(); ++i) {
    ids->trunk.push_back(add_conv("trunk" + std::to_string(i), config.trunk_channels[i], ci, 3, 3));
    ci = config.trunk_channels[i];
  }
  const int tc = config.trunk_channels.back();
  const int hc = config.head_channels;
  ids->cls0 = add_conv("cls0", hc, tc, 3, 3);
  ids->cls1 = add_conv("cls1", hc, hc, 3, 3);
  ids->reg0 = add_conv("reg0", hc, tc, 3, 3);
  ids->reg1 = add_conv("reg1", hc, hc, 3, 3);
  ids->cls_out = add_conv("cls_out", config.class_count, hc, 3, 3);
  ids->ctr_out = add_conv("ctr_out", 1, hc, 3, 3);
  ids->reg_out = add_conv("reg_out", 4, hc, 3, 3);
  ids->coeff_out = add_conv("coeff_out", config.coeff_channels, hc, 3, 3);
  const int proto_tap_channels =
      config.trunk_channels[static_cast<size_t>(log2i(config.proto_stride)) - 1];
  ids->proto0 = add_conv("proto0", hc, proto_tap_channels, 3, 3);
  ids->proto1 = add_conv("proto1", config.coeff_channels, hc, 1, 1);
  return model;
}

ParamIds param_ids(const ModelConfig& config) {
  ParamIds ids;
  skeleton(config, &ids);
  return ids;
}

// ---------------------------------------------------------------------------
// Layer primitives (channel-major tensors, kernels for the inner loops)

void conv_forward(const Tensor& in, const Param& w, const Param& b, int kh, int kw,
                  Tensor& out) {
  const int co_n = w.shape[0];
  const int ci_n = w.shape[1];
  out = Tensor::zeros(co_n, in.h, in.w);
  const int H = in.h;
  const int W = in.w;
  for (int co = 0; co < co_n; ++co) {
    double* op = out.plane(co);
    std::fill(op, op + static_cast<size_t>(H) * W, b.v[co]);
    for (int ci = 0; ci < ci_n; ++ci) {
      const double* ip = in.plane(ci);
      for (int ky = 0; ky < kh; ++ky) {
        const int oy_lo = std::max(0, (kh / 2) - ky);
        const int oy_hi = H - std::max(0, ky - (kh / 2));
        for (int kx = 0; kx < kw; ++kx) {
          const double wv =
              w.v[((static_cast<size_t>(co) * ci_n + ci) * kh + ky) * kw + kx];
          if (wv == 0.0) continue;
          const int x_lo = std::max(0, (kw / 2) - kx);
          const int x_hi = W - std::max(0, kx - (kw / 2));
          if (x_hi <= x_lo) continue;
          for (int oy = oy_lo; oy < oy_hi; ++oy) {
            const int iy = oy + ky - (kh / 2);
            kernels::axpy(wv, ip + static_cast<size_t>(iy) * W + (x_lo + kx - (kw / 2)),
                          op + static_cast<size_t>(oy) * W + x_lo,
                          static_cast<size_t>(x_hi - x_lo));
          }
        }
      }
    }
  }
}

void conv_backward(const Tensor& in, const Param& w, int kh, int kw, const Tensor& dout,
                   Tensor* din, std::vector<double>& dw, std::vector<double>& db) {
  const int co_n = w.shape[0];
  const int ci_n = w.shape[1];
  const int H = in.h;
  const int W = in.w;
  if (din != nullptr && din->size() == 0) *din = Tensor::zeros(in.c, in.h, in.w);
  for (int co = 0; co < co_n; ++co) {
    const double* dop = dout.plane(co);
    db[co] += kernels::sum(dop, static_cast<size_t>(H) * W);
    for (int ci = 0; ci < ci_n; ++ci) {
      const double* ip = in.plane(ci);
      double* dip = din != nullptr ? din->plane(ci) : nullptr;
      for (int ky = 0; ky < kh; ++ky) {
        const int oy_lo = std::max(0, (kh / 2) - ky);
        const int oy_hi = H - std::max(0, ky - (kh / 2));
        for (int kx = 0; kx < kw; ++kx) {
          const size_t widx = ((static_cast<size_t>(co) * ci_n + ci) * kh + ky) * kw + kx;
          const double wv = w.v[widx];
          const int x_lo = std::max(0, (kw / 2) - kx);
          const int x_hi = W - std::max(0, kx - (kw / 2));
          if (x_hi <= x_lo) continue;
          const size_t len = static_cast<size_t>(x_hi - x_lo);
          double grad_w = 0.0;
          for (int oy = oy_lo; oy < oy_hi; ++oy) {
            const int iy = oy + ky - (kh / 2);
            const double* in_seg = ip + static_cast<size_t>(iy) * W + (x_lo + kx - (kw / 2));
            const double* dout_seg = dop + static_cast<size_t>(oy) * W + x_lo;
            grad_w += kernels::dot(in_seg, dout_seg, len);
            if (dip != nullptr) {
              kernels::axpy(wv, dout_seg,
                            dip + static_cast<size_t>(iy) * W + (x_lo + kx - (kw / 2)), len);
            }
          }
          dw[widx] += grad_w;
        }
      }
    }
  }
}

Tensor relu(const Tensor& z) {
  Tensor a = z;
  for (double& v : a.v) v = v > 0.0 ? v : 0.0;
  return a;
}

void relu_backward(const Tensor& z, const Tensor& da, Tensor& dz) {
  dz = Tensor::zeros(z.c, z.h, z.w);
  for (size_t i = 0; i < z.v.size(); ++i) dz.v[i] = z.v[i] > 0.0 ? da.v[i] : 0.0;
}

Tensor avgpool2(const Tensor& in) {
  Tensor out = Tensor::zeros(in.c, in.h / 2, in.w / 2);
  for (int c = 0; c < in.c; ++c) {
    const double* ip = in.plane(c);
    double* op = out.plane(c);
    for (int y = 0; y < out.h; ++y) {
      for (int x = 0; x < out.w; ++x) {
        const size_t i0 = static_cast<size_t>(2 * y) * in.w + 2 * x;
        op[static_cast<size_t>(y) * out.w + x] =
            0.25 * (ip[i0] + ip[i0 + 1] + ip[i0 + in.w] + ip[i0 + in.w + 1]);
      }
    }
  }
  return out;
}

void avgpool2_backward(const Tensor& dout, Tensor& din, int in_h, int in_w) {
  din = Tensor::zeros(dout.c, in_h, in_w);
  for (int c = 0; c < dout.c; ++c) {
    const double* dop = dout.plane(c);
    double* dip = din.plane(c);
    for (int y = 0; y < dout.h; ++y) {
      for (int x = 0; x < dout.w; ++x) {
        const double g = 0.25 * dop[static_cast<size_t>(y) * dout.w + x];
        const size_t i0 = static_cast<size_t>(2 * y) * in_w + 2 * x;
        dip[i0] += g;
        dip[i0 + 1] += g;
        dip[i0 + in_w] += g;
        dip[i0 + in_w + 1] += g;
      }
    }
  }
}

}  // namespace

Model init_model(const ModelConfig& config) {
  ParamIds ids;
  Model model = skeleton(config, &ids);
  for (size_t pi = 0; pi < model.params.size(); ++pi) {
    Param& p = model.params[pi];
    if (p.shape.size() != 4) continue;  // biases stay zero
    const int fan_in = p.shape[1] * p.shape[2] * p.shape[3];
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    rng::SplitMix64 gen(rng::derive(config.seed, kInitStream, pi));
    for (double& v : p.v) v = gen.next_uniform(-bound, bound);
  }
  // Rare-positive prior keeps the focal loss from swamping early steps.
  const double bias = -std::log((1.0 - kClassPrior) / kClassPrior);
  for (double& v : model.param("cls_out.b").v) v = bias;
  return model;
}

ForwardPass forward(const Model& model, const std::vector<double>& image, int width,
                    int height) {
  const ModelConfig& cfg = model.config;
  cfg.validate();
  if (width <= 0 || height <= 0 ||
      image.size() != static_cast<size_t>(width) * height) {
    throw ShapeError("forward: image size does not match dimensions");
  }
  if (width % cfg.head_stride != 0 || height % cfg.head_stride != 0) {
    throw ShapeError("forward: image dims must be divisible by head_stride");
  }
  const ParamIds ids = param_ids(cfg);
  const int stages = static_cast<int>(cfg.trunk_channels.size());
  const int tap = log2i(cfg.proto_stride) - 1;

  ForwardPass fp;
  fp.in_w = width;
  fp.in_h = height;
  fp.input = Tensor::zeros(1, height, width);
  fp.input.v = image;

  const Tensor* x = &fp.input;
  for (int i = 0; i < stages; ++i) {
    Tensor z;
    conv_forward(*x, model.params[ids.trunk[i].first], model.params[ids.trunk[i].second], 3, 3,
                 z);
    fp.trunk_conv.push_back(std::move(z));
    fp.trunk_act.push_back(relu(fp.trunk_conv.back()));
    fp.trunk_pool.push_back(avgpool2(fp.trunk_act.back()));
    x = &fp.trunk_pool.back();
  }
  const Tensor& trunk_out = fp.trunk_pool.back();

  conv_forward(trunk_out, model.params[ids.cls0.first], model.params[ids.cls0.second], 3, 3,
               fp.cls0_z);
  fp.cls0_a = relu(fp.cls0_z);
  conv_forward(fp.cls0_a, model.params[ids.cls1.first], model.params[ids.cls1.second], 3, 3,
               fp.cls1_z);
  fp.cls1_a = relu(fp.cls1_z);

  conv_forward(trunk_out, model.params[ids.reg0.first], model.params[ids.reg0.second], 3, 3,
               fp.reg0_z);
  fp.reg0_a = relu(fp.reg0_z);
  conv_forward(fp.reg0_a, model.params[ids.reg1.first], model.params[ids.reg1.second], 3, 3,
               fp.reg1_z);
  fp.reg1_a = relu(fp.reg1_z);

  HeadOutput& out = fp.output;
  out.grid_w = trunk_out.w;
  out.grid_h = trunk_out.h;
  out.class_count = cfg.class_count;
  out.coeff_channels = cfg.coeff_channels;
  out.stride = cfg.head_stride;

  conv_forward(fp.cls1_a, model.params[ids.cls_out.first], model.params[ids.cls_out.second], 3,
               3, out.cls_logits);
  conv_forward(fp.cls1_a, model.params[ids.ctr_out.first], model.params[ids.ctr_out.second], 3,
               3, out.center_logit);
  conv_forward(fp.reg1_a, model.params[ids.reg_out.first], model.params[ids.reg_out.second], 3,
               3, out.reg_raw);

  fp.coeff_in = fp.cls1_a;
  if (cfg.fuse_branches) {
    for (size_t i = 0; i < fp.coeff_in.v.size(); ++i) fp.coeff_in.v[i] += fp.reg1_a.v[i];
  }
  conv_forward(fp.coeff_in, model.params[ids.coeff_out.first],
               model.params[ids.coeff_out.second], 3, 3, fp.coeff_pre);
  out.coefficients = fp.coeff_pre;
  for (double& v : out.coefficients.v) v = std::tanh(v);

  const Tensor& proto_tap = fp.trunk_pool[tap];
  conv_forward(proto_tap, model.params[ids.proto0.first], model.params[ids.proto0.second], 3, 3,
               fp.proto0_z);
  fp.proto0_a = relu(fp.proto0_z);
  conv_forward(fp.proto0_a, model.params[ids.proto1.first], model.params[ids.proto1.second], 1,
               1, fp.proto_lin);

  out.prototypes = maskops::PrototypeStack::zeros(fp.proto_lin.w, fp.proto_lin.h,
                                                  cfg.coeff_channels);
  for (int j = 0; j < cfg.coeff_channels; ++j) {
    const double* p = fp.proto_lin.plane(j);
    for (int y = 0; y < fp.proto_lin.h; ++y) {
      for (int xx = 0; xx < fp.proto_lin.w; ++xx) {
        out.prototypes.set(xx, y, j, p[static_cast<size_t>(y) * fp.proto_lin.w + xx]);
      }
    }
  }
  return fp;
}

assign::LevelSpec toy_level_spec(const ModelConfig& config) {
  assign::LevelSpec spec;
  spec.stride = config.head_stride;
  spec.min_range = 0.0;
  spec.max_range = std::numeric_limits<double>::infinity();
  return spec;
}

assign::LevelTargets toy_targets(const Scene& scene, const ModelConfig& config,
                                 assign::AssignMode mode) {
  assign::TargetMap map = assign::build_targets(scene, {toy_level_spec(config)}, mode);
  return std::move(map.levels[0]);
}

namespace {

struct LossGrad {
  Tensor dcls, dcenter, dreg, dcoeff;  // dcoeff is w.r.t. tanh output
  std::vector<double> dproto;          // PrototypeStack layout
};

LossBreakdown loss_impl(const HeadOutput& out, const assign::LevelTargets& targets,
                        const Scene& scene, const ModelConfig& cfg, LossGrad* grad) {
  if (targets.grid_width != out.grid_w || targets.grid_height != out.grid_h) {
    throw ShapeError("compute_loss: target grid does not match head grid");
  }
  if (out.cls_logits.c != cfg.class_count) {
    throw ShapeError("compute_loss: class channel mismatch");
  }
  const size_t n_loc = static_cast<size_t>(out.grid_w) * out.grid_h;
  LossBreakdown loss;
  for (size_t i = 0; i < n_loc; ++i) loss.positive_count += targets.positive(i) ? 1 : 0;
  const double cls_norm = static_cast<double>(std::max(1, loss.positive_count));
  const double pos_norm = loss.positive_count > 0 ? loss.positive_count : 1.0;

  if (grad != nullptr) {
    grad->dcls = Tensor::zeros(cfg.class_count, out.grid_h, out.grid_w);
    grad->dcenter = Tensor::zeros(1, out.grid_h, out.grid_w);
    grad->dreg = Tensor::zeros(4, out.grid_h, out.grid_w);
    grad->dcoeff = Tensor::zeros(cfg.coeff_channels, out.grid_h, out.grid_w);
    grad->dproto.assign(out.prototypes.values.size(), 0.0);
  }

  // --- focal classification over every location and class --------------
  const double alpha = cfg.focal_alpha;
  const double gamma = cfg.focal_gamma;
  for (int j = 0; j < cfg.class_count; ++j) {
    const double* zs = out.cls_logits.plane(j);
    for (size_t i = 0; i < n_loc; ++i) {
      const double z = zs[i];
      const double p = sigmoid(z);
      const double log_p = -softplus(-z);
      const double log_q = -softplus(z);
      const bool is_pos = targets.class_label[i] == j;
      double term, dz;
      if (is_pos) {
        const double q = 1.0 - p;
        term = -alpha * std::pow(q, gamma) * log_p;
        dz = alpha * std::pow(q, gamma) * (gamma * p * log_p - q);
      } else {
        term = -(1.0 - alpha) * std::pow(p, gamma) * log_q;
        dz = (1.0 - alpha) * std::pow(p, gamma) * (p - gamma * (1.0 - p) * log_q);
      }
      loss.cls_focal += term;
      if (grad != nullptr) {
        grad->dcls.plane(j)[i] = cfg.w_cls * dz / cls_norm;
      }
    }
  }
  loss.cls_focal /= cls_norm;

  // --- per-positive terms ----------------------------------------------
  // Probability grid of one assembled mask, cached per positive location.
  const int pw = out.prototypes.w;
  const int ph = out.prototypes.h;
  const int k = cfg.coeff_channels;
  std::vector<double> coeff(k);
  std::vector<double> logits(static_cast<size_t>(pw) * ph);
  std::vector<double> prob(logits.size());
  std::vector<double> dprob(logits.size());

  for (size_t i = 0; i < n_loc; ++i) {
    if (!targets.positive(i)) continue;
    const int owner = targets.owner[i];
    const InstanceAnnotation& inst = scene.instances[owner];

    // center BCE against the assignment's center score
    {
      const double z = out.center_logit.v[i];
      const double t = targets.center_score[i];
      loss.center_bce += (softplus(z) - z * t) / pos_norm;
      if (grad != nullptr) {
        grad->dcenter.v[i] = cfg.w_center * (sigmoid(z) - t) / pos_norm;
      }
    }

    // IoU loss between the decoded and ground-truth side distances
    {
      double d[4], g[4] = {targets.l[i], targets.t[i], targets.r[i], targets.b[i]};
      for (int s = 0; s < 4; ++s) {
        d[s] = std::exp(out.reg_raw.plane(s)[i]) * cfg.head_stride;
      }
      const double iw = std::min(d[0], g[0]) + std::min(d[2], g[2]);
      const double ih = std::min(d[1], g[1]) + std::min(d[3], g[3]);
      const double inter = iw * ih;
      const double area_d = (d[0] + d[2]) * (d[1] + d[3]);
      const double area_g = (g[0] + g[2]) * (g[1] + g[3]);
      const double uni = area_d + area_g - inter;
      loss.box_iou_loss += (std::log(uni) - std::log(inter)) / pos_norm;
      if (grad != nullptr) {
        const double cross[4] = {ih, iw, ih, iw};
        const double other[4] = {d[1] + d[3], d[0] + d[2], d[1] + d[3], d[0] + d[2]};
        for (int s = 0; s < 4; ++s) {
          const double dI = (d[s] < g[s] ? 1.0 : 0.0) * cross[s];
          const double dA = other[s];
          const double dL = (dA - dI) / uni - dI / inter;
          // chain: dd/draw = d (exp mapping)
          grad->dreg.plane(s)[i] += cfg.w_box * dL * d[s] / pos_norm;
        }
      }
    }

    // mask BCE over pixels inside the GT box, normalized by its area
    {
      for (int j = 0; j < k; ++j) coeff[j] = out.coefficients.plane(j)[i];
      kernels::matvec(out.prototypes.values.data(), logits.size(), k, coeff.data(),
                      logits.data());
      for (size_t pidx = 0; pidx < logits.size(); ++pidx) prob[pidx] = sigmoid(logits[pidx]);
      if (grad != nullptr) std::fill(dprob.begin(), dprob.end(), 0.0);

      const double bx1 = std::max(inst.box.x1, 0.0);
      const double by1 = std::max(inst.box.y1, 0.0);
      const double bx2 = std::min(inst.box.x2, static_cast<double>(scene.width));
      const double by2 = std::min(inst.box.y2, static_cast<double>(scene.height));
      const double inv_area = 1.0 / inst.area;
      const double scale_x = static_cast<double>(pw) / scene.width;
      const double scale_y = static_cast<double>(ph) / scene.height;
      double mask_sum = 0.0;
      for (int y = 0; y < scene.height; ++y) {
        const double cy = y + 0.5;
        if (cy < by1 || cy >= by2) continue;
        double sy = cy * scale_y - 0.5;
        sy = std::clamp(sy, 0.0, static_cast<double>(ph - 1));
        const int y0 = static_cast<int>(std::floor(sy));
        const int y1 = std::min(y0 + 1, ph - 1);
        const double fy = sy - y0;
        for (int x = 0; x < scene.width; ++x) {
          const double cx = x + 0.5;
          if (cx < bx1 || cx >= bx2) continue;
          double sx = cx * scale_x - 0.5;
          sx = std::clamp(sx, 0.0, static_cast<double>(pw - 1));
          const int x0 = static_cast<int>(std::floor(sx));
          const int x1 = std::min(x0 + 1, pw - 1);
          const double fx = sx - x0;
          const double w00 = (1.0 - fx) * (1.0 - fy);
          const double w10 = fx * (1.0 - fy);
          const double w01 = (1.0 - fx) * fy;
          const double w11 = fx * fy;
          const size_t i00 = static_cast<size_t>(y0) * pw + x0;
          const size_t i10 = static_cast<size_t>(y0) * pw + x1;
          const size_t i01 = static_cast<size_t>(y1) * pw + x0;
          const size_t i11 = static_cast<size_t>(y1) * pw + x1;
          const double m = w00 * prob[i00] + w10 * prob[i10] + w01 * prob[i01] +
                           w11 * prob[i11];
          const double t = inst.mask.at(x, y) ? 1.0 : 0.0;
          const double mc = std::clamp(m, kBceClamp, 1.0 - kBceClamp);
          mask_sum += -(t * std::log(mc) + (1.0 - t) * std::log1p(-mc));
          if (grad != nullptr && m > kBceClamp && m < 1.0 - kBceClamp) {
            const double dm = (mc - t) / (mc * (1.0 - mc)) * inv_area / pos_norm *
                              cfg.w_mask;
            dprob[i00] += w00 * dm;
            dprob[i10] += w10 * dm;
            dprob[i01] += w01 * dm;
            dprob[i11] += w11 * dm;
          }
        }
      }
      loss.mask_bce += mask_sum * inv_area / pos_norm;
      if (grad != nullptr) {
        for (size_t pidx = 0; pidx < logits.size(); ++pidx) {
          const double dlogit = dprob[pidx] * prob[pidx] * (1.0 - prob[pidx]);
          if (dlogit == 0.0) continue;
          // d logits = P.C: spread into prototypes and coefficients
          kernels::axpy(dlogit, coeff.data(), grad->dproto.data() + pidx * k,
                        static_cast<size_t>(k));
          const double* row = out.prototypes.values.data() + pidx * k;
          for (int j = 0; j < k; ++j) grad->dcoeff.plane(j)[i] += dlogit * row[j];
        }
      }
    }
  }

  loss.total = cfg.w_cls * loss.cls_focal + cfg.w_box * loss.box_iou_loss +
               cfg.w_center * loss.center_bce + cfg.w_mask * loss.mask_bce;
  return loss;
}

std::vector<Param> zero_like(const Model& model) {
  std::vector<Param> grads = model.params;
  for (Param& g : grads) std::fill(g.v.begin(), g.v.end(), 0.0);
  return grads;
}

std::vector<Param> gradients_impl(const Model& model, const std::vector<double>& image,
                                  int width, int height, const assign::LevelTargets& targets,
                                  const Scene& scene, LossBreakdown* loss_out) {
  const ModelConfig& cfg = model.config;
  const ParamIds ids = param_ids(cfg);
  const ForwardPass fp = forward(model, image, width, height);

  LossGrad lg;
  const LossBreakdown loss = loss_impl(fp.output, targets, scene, cfg, &lg);
  if (loss_out != nullptr) *loss_out = loss;

  std::vector<Param> grads = zero_like(model);
  const auto dw = [&grads](std::pair<int, int> id) -> std::vector<double>& {
    return grads[id.first].v;
  };
  const auto db = [&grads](std::pair<int, int> id) -> std::vector<double>& {
    return grads[id.second].v;
  };
  const auto wparam = [&model](std::pair<int, int> id) -> const Param& {
    return model.params[id.first];
  };

  // head output convs back to branch features
  Tensor d_cls1_a = Tensor::zeros(fp.cls1_a.c, fp.cls1_a.h, fp.cls1_a.w);
  Tensor d_reg1_a = Tensor::zeros(fp.reg1_a.c, fp.reg1_a.h, fp.reg1_a.w);
  conv_backward(fp.cls1_a, wparam(ids.cls_out), 3, 3, lg.dcls, &d_cls1_a, dw(ids.cls_out),
                db(ids.cls_out));
  conv_backward(fp.cls1_a, wparam(ids.ctr_out), 3, 3, lg.dcenter, &d_cls1_a, dw(ids.ctr_out),
                db(ids.ctr_out));
  conv_backward(fp.reg1_a, wparam(ids.reg_out), 3, 3, lg.dreg, &d_reg1_a, dw(ids.reg_out),
                db(ids.reg_out));

  // coefficients: tanh then conv, input may be the fused sum
  Tensor d_coeff_pre = Tensor::zeros(fp.coeff_pre.c, fp.coeff_pre.h, fp.coeff_pre.w);
  for (size_t i = 0; i < d_coeff_pre.v.size(); ++i) {
    const double th = fp.output.coefficients.v[i];
    d_coeff_pre.v[i] = lg.dcoeff.v[i] * (1.0 - th * th);
  }
  Tensor d_coeff_in = Tensor::zeros(fp.coeff_in.c, fp.coeff_in.h, fp.coeff_in.w);
  conv_backward(fp.coeff_in, wparam(ids.coeff_out), 3, 3, d_coeff_pre, &d_coeff_in,
                dw(ids.coeff_out), db(ids.coeff_out));
  for (size_t i = 0; i < d_coeff_in.v.size(); ++i) d_cls1_a.v[i] += d_coeff_in.v[i];
  if (cfg.fuse_branches) {
    for (size_t i = 0; i < d_coeff_in.v.size(); ++i) d_reg1_a.v[i] += d_coeff_in.v[i];
  }

  const Tensor& trunk_out = fp.trunk_pool.back();
  Tensor d_trunk_out = Tensor::zeros(trunk_out.c, trunk_out.h, trunk_out.w);

  // classification branch
  {
    Tensor d_z, d_a0 = Tensor::zeros(fp.cls0_a.c, fp.cls0_a.h, fp.cls0_a.w);
    relu_backward(fp.cls1_z, d_cls1_a, d_z);
    conv_backward(fp.cls0_a, wparam(ids.cls1), 3, 3, d_z, &d_a0, dw(ids.cls1), db(ids.cls1));
    Tensor d_z0;
    relu_backward(fp.cls0_z, d_a0, d_z0);
    conv_backward(trunk_out, wparam(ids.cls0), 3, 3, d_z0, &d_trunk_out, dw(ids.cls0),
                  db(ids.cls0));
  }
  // regression branch
  {
    Tensor d_z, d_a0 = Tensor::zeros(fp.reg0_a.c, fp.reg0_a.h, fp.reg0_a.w);
    relu_backward(fp.reg1_z, d_reg1_a, d_z);
    conv_backward(fp.reg0_a, wparam(ids.reg1), 3, 3, d_z, &d_a0, dw(ids.reg1), db(ids.reg1));
    Tensor d_z0;
    relu_backward(fp.reg0_z, d_a0, d_z0);
    conv_backward(trunk_out, wparam(ids.reg0), 3, 3, d_z0, &d_trunk_out, dw(ids.reg0),
                  db(ids.reg0));
  }

  // prototype branch back to its trunk tap
  const int stages = static_cast<int>(cfg.trunk_channels.size());
  const int tap = log2i(cfg.proto_stride) - 1;
  std::vector<Tensor> d_pool(stages);
  for (int i = 0; i < stages; ++i) {
    d_pool[i] = Tensor::zeros(fp.trunk_pool[i].c, fp.trunk_pool[i].h, fp.trunk_pool[i].w);
  }
  d_pool[stages - 1].v = d_trunk_out.v;
  {
    Tensor d_proto_lin = Tensor::zeros(fp.proto_lin.c, fp.proto_lin.h, fp.proto_lin.w);
    for (int j = 0; j < cfg.coeff_channels; ++j) {
      double* p = d_proto_lin.plane(j);
      for (int y = 0; y < fp.proto_lin.h; ++y) {
        for (int x = 0; x < fp.proto_lin.w; ++x) {
          p[static_cast<size_t>(y) * fp.proto_lin.w + x] =
              lg.dproto[(static_cast<size_t>(y) * fp.proto_lin.w + x) * cfg.coeff_channels + j];
        }
      }
    }
    Tensor d_proto0_a = Tensor::zeros(fp.proto0_a.c, fp.proto0_a.h, fp.proto0_a.w);
    conv_backward(fp.proto0_a, wparam(ids.proto1), 1, 1, d_proto_lin, &d_proto0_a,
                  dw(ids.proto1), db(ids.proto1));
    Tensor d_proto0_z;
    relu_backward(fp.proto0_z, d_proto0_a, d_proto0_z);
    conv_backward(fp.trunk_pool[tap], wparam(ids.proto0), 3, 3, d_proto0_z, &d_pool[tap],
                  dw(ids.proto0), db(ids.proto0));
  }

  // trunk, last stage first
  for (int i = stages - 1; i >= 0; --i) {
    Tensor d_act;
    avgpool2_backward(d_pool[i], d_act, fp.trunk_act[i].h, fp.trunk_act[i].w);
    Tensor d_z;
    relu_backward(fp.trunk_conv[i], d_act, d_z);
    Tensor* din = i > 0 ? &d_pool[i - 1] : nullptr;
    const Tensor& in = i > 0 ? fp.trunk_pool[i - 1] : fp.input;
    conv_backward(in, wparam(ids.trunk[i]), 3, 3, d_z, din, dw(ids.trunk[i]),
                  db(ids.trunk[i]));
  }
  return grads;
}

}  // namespace

LossBreakdown compute_loss(const HeadOutput& output, const assign::LevelTargets& targets,
                           const Scene& scene, const ModelConfig& config) {
  return loss_impl(output, targets, scene, config, nullptr);
}

std::vector<Param> gradients(const Model& model, const std::vector<double>& image, int width,
                             int height, const assign::LevelTargets& targets,
                             const Scene& scene) {
  return gradients_impl(model, image, width, height, targets, scene, nullptr);
}

std::vector<LossBreakdown> train(Model& model, const std::vector<Scene>& dataset,
                                 const TrainConfig& config) {
  if (dataset.empty()) throw ConfigError("train: dataset must be nonempty");
  if (config.epochs < 1) throw ConfigError("train: epochs must be >= 1");

  struct Example {
    const Scene* scene;
    std::vector<double> image;
    assign::LevelTargets targets;
  };
  std::vector<Example> examples;
  examples.reserve(dataset.size());
  for (const Scene& scene : dataset) {
    if (scene.width % model.config.head_stride != 0 ||
        scene.height % model.config.head_stride != 0) {
      throw ShapeError("train: scene '" + scene.id + "' dims not divisible by head stride");
    }
    examples.push_back(
        {&scene, synth::render_image(scene), toy_targets(scene, model.config, config.mode)});
  }

  std::vector<std::vector<double>> velocity;
  velocity.reserve(model.params.size());
  for (const Param& p : model.params) velocity.emplace_back(p.size(), 0.0);

  std::vector<LossBreakdown> curve;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::vector<size_t> order(examples.size());
    std::iota(order.begin(), order.end(), 0);
    rng::SplitMix64 gen(rng::derive(config.seed, kShuffleStream, static_cast<uint64_t>(epoch)));
    for (size_t i = order.size(); i > 1; --i) {
      const size_t j = static_cast<size_t>(gen.next_int(0, static_cast<int64_t>(i) - 1));
      std::swap(order[i - 1], order[j]);
    }

    LossBreakdown mean;
    for (size_t step = 0; step < order.size(); ++step) {
      const Example& ex = examples[order[step]];
      LossBreakdown loss;
      const std::vector<Param> grads =
          gradients_impl(model, ex.image, ex.scene->width, ex.scene->height, ex.targets,
                         *ex.scene, &loss);
      if (!std::isfinite(loss.total)) {
        throw Error("training-diverged",
                    "non-finite loss at epoch " + std::to_string(epoch + 1) + " step " +
                        std::to_string(step + 1) + " (scene '" + ex.scene->id + "')");
      }
      for (size_t pi = 0; pi < model.params.size(); ++pi) {
        double* w = model.params[pi].v.data();
        double* v = velocity[pi].data();
        const double* g = grads[pi].v.data();
        const size_t n = model.params[pi].size();
        for (size_t j = 0; j < n; ++j) {
          v[j] = config.momentum * v[j] - config.lr * g[j];
          w[j] += v[j];
        }
      }
      mean.total += loss.total;
      mean.cls_focal += loss.cls_focal;
      mean.box_iou_loss += loss.box_iou_loss;
      mean.center_bce += loss.center_bce;
      mean.mask_bce += loss.mask_bce;
      mean.positive_count += loss.positive_count;
    }
    const double inv = 1.0 / static_cast<double>(order.size());
    mean.total *= inv;
    mean.cls_focal *= inv;
    mean.box_iou_loss *= inv;
    mean.center_bce *= inv;
    mean.mask_bce *= inv;
    curve.push_back(mean);
  }
  return curve;
}

BBox decode_box(double px, double py, const double raw[4], int stride) {
  double d[4];
  for (int s = 0; s < 4; ++s) {
    d[s] = std::exp(std::clamp(raw[s], kDecodeRawMin, kDecodeRawCap)) * stride;
  }
  return BBox{px - d[0], py - d[1], px + d[2], py + d[3]};
}

std::vector<Detection> predict(const Model& model, const std::vector<double>& image,
                               int width, int height, const PredictConfig& config) {
  const ForwardPass fp = forward(model, image, width, height);
  const HeadOutput& out = fp.output;
  const int stride = model.config.head_stride;

  struct Candidate {
    int class_id;
    double score;
    BBox box;
    size_t loc;
  };
  std::vector<Candidate> candidates;
  const size_t n_loc = static_cast<size_t>(out.grid_w) * out.grid_h;
  for (size_t i = 0; i < n_loc; ++i) {
    const double center_p = sigmoid(out.center_logit.v[i]);
    const int row = static_cast<int>(i) / out.grid_w;
    const int col = static_cast<int>(i) % out.grid_w;
    const double px = stride / 2.0 + static_cast<double>(col) * stride;
    const double py = stride / 2.0 + static_cast<double>(row) * stride;
    double raw[4];
    for (int s = 0; s < 4; ++s) raw[s] = out.reg_raw.plane(s)[i];
    for (int j = 0; j < out.class_count; ++j) {
      const double score = sigmoid(out.cls_logits.plane(j)[i]) * center_p;
      if (score < config.score_thr) continue;
      candidates.push_back({j, score, decode_box(px, py, raw, stride), i});
    }
  }
  std::stable_sort(candidates.begin(), candidates.end(),
                   [](const Candidate& a, const Candidate& b) { return a.score > b.score; });

  std::vector<Candidate> kept;
  for (const Candidate& cand : candidates) {
    bool suppressed = false;
    for (const Candidate& k : kept) {
      if (k.class_id == cand.class_id && box_iou(k.box, cand.box) > config.nms_iou) {
        suppressed = true;
        break;
      }
    }
    if (!suppressed) {
      kept.push_back(cand);
      if (static_cast<int>(kept.size()) >= config.top) break;
    }
  }

  std::vector<Detection> detections;
  detections.reserve(kept.size());
  std::vector<double> coeff(model.config.coeff_channels);
  for (const Candidate& cand : kept) {
    Detection det;
    det.class_id = cand.class_id;
    det.score = cand.score;
    det.box = cand.box;
    for (int j = 0; j < model.config.coeff_channels; ++j) {
      coeff[j] = out.coefficients.plane(j)[cand.loc];
    }
    maskops::CoefficientVector cv;
    cv.values = coeff;
    const SoftMask assembled = maskops::assemble(out.prototypes, cv);
    const SoftMask full = maskops::upsample_bilinear(assembled, width, height);
    det.mask = maskops::crop_to_box(full, cand.box);
    detections.push_back(std::move(det));
  }
  return detections;
}

namespace {

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

std::string model_to_json(const Model& model) {
  nlohmann::ordered_json j;
  j["format"] = "sais-toy-model";
  j["version"] = 1;
  nlohmann::ordered_json cj;
  const ModelConfig& c = model.config;
  cj["class_count"] = c.class_count;
  cj["coeff_channels"] = c.coeff_channels;
  cj["trunk_channels"] = c.trunk_channels;
  cj["head_channels"] = c.head_channels;
  cj["head_stride"] = c.head_stride;
  cj["proto_stride"] = c.proto_stride;
  cj["fuse_branches"] = c.fuse_branches;
  cj["coeff_activation"] = c.coeff_activation;
  cj["seed"] = c.seed;
  cj["w_cls"] = c.w_cls;
  cj["w_box"] = c.w_box;
  cj["w_center"] = c.w_center;
  cj["w_mask"] = c.w_mask;
  cj["focal_alpha"] = c.focal_alpha;
  cj["focal_gamma"] = c.focal_gamma;
  j["config"] = std::move(cj);
  nlohmann::ordered_json params = nlohmann::ordered_json::object();
  for (const Param& p : model.params) {
    nlohmann::ordered_json pj;
    pj["shape"] = p.shape;
    nlohmann::ordered_json values = nlohmann::ordered_json::array();
    for (double v : p.v) values.push_back(format_double(v));
    pj["values"] = std::move(values);
    params[p.name] = std::move(pj);
  }
  j["parameters"] = std::move(params);
  return j.dump();
}

Model model_from_json(const std::string& bytes) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(bytes);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(e.what());
  }
  if (j.value("format", "") != "sais-toy-model" || j.value("version", 0) != 1) {
    throw ValidationError("model file: unknown format or version");
  }
  const nlohmann::json& cj = j.at("config");
  ModelConfig c;
  c.class_count = cj.at("class_count").get<int>();
  c.coeff_channels = cj.at("coeff_channels").get<int>();
  c.trunk_channels = cj.at("trunk_channels").get<std::vector<int>>();
  c.head_channels = cj.at("head_channels").get<int>();
  c.head_stride = cj.at("head_stride").get<int>();
  c.proto_stride = cj.at("proto_stride").get<int>();
  c.fuse_branches = cj.at("fuse_branches").get<bool>();
  c.coeff_activation = cj.at("coeff_activation").get<std::string>();
  c.seed = cj.at("seed").get<uint64_t>();
  c.w_cls = cj.at("w_cls").get<double>();
  c.w_box = cj.at("w_box").get<double>();
  c.w_center = cj.at("w_center").get<double>();
  c.w_mask = cj.at("w_mask").get<double>();
  c.focal_alpha = cj.at("focal_alpha").get<double>();
  c.focal_gamma = cj.at("focal_gamma").get<double>();

  ParamIds ids;
  Model model = skeleton(c, &ids);
  const nlohmann::json& params = j.at("parameters");
  if (params.size() != model.params.size()) {
    throw ValidationError("model file: parameter count mismatch");
  }
  for (Param& p : model.params) {
    auto it = params.find(p.name);
    if (it == params.end()) {
      throw ValidationError("model file: missing parameter '" + p.name + "'");
    }
    if (it->at("shape").get<std::vector<int>>() != p.shape) {
      throw ValidationError("model file: parameter '" + p.name + "' shape mismatch");
    }
    const nlohmann::json& values = it->at("values");
    if (values.size() != p.size()) {
      throw ValidationError("model file: parameter '" + p.name + "' value count mismatch");
    }
    for (size_t vi = 0; vi < p.size(); ++vi) {
      p.v[vi] = std::strtod(values[vi].get<std::string>().c_str(), nullptr);
    }
  }
  return model;
}

std::string curve_to_csv(const std::vector<LossBreakdown>& curve) {
  std::string out = "epoch,mean_total,mean_cls_focal,mean_box_iou,mean_center_bce,mean_mask_bce\n";
  for (size_t i = 0; i < curve.size(); ++i) {
    char buf[192];
    std::snprintf(buf, sizeof(buf), "%zu,%.12g,%.12g,%.12g,%.12g,%.12g\n", i + 1,
                  curve[i].total, curve[i].cls_focal, curve[i].box_iou_loss,
                  curve[i].center_bce, curve[i].mask_bce);
    out += buf;
  }
  return out;
}

}  // namespace sais::toy
