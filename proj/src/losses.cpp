#include "boostdet/losses.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "boostdet/errors.hpp"

namespace boostdet {

void FocalConfig::validate() const {
  if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("focal.alpha must be in (0,1)");
  if (gamma < 0.0) throw ConfigError("focal.gamma must be >= 0");
}

void FiouConfig::validate() const {
  if (eta < 0.0) throw ConfigError("fiou.eta must be >= 0");
}

void LossWeights::validate() const {
  if (obj_rpn < 0.0 || loc_rpn < 0.0 || iou_rpn < 0.0 || reg < 0.0 || cls < 0.0) {
    throw ConfigError("loss weights must be non-negative");
  }
}

namespace {

double clamp_prob(double p) {
  return std::clamp(p, kProbEpsilon, 1.0 - kProbEpsilon);
}

}  // namespace

ScalarLoss focal_loss(double p_hat, int y, const FocalConfig& cfg) {
  cfg.validate();
  if (y != 0 && y != 1) throw InputError("focal_loss: label must be 0 or 1");
  const double p = clamp_prob(p_hat);
  ScalarLoss out;
  if (y == 1) {
    const double q = 1.0 - p;
    const double modulator = std::pow(q, cfg.gamma);
    out.value = -cfg.alpha * modulator * std::log(p);
    out.grad = -cfg.alpha * modulator / p;
    if (cfg.gamma > 0.0) {
      out.grad += cfg.alpha * cfg.gamma * std::pow(q, cfg.gamma - 1.0) * std::log(p);
    }
  } else {
    const double modulator = std::pow(p, cfg.gamma);
    out.value = -(1.0 - cfg.alpha) * modulator * std::log(1.0 - p);
    out.grad = (1.0 - cfg.alpha) * modulator / (1.0 - p);
    if (cfg.gamma > 0.0) {
      out.grad -= (1.0 - cfg.alpha) * cfg.gamma * std::pow(p, cfg.gamma - 1.0) * std::log(1.0 - p);
    }
  }
  return out;
}

VectorLoss objectness_loss(const std::vector<double>& p_hats,
                           const std::vector<int>& labels, const FocalConfig& cfg,
                           ObjectnessNormalization norm) {
  if (p_hats.size() != labels.size()) {
    throw InputError("objectness_loss: scores and labels must have equal length");
  }
  VectorLoss out;
  out.grads.assign(p_hats.size(), 0.0);
  if (p_hats.empty()) return out;  // empty scene

  double denom = static_cast<double>(p_hats.size());
  if (norm == ObjectnessNormalization::positives) {
    std::size_t positives = 0;
    for (int y : labels) {
      if (y == 1) ++positives;
    }
    denom = static_cast<double>(std::max<std::size_t>(positives, 1));
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < p_hats.size(); ++i) {
    const ScalarLoss l = focal_loss(p_hats[i], labels[i], cfg);
    sum += l.value;
    out.grads[i] = l.grad / denom;
  }
  out.value = sum / denom;
  return out;
}

namespace {

// Shared body of the IoU losses: value and gradient at a decoded box, the
// gradient expressed against the raw predicted encoding. `tw_active` /
// `th_active` are false when decode clamped the coordinate.
BoxDeltaLoss improved_iou_loss_impl(const Delta& raw_delta, const Box& gt,
                                    const Box& reference) {
  const Box pred = decode(raw_delta, reference);
  const Delta t_hat{raw_delta.tx, raw_delta.ty,
                    std::clamp(raw_delta.tw, -kDeltaClamp, kDeltaClamp),
                    std::clamp(raw_delta.th, -kDeltaClamp, kDeltaClamp)};
  const bool tw_active = std::fabs(raw_delta.tw) <= kDeltaClamp;
  const bool th_active = std::fabs(raw_delta.th) <= kDeltaClamp;
  const Delta t_star = encode(gt, reference);

  const double g = iou(pred, gt);
  const std::array<double, 4> dg = iou_grad(pred, gt);

  const double dx = t_hat.tx - t_star.tx;
  const double dy = t_hat.ty - t_star.ty;
  const double dw = t_hat.tw - t_star.tw;
  const double dh = t_hat.th - t_star.th;

  BoxDeltaLoss out;
  out.value = 1.0 - g + dx * dx + dy * dy + dw * dw + dh * dh;

  // delta -> corner Jacobian: cx = tx*rw + rcx, w = rw*exp(tw)
  const double rw = reference.width();
  const double rh = reference.height();
  const double pw = pred.width();
  const double ph = pred.height();
  const double dg_dtx = rw * (dg[0] + dg[2]);
  const double dg_dty = rh * (dg[1] + dg[3]);
  const double dg_dtw = 0.5 * pw * (dg[2] - dg[0]);
  const double dg_dth = 0.5 * ph * (dg[3] - dg[1]);

  out.grad.tx = -dg_dtx + 2.0 * dx;
  out.grad.ty = -dg_dty + 2.0 * dy;
  out.grad.tw = tw_active ? (-dg_dtw + 2.0 * dw) : 0.0;
  out.grad.th = th_active ? (-dg_dth + 2.0 * dh) : 0.0;
  return out;
}

}  // namespace

BoxDeltaLoss improved_iou_loss(const Delta& pred_delta, const Box& gt, const Box& reference) {
  return improved_iou_loss_impl(pred_delta, gt, reference);
}

BoxDeltaLoss improved_iou_loss(const Box& pred, const Box& gt, const Box& reference) {
  return improved_iou_loss_impl(encode(pred, reference), gt, reference);
}

namespace {

BoxDeltaLoss apply_iou_weight(BoxDeltaLoss base, double g, double eta) {
  if (eta == 0.0) return base;  // weight is exactly 1
  const double weight = std::pow(g, eta);
  base.value *= weight;
  base.grad.tx *= weight;
  base.grad.ty *= weight;
  base.grad.tw *= weight;
  base.grad.th *= weight;
  return base;
}

}  // namespace

BoxDeltaLoss fast_iou_loss(const Delta& pred_delta, const Box& gt, const Box& reference,
                           const FiouConfig& cfg) {
  cfg.validate();
  const BoxDeltaLoss base = improved_iou_loss_impl(pred_delta, gt, reference);
  const double g = iou(decode(pred_delta, reference), gt);
  return apply_iou_weight(base, g, cfg.eta);
}

BoxDeltaLoss fast_iou_loss(const Box& pred, const Box& gt, const Box& reference,
                           const FiouConfig& cfg) {
  cfg.validate();
  const BoxDeltaLoss base = improved_iou_loss(pred, gt, reference);
  return apply_iou_weight(base, iou(pred, gt), cfg.eta);
}

BoxDeltaBatchLoss loc_loss(const std::vector<LocSample>& positives, const FiouConfig& cfg) {
  BoxDeltaBatchLoss out;
  out.grads.assign(positives.size(), Delta{});
  if (positives.empty()) return out;
  const double inv_m = 1.0 / static_cast<double>(positives.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < positives.size(); ++i) {
    const BoxDeltaLoss l =
        fast_iou_loss(positives[i].pred_delta, positives[i].gt, positives[i].reference, cfg);
    sum += l.value;
    out.grads[i].tx = l.grad.tx * inv_m;
    out.grads[i].ty = l.grad.ty * inv_m;
    out.grads[i].tw = l.grad.tw * inv_m;
    out.grads[i].th = l.grad.th * inv_m;
  }
  out.value = sum * inv_m;
  return out;
}

ScalarLoss iou_pred_loss(double g_hat, double g_target) {
  if (g_target < 0.0 || g_target > 1.0) {
    throw InputError("iou_pred_loss: target must lie in [0,1]");
  }
  const double p = clamp_prob(g_hat);
  ScalarLoss out;
  out.value = -(g_target * std::log(p) + (1.0 - g_target) * std::log(1.0 - p));
  out.grad = -g_target / p + (1.0 - g_target) / (1.0 - p);
  return out;
}

VectorLoss iou_pred_loss(const std::vector<double>& g_hats,
                         const std::vector<double>& g_targets) {
  if (g_hats.size() != g_targets.size()) {
    throw InputError("iou_pred_loss: predictions and targets must have equal length");
  }
  VectorLoss out;
  out.grads.assign(g_hats.size(), 0.0);
  if (g_hats.empty()) return out;
  const double inv_m = 1.0 / static_cast<double>(g_hats.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < g_hats.size(); ++i) {
    const ScalarLoss l = iou_pred_loss(g_hats[i], g_targets[i]);
    sum += l.value;
    out.grads[i] = l.grad * inv_m;
  }
  out.value = sum * inv_m;
  return out;
}

BoxDeltaBatchLoss rcnn_reg_loss(const std::vector<Delta>& pred_deltas,
                                const std::vector<Delta>& target_deltas) {
  if (pred_deltas.size() != target_deltas.size()) {
    throw InputError("rcnn_reg_loss: predictions and targets must have equal length");
  }
  BoxDeltaBatchLoss out;
  out.grads.assign(pred_deltas.size(), Delta{});
  if (pred_deltas.empty()) return out;
  const double inv_k = 1.0 / static_cast<double>(pred_deltas.size());
  auto sign = [](double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); };
  double sum = 0.0;
  for (std::size_t i = 0; i < pred_deltas.size(); ++i) {
    const Delta& p = pred_deltas[i];
    const Delta& t = target_deltas[i];
    sum += std::fabs(p.tx - t.tx) + std::fabs(p.ty - t.ty) + std::fabs(p.tw - t.tw) +
           std::fabs(p.th - t.th);
    out.grads[i].tx = sign(p.tx - t.tx) * inv_k;
    out.grads[i].ty = sign(p.ty - t.ty) * inv_k;
    out.grads[i].tw = sign(p.tw - t.tw) * inv_k;
    out.grads[i].th = sign(p.th - t.th) * inv_k;
  }
  out.value = sum * inv_k;
  return out;
}

namespace {

void check_cls_inputs(const std::vector<std::vector<double>>& cls_probs,
                      const std::vector<int>& labels,
                      const std::vector<double>& weights) {
  if (cls_probs.size() != labels.size()) {
    throw InputError("classification loss: probs and labels must have equal length");
  }
  if (weights.size() != cls_probs.size()) {
    throw InputError("classification loss: weight list length must equal sample count");
  }
  for (std::size_t k = 0; k < cls_probs.size(); ++k) {
    const std::vector<double>& row = cls_probs[k];
    if (row.empty()) throw InputError("classification loss: empty probability row");
    double sum = 0.0;
    for (double p : row) sum += p;
    if (std::fabs(sum - 1.0) > 1e-9) {
      throw InputError("classification loss: probability row does not sum to 1");
    }
    if (labels[k] < 0 || labels[k] >= static_cast<int>(row.size())) {
      throw InputError("classification loss: label out of range");
    }
  }
}

}  // namespace

CeLoss weighted_ce_loss(const std::vector<std::vector<double>>& cls_probs,
                        const std::vector<int>& labels,
                        const std::vector<double>& weights) {
  check_cls_inputs(cls_probs, labels, weights);
  CeLoss out;
  const std::size_t k_total = cls_probs.size();
  out.logit_grads.resize(k_total);
  out.per_sample_ce.resize(k_total);
  if (k_total == 0) return out;
  const double inv_k = 1.0 / static_cast<double>(k_total);
  double sum = 0.0;
  for (std::size_t k = 0; k < k_total; ++k) {
    const std::vector<double>& row = cls_probs[k];
    const int label = labels[k];
    const double ce = -std::log(clamp_prob(row[label]));
    out.per_sample_ce[k] = ce;
    sum += weights[k] * ce;
    std::vector<double>& g = out.logit_grads[k];
    g.resize(row.size());
    const double scale = weights[k] * inv_k;
    for (std::size_t c = 0; c < row.size(); ++c) {
      g[c] = scale * (row[c] - (static_cast<int>(c) == label ? 1.0 : 0.0));
    }
  }
  out.value = sum * inv_k;
  return out;
}

CeLoss weighted_softmax_focal_loss(const std::vector<std::vector<double>>& cls_probs,
                                   const std::vector<int>& labels,
                                   const std::vector<double>& weights,
                                   const FocalConfig& cfg) {
  cfg.validate();
  check_cls_inputs(cls_probs, labels, weights);
  CeLoss out;
  const std::size_t k_total = cls_probs.size();
  out.logit_grads.resize(k_total);
  out.per_sample_ce.resize(k_total);
  if (k_total == 0) return out;
  const double inv_k = 1.0 / static_cast<double>(k_total);
  double sum = 0.0;
  for (std::size_t k = 0; k < k_total; ++k) {
    const std::vector<double>& row = cls_probs[k];
    const int label = labels[k];
    const double pt = clamp_prob(row[label]);
    const double q = 1.0 - pt;
    const double modulator = std::pow(q, cfg.gamma);
    const double fl = -cfg.alpha * modulator * std::log(pt);
    out.per_sample_ce[k] = fl;
    sum += weights[k] * fl;
    double dfl_dpt = -cfg.alpha * modulator / pt;
    if (cfg.gamma > 0.0) {
      dfl_dpt += cfg.alpha * cfg.gamma * std::pow(q, cfg.gamma - 1.0) * std::log(pt);
    }
    std::vector<double>& g = out.logit_grads[k];
    g.resize(row.size());
    const double scale = weights[k] * inv_k * dfl_dpt * pt;
    for (std::size_t c = 0; c < row.size(); ++c) {
      g[c] = scale * ((static_cast<int>(c) == label ? 1.0 : 0.0) - row[c]);
    }
  }
  out.value = sum * inv_k;
  return out;
}

double total_loss(const LossComponents& components, const LossWeights& weights) {
  weights.validate();
  const struct {
    const char* name;
    double value;
  } entries[] = {{"obj_rpn", components.obj_rpn},
                 {"loc_rpn", components.loc_rpn},
                 {"iou_rpn", components.iou_rpn},
                 {"reg", components.reg},
                 {"cls", components.cls}};
  for (const auto& e : entries) {
    if (!std::isfinite(e.value)) {
      throw TrainingError(std::string("total_loss: non-finite component '") + e.name + "'");
    }
  }
  return weights.obj_rpn * components.obj_rpn + weights.loc_rpn * components.loc_rpn +
         weights.iou_rpn * components.iou_rpn + weights.reg * components.reg +
         weights.cls * components.cls;
}

}  // namespace boostdet
