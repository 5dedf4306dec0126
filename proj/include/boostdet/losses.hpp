#pragma once

#include <vector>

#include "boostdet/box.hpp"

namespace boostdet {

struct FocalConfig {
  double alpha = 0.25;
  double gamma = 2.0;
  void validate() const;
};

struct FiouConfig {
  double eta = 2.0;  // outlier-suppression exponent on the IoU weight
  void validate() const;
};

struct LossWeights {
  double obj_rpn = 1.0;
  double loc_rpn = 2.0;
  double iou_rpn = 1.0;
  double reg = 2.0;
  double cls = 2.0;
  void validate() const;
};

constexpr double kProbEpsilon = 1e-12;  // clamp applied before every log

struct ScalarLoss {
  double value = 0.0;
  double grad = 0.0;
};

struct VectorLoss {
  double value = 0.0;
  std::vector<double> grads;
};

struct BoxDeltaLoss {
  double value = 0.0;
  Delta grad;  // w.r.t. the predicted encoding
};

struct BoxDeltaBatchLoss {
  double value = 0.0;
  std::vector<Delta> grads;
};

// Binary focal loss on a single probability; y must be 0 or 1.
ScalarLoss focal_loss(double p_hat, int y, const FocalConfig& cfg);

enum class ObjectnessNormalization { all_anchors, positives };

// Mean focal loss over every anchor (positives and negatives, no sampling).
// The positives normalizer divides the same sum by max(1, #positives) instead.
VectorLoss objectness_loss(const std::vector<double>& p_hats,
                           const std::vector<int>& labels, const FocalConfig& cfg,
                           ObjectnessNormalization norm = ObjectnessNormalization::all_anchors);

// 1 - IoU(pred, gt) + squared L2 between the pred and gt encodings against the
// reference box. The gradient w.r.t. the predicted encoding runs through both
// the IoU term (via the delta -> box Jacobian) and the L2 term; coordinates
// clamped by decode get a zero subgradient.
BoxDeltaLoss improved_iou_loss(const Delta& pred_delta, const Box& gt, const Box& reference);
BoxDeltaLoss improved_iou_loss(const Box& pred, const Box& gt, const Box& reference);

// IoU^eta-weighted improved IoU loss. The weight is a stop-gradient factor:
// the returned gradient is weight * grad(improved), nothing flows through the
// weight itself. eta = 0 reproduces improved_iou_loss exactly.
BoxDeltaLoss fast_iou_loss(const Delta& pred_delta, const Box& gt, const Box& reference,
                           const FiouConfig& cfg);
BoxDeltaLoss fast_iou_loss(const Box& pred, const Box& gt, const Box& reference,
                           const FiouConfig& cfg);

struct LocSample {
  Delta pred_delta;
  Box gt;
  Box reference;
};

// Mean fast IoU loss over positive anchors; zero for an empty list.
BoxDeltaBatchLoss loc_loss(const std::vector<LocSample>& positives, const FiouConfig& cfg);

// Soft binary cross entropy between a predicted IoU and its target, the
// target treated as a constant.
ScalarLoss iou_pred_loss(double g_hat, double g_target);
VectorLoss iou_pred_loss(const std::vector<double>& g_hats,
                         const std::vector<double>& g_targets);

// Mean L1 distance between predicted and target encodings over positive
// proposals; subgradient 0 at exact zeros.
BoxDeltaBatchLoss rcnn_reg_loss(const std::vector<Delta>& pred_deltas,
                                const std::vector<Delta>& target_deltas);

struct CeLoss {
  double value = 0.0;
  std::vector<std::vector<double>> logit_grads;  // per sample, per class
  std::vector<double> per_sample_ce;             // unweighted, for reweighting
};

// Weighted cross entropy over softmax rows (C foreground classes +
// background). Weights are constants w.r.t. the gradient, which is returned
// w.r.t. the pre-softmax logits: (w_k / K) * (p - onehot).
CeLoss weighted_ce_loss(const std::vector<std::vector<double>>& cls_probs,
                        const std::vector<int>& labels,
                        const std::vector<double>& weights);

// Softmax focal variant of the classification loss (hard example mining
// comparison); same weighting and gradient conventions as weighted_ce_loss.
CeLoss weighted_softmax_focal_loss(const std::vector<std::vector<double>>& cls_probs,
                                   const std::vector<int>& labels,
                                   const std::vector<double>& weights,
                                   const FocalConfig& cfg);

struct LossComponents {
  double obj_rpn = 0.0;
  double loc_rpn = 0.0;
  double iou_rpn = 0.0;
  double reg = 0.0;
  double cls = 0.0;
};

// lambda-weighted sum of the five components; non-finite input raises a
// TrainingError naming the offending component.
double total_loss(const LossComponents& components, const LossWeights& weights);

}  // namespace boostdet
