#pragma once

#include <map>
#include <vector>

#include "boostdet/box.hpp"
#include "boostdet/fusion.hpp"

namespace boostdet {

struct NmsConfig {
  double iou_threshold = 0.5;
  int max_keep = 100;
  void validate() const;
};

struct Detection {
  Box box;
  int class_id = 0;
  ScoreTriple score;
};

// First-stage proposal: decoded box plus the scores that produced it.
// prior == sqrt(iou_pred * objectness) by construction.
struct Proposal {
  Box box;
  double objectness = 0.0;
  double iou_pred = 0.0;
  double prior = 0.0;
  int anchor_index = -1;
};

// Greedy class-agnostic NMS. Returns kept original indices in keep order
// (descending score, ties to the lower index); suppression is strict
// (IoU > threshold).
std::vector<int> nms_indices(const std::vector<Box>& boxes,
                             const std::vector<double>& scores, const NmsConfig& cfg);

// Per-class NMS over final detections, keyed on the fused score; max_keep
// applies per class. Kept indices are returned in ascending original order.
std::vector<int> nms(const std::vector<Detection>& detections, const NmsConfig& cfg);

struct ScoredAnchor {
  Box anchor;
  Delta delta;
  double objectness = 0.0;
  double iou_pred = 0.0;
  double prior = 0.0;  // ranking key
  int level = 0;
  int anchor_index = -1;
};

struct ProposalSelectConfig {
  int pre_nms_top_n_per_level = 1000;
  double nms_threshold = 0.7;
  int post_nms_top_n = 256;
  double image_w = 0.0;
  double image_h = 0.0;
};

// Rank by prior per level, take the per-level pre-NMS cap, decode against the
// anchors, clip to the image, drop degenerate boxes, class-agnostic NMS, then
// keep the post-NMS top n.
std::vector<Proposal> select_proposals(const std::vector<ScoredAnchor>& scored,
                                       const ProposalSelectConfig& cfg);

struct EvalDetection {
  int scene_id = 0;
  Box box;
  int class_id = 0;
  double score = 0.0;
};

struct EvalGt {
  int scene_id = 0;
  Box box;
  int class_id = 0;
};

struct ApResult {
  double ap = 0.0;    // mean over thresholds 0.5:0.95:0.05 and classes
  double ap50 = 0.0;
  double ap75 = 0.0;
  std::map<int, double> per_class_ap;  // at the averaged threshold range
};

std::vector<double> coco_iou_thresholds();  // 0.5, 0.55, ..., 0.95

// COCO-style AP: greedy matching of score-sorted detections to unmatched
// ground truths per class and threshold, 101-point interpolated AP, classes
// without ground truths excluded.
ApResult coco_ap(const std::vector<EvalDetection>& detections,
                 const std::vector<EvalGt>& gts,
                 const std::vector<double>& iou_thresholds = coco_iou_thresholds());

struct PrPoint {
  double recall = 0.0;
  double precision = 0.0;
};

// Raw precision-recall points (one per detection, score-descending) for a
// single class at a single IoU threshold; used by the plot command.
std::vector<PrPoint> pr_curve(const std::vector<EvalDetection>& detections,
                              const std::vector<EvalGt>& gts, int class_id,
                              double iou_threshold);

}  // namespace boostdet
