#include "boostdet/postprocess.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "boostdet/errors.hpp"

namespace boostdet {

void NmsConfig::validate() const {
  if (iou_threshold < 0.0 || iou_threshold > 1.0) {
    throw ConfigError("nms.iou_threshold must lie in [0,1]");
  }
  if (max_keep <= 0) throw ConfigError("nms.max_keep must be positive");
}

namespace {

std::vector<int> score_order(const std::vector<double>& scores) {
  std::vector<int> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&scores](int a, int b) { return scores[a] > scores[b]; });
  return order;
}

}  // namespace

std::vector<int> nms_indices(const std::vector<Box>& boxes,
                             const std::vector<double>& scores, const NmsConfig& cfg) {
  cfg.validate();
  if (boxes.size() != scores.size()) {
    throw InputError("nms: boxes and scores must have equal length");
  }
  for (double s : scores) {
    if (!std::isfinite(s)) throw InputError("nms: scores must be finite");
  }
  const std::vector<int> order = score_order(scores);
  std::vector<bool> suppressed(boxes.size(), false);
  std::vector<int> kept;
  for (int idx : order) {
    if (suppressed[idx]) continue;
    kept.push_back(idx);
    if (static_cast<int>(kept.size()) >= cfg.max_keep) break;
    for (int other : order) {
      if (suppressed[other] || other == idx) continue;
      if (iou(boxes[idx], boxes[other]) > cfg.iou_threshold) suppressed[other] = true;
    }
  }
  return kept;
}

std::vector<int> nms(const std::vector<Detection>& detections, const NmsConfig& cfg) {
  std::set<int> classes;
  for (const Detection& d : detections) classes.insert(d.class_id);
  std::vector<int> all_kept;
  for (int cls : classes) {
    std::vector<Box> boxes;
    std::vector<double> scores;
    std::vector<int> original;
    for (std::size_t i = 0; i < detections.size(); ++i) {
      if (detections[i].class_id != cls) continue;
      boxes.push_back(detections[i].box);
      scores.push_back(detections[i].score.fused);
      original.push_back(static_cast<int>(i));
    }
    for (int k : nms_indices(boxes, scores, cfg)) all_kept.push_back(original[k]);
  }
  std::sort(all_kept.begin(), all_kept.end());
  return all_kept;
}

std::vector<Proposal> select_proposals(const std::vector<ScoredAnchor>& scored,
                                       const ProposalSelectConfig& cfg) {
  if (cfg.image_w <= 0.0 || cfg.image_h <= 0.0) {
    throw ConfigError("select_proposals: image extents must be positive");
  }
  if (cfg.pre_nms_top_n_per_level <= 0 || cfg.post_nms_top_n <= 0) {
    throw ConfigError("select_proposals: top-n caps must be positive");
  }

  // per-level rank by prior, take the pre-NMS cap
  int max_level = -1;
  for (const ScoredAnchor& s : scored) max_level = std::max(max_level, s.level);
  std::vector<const ScoredAnchor*> candidates;
  for (int level = 0; level <= max_level; ++level) {
    std::vector<const ScoredAnchor*> on_level;
    for (const ScoredAnchor& s : scored) {
      if (s.level == level) on_level.push_back(&s);
    }
    std::stable_sort(on_level.begin(), on_level.end(),
                     [](const ScoredAnchor* a, const ScoredAnchor* b) {
                       return a->prior > b->prior;
                     });
    const std::size_t cap = std::min<std::size_t>(on_level.size(), cfg.pre_nms_top_n_per_level);
    candidates.insert(candidates.end(), on_level.begin(), on_level.begin() + cap);
  }

  // decode, clip, drop degenerate
  std::vector<Proposal> decoded;
  decoded.reserve(candidates.size());
  for (const ScoredAnchor* s : candidates) {
    const Box box = clip(decode(s->delta, s->anchor), cfg.image_w, cfg.image_h);
    if (box.degenerate()) continue;
    Proposal p;
    p.box = box;
    p.objectness = s->objectness;
    p.iou_pred = s->iou_pred;
    p.prior = s->prior;
    p.anchor_index = s->anchor_index;
    decoded.push_back(p);
  }

  NmsConfig nms_cfg;
  nms_cfg.iou_threshold = cfg.nms_threshold;
  nms_cfg.max_keep = cfg.post_nms_top_n;
  std::vector<Box> boxes(decoded.size());
  std::vector<double> priors(decoded.size());
  for (std::size_t i = 0; i < decoded.size(); ++i) {
    boxes[i] = decoded[i].box;
    priors[i] = decoded[i].prior;
  }
  std::vector<Proposal> out;
  for (int k : nms_indices(boxes, priors, nms_cfg)) out.push_back(decoded[k]);
  return out;
}

std::vector<double> coco_iou_thresholds() {
  std::vector<double> out;
  for (int i = 0; i <= 9; ++i) out.push_back(0.5 + 0.05 * i);
  return out;
}

namespace {

struct ClassEval {
  // detections of one class, sorted by score descending
  std::vector<const EvalDetection*> dets;
  // ground truths of one class grouped by scene
  std::map<int, std::vector<const EvalGt*>> gts_by_scene;
  std::size_t n_gt = 0;
};

// 101-point interpolated AP from raw (recall, precision) points.
double interpolate_ap(const std::vector<PrPoint>& points) {
  double total = 0.0;
  for (int i = 0; i <= 100; ++i) {
    const double r = i / 100.0;
    double best = 0.0;
    for (const PrPoint& p : points) {
      if (p.recall >= r) best = std::max(best, p.precision);
    }
    total += best;
  }
  return total / 101.0;
}

std::vector<PrPoint> match_class(const ClassEval& ce, double threshold) {
  std::map<int, std::vector<bool>> matched;
  for (const auto& [scene, gts] : ce.gts_by_scene) {
    matched[scene].assign(gts.size(), false);
  }
  std::vector<PrPoint> points;
  double tp = 0.0;
  double fp = 0.0;
  for (const EvalDetection* det : ce.dets) {
    double best_iou = 0.0;
    int best_gt = -1;
    auto it = ce.gts_by_scene.find(det->scene_id);
    if (it != ce.gts_by_scene.end()) {
      const std::vector<const EvalGt*>& gts = it->second;
      std::vector<bool>& used = matched[det->scene_id];
      for (std::size_t g = 0; g < gts.size(); ++g) {
        if (used[g]) continue;
        const double v = iou(det->box, gts[g]->box);
        if (v >= threshold && v > best_iou) {
          best_iou = v;
          best_gt = static_cast<int>(g);
        }
      }
    }
    if (best_gt >= 0) {
      matched[det->scene_id][best_gt] = true;
      tp += 1.0;
    } else {
      fp += 1.0;
    }
    PrPoint p;
    p.precision = tp / (tp + fp);
    p.recall = ce.n_gt > 0 ? tp / static_cast<double>(ce.n_gt) : 0.0;
    points.push_back(p);
  }
  return points;
}

std::map<int, ClassEval> build_class_evals(const std::vector<EvalDetection>& detections,
                                           const std::vector<EvalGt>& gts) {
  std::map<int, ClassEval> evals;
  for (const EvalGt& gt : gts) {
    ClassEval& ce = evals[gt.class_id];
    ce.gts_by_scene[gt.scene_id].push_back(&gt);
    ce.n_gt += 1;
  }
  for (const EvalDetection& det : detections) {
    auto it = evals.find(det.class_id);
    if (it == evals.end()) continue;  // class with no ground truth is excluded
    it->second.dets.push_back(&det);
  }
  for (auto& [cls, ce] : evals) {
    std::stable_sort(ce.dets.begin(), ce.dets.end(),
                     [](const EvalDetection* a, const EvalDetection* b) {
                       if (a->score != b->score) return a->score > b->score;
                       return a->scene_id < b->scene_id;
                     });
  }
  return evals;
}

}  // namespace

ApResult coco_ap(const std::vector<EvalDetection>& detections,
                 const std::vector<EvalGt>& gts,
                 const std::vector<double>& iou_thresholds) {
  if (iou_thresholds.empty()) throw InputError("coco_ap: no IoU thresholds");
  ApResult out;
  const std::map<int, ClassEval> evals = build_class_evals(detections, gts);
  if (evals.empty()) return out;

  double threshold_sum = 0.0;
  for (double thr : iou_thresholds) {
    double class_sum = 0.0;
    for (const auto& [cls, ce] : evals) {
      const double ap = interpolate_ap(match_class(ce, thr));
      class_sum += ap;
      out.per_class_ap[cls] += ap / static_cast<double>(iou_thresholds.size());
    }
    const double mean_ap = class_sum / static_cast<double>(evals.size());
    threshold_sum += mean_ap;
    if (std::fabs(thr - 0.5) < 1e-12) out.ap50 = mean_ap;
    if (std::fabs(thr - 0.75) < 1e-12) out.ap75 = mean_ap;
  }
  out.ap = threshold_sum / static_cast<double>(iou_thresholds.size());
  return out;
}

std::vector<PrPoint> pr_curve(const std::vector<EvalDetection>& detections,
                              const std::vector<EvalGt>& gts, int class_id,
                              double iou_threshold) {
  const std::map<int, ClassEval> evals = build_class_evals(detections, gts);
  auto it = evals.find(class_id);
  if (it == evals.end()) return {};
  return match_class(it->second, iou_threshold);
}

}  // namespace boostdet
