#include "boostdet/anchors.hpp"

#include <algorithm>
#include <cmath>

#include "boostdet/errors.hpp"

namespace boostdet {

void AnchorConfig::validate() const {
  if (aspect_ratios.empty() || scale_multipliers.empty()) {
    throw ConfigError("anchors: aspect_ratios and scale_multipliers must be non-empty");
  }
  for (double r : aspect_ratios) {
    if (!(r > 0.0)) throw ConfigError("anchors: aspect ratios must be positive");
  }
  for (double m : scale_multipliers) {
    if (!(m > 0.0)) throw ConfigError("anchors: scale multipliers must be positive");
  }
  if (base_sizes.size() != strides.size()) {
    throw ConfigError("anchors: base_sizes and strides must have equal length");
  }
  for (double b : base_sizes) {
    if (!(b > 0.0)) throw ConfigError("anchors: base sizes must be positive");
  }
  if (positive_iou_threshold < 0.0 || positive_iou_threshold > 1.0 ||
      negative_iou_threshold < 0.0 || negative_iou_threshold > 1.0 ||
      positive_iou_threshold < negative_iou_threshold) {
    throw ConfigError("anchors: thresholds must satisfy 0 <= neg <= pos <= 1");
  }
}

std::size_t Assignment::positive_count() const {
  return static_cast<std::size_t>(
      std::count(labels.begin(), labels.end(), AnchorLabel::positive));
}

std::vector<Anchor> generate_anchors(const std::vector<LevelShape>& pyramid,
                                     const AnchorConfig& config) {
  config.validate();
  if (pyramid.size() > config.base_sizes.size()) {
    throw ConfigError("anchors: pyramid has more levels than configured base sizes");
  }
  const int n_mult = static_cast<int>(config.scale_multipliers.size());
  std::vector<Anchor> anchors;
  std::size_t total = 0;
  for (const LevelShape& shape : pyramid) {
    total += static_cast<std::size_t>(shape.height) * shape.width * config.anchors_per_cell();
  }
  anchors.reserve(total);

  for (std::size_t level = 0; level < pyramid.size(); ++level) {
    const LevelShape& shape = pyramid[level];
    const double base = config.base_sizes[level];
    for (int row = 0; row < shape.height; ++row) {
      for (int col = 0; col < shape.width; ++col) {
        const double cx = (col + 0.5) * shape.stride;
        const double cy = (row + 0.5) * shape.stride;
        for (std::size_t ri = 0; ri < config.aspect_ratios.size(); ++ri) {
          const double ratio = config.aspect_ratios[ri];  // w : h
          for (int mi = 0; mi < n_mult; ++mi) {
            const double side = base * config.scale_multipliers[mi];
            // area side^2 preserved: w = side*sqrt(ratio), h = side/sqrt(ratio)
            const double w = side * std::sqrt(ratio);
            const double h = side / std::sqrt(ratio);
            Anchor a;
            a.box = Box::from_center(cx, cy, w, h);
            a.level = static_cast<int>(level);
            a.row = row;
            a.col = col;
            a.shape_index = static_cast<int>(ri) * n_mult + mi;
            anchors.push_back(a);
          }
        }
      }
    }
  }
  return anchors;
}

Assignment assign_anchors(const std::vector<Anchor>& anchors,
                          const std::vector<Box>& gt_boxes,
                          const AnchorConfig& config) {
  config.validate();
  Assignment out;
  out.labels.assign(anchors.size(), AnchorLabel::negative);
  out.matched_gt.assign(anchors.size(), -1);
  out.matched_iou.assign(anchors.size(), 0.0);
  if (gt_boxes.empty()) return out;

  for (std::size_t i = 0; i < anchors.size(); ++i) {
    double best = -1.0;
    int best_gt = -1;
    for (std::size_t g = 0; g < gt_boxes.size(); ++g) {
      const double v = iou(anchors[i].box, gt_boxes[g]);
      if (v > best) {  // ties keep the lowest gt index
        best = v;
        best_gt = static_cast<int>(g);
      }
    }
    out.matched_iou[i] = best;
    if (best >= config.positive_iou_threshold) {
      out.labels[i] = AnchorLabel::positive;
      out.matched_gt[i] = best_gt;
    }
  }

  if (config.force_match && !anchors.empty()) {
    for (std::size_t g = 0; g < gt_boxes.size(); ++g) {
      double best = -1.0;
      std::size_t best_anchor = 0;
      for (std::size_t i = 0; i < anchors.size(); ++i) {
        const double v = iou(anchors[i].box, gt_boxes[g]);
        if (v > best) {  // ties keep the lowest anchor index
          best = v;
          best_anchor = i;
        }
      }
      out.labels[best_anchor] = AnchorLabel::positive;
      out.matched_gt[best_anchor] = static_cast<int>(g);
      out.matched_iou[best_anchor] = best;
    }
  }
  return out;
}

}  // namespace boostdet
