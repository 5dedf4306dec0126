#pragma once

#include <cstddef>
#include <vector>

#include "boostdet/box.hpp"

namespace boostdet {

struct AnchorConfig {
  // w:h ratio values
  std::vector<double> aspect_ratios{0.5, 1.0, 2.0};
  std::vector<double> scale_multipliers{1.0, 1.2599210498948732, 1.5874010519681994};
  // toy-scale defaults over 64x64 scenes; the 32..512 ladder stays configurable
  std::vector<double> base_sizes{8.0, 16.0, 32.0};
  std::vector<double> strides{8.0, 16.0, 32.0};
  double positive_iou_threshold = 0.5;
  double negative_iou_threshold = 0.5;
  bool force_match = false;

  int anchors_per_cell() const {
    return static_cast<int>(aspect_ratios.size() * scale_multipliers.size());
  }
  void validate() const;
};

struct LevelShape {
  int height = 0;
  int width = 0;
  double stride = 0.0;
};

struct Anchor {
  Box box;
  int level = 0;
  int row = 0;
  int col = 0;
  int shape_index = 0;  // ratio-major: ratio_idx * n_multipliers + mult_idx
};

enum class AnchorLabel { negative, positive };

struct Assignment {
  std::vector<AnchorLabel> labels;
  std::vector<int> matched_gt;    // valid where positive, -1 otherwise
  std::vector<double> matched_iou;

  std::size_t positive_count() const;
};

// Dense anchor grid: for each level, cell, (ratio, multiplier) pair, one box of
// area (base*multiplier)^2 with w/h = ratio, centered on the cell center.
// Ordering is level-major, then row-major, shape index fastest.
std::vector<Anchor> generate_anchors(const std::vector<LevelShape>& pyramid,
                                     const AnchorConfig& config);

// Pure IoU-threshold assignment: positive iff max IoU over ground truths is
// >= the positive threshold (ties to the lowest gt index), negative otherwise.
// With force_match, each gt's best anchor is additionally made positive.
Assignment assign_anchors(const std::vector<Anchor>& anchors,
                          const std::vector<Box>& gt_boxes,
                          const AnchorConfig& config);

}  // namespace boostdet
