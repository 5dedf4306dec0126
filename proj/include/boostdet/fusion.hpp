#pragma once

#include <cmath>

#include "boostdet/errors.hpp"

namespace boostdet {

// Object prior: geometric mean of objectness and IoU prediction.
inline double object_prior(double objectness, double iou_pred) {
  if (objectness < 0.0 || objectness > 1.0 || iou_pred < 0.0 || iou_pred > 1.0) {
    throw InputError("object_prior: inputs must lie in [0,1]");
  }
  return std::sqrt(iou_pred * objectness);
}

// Final detection score: geometric mean of first-stage prior and second-stage
// classification score, applied per class. fused^2 recovers the marginal
// probability product prior * cls.
inline double fuse_scores(double prior, double cls) {
  if (prior < 0.0 || prior > 1.0 || cls < 0.0 || cls > 1.0) {
    throw InputError("fuse_scores: inputs must lie in [0,1]");
  }
  return std::sqrt(prior * cls);
}

struct ScoreTriple {
  double prior = 0.0;
  double cls = 0.0;
  double fused = 0.0;
};

}  // namespace boostdet
