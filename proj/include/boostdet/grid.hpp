#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "boostdet/errors.hpp"

namespace boostdet {

// Dense (height, width, channels) grid of doubles in row-major (h, w, c) order.
// The working container for feature maps throughout the detector.
class Grid {
 public:
  Grid() = default;
  Grid(int height, int width, int channels, double fill = 0.0)
      : height_(height), width_(width), channels_(channels),
        values_(static_cast<std::size_t>(height) * width * channels, fill) {
    if (height <= 0 || width <= 0 || channels <= 0) {
      throw ConfigError("grid dimensions must be positive");
    }
  }

  int height() const { return height_; }
  int width() const { return width_; }
  int channels() const { return channels_; }
  std::size_t size() const { return values_.size(); }
  bool empty() const { return values_.empty(); }

  double& at(int h, int w, int c) {
    return values_[(static_cast<std::size_t>(h) * width_ + w) * channels_ + c];
  }
  double at(int h, int w, int c) const {
    return values_[(static_cast<std::size_t>(h) * width_ + w) * channels_ + c];
  }

  // pointer to the channel vector of one cell
  double* cell(int h, int w) {
    return values_.data() + (static_cast<std::size_t>(h) * width_ + w) * channels_;
  }
  const double* cell(int h, int w) const {
    return values_.data() + (static_cast<std::size_t>(h) * width_ + w) * channels_;
  }

  std::vector<double>& values() { return values_; }
  const std::vector<double>& values() const { return values_; }

  bool all_finite() const {
    for (double v : values_) {
      if (!std::isfinite(v)) return false;
    }
    return true;
  }

  bool same_shape(const Grid& other) const {
    return height_ == other.height_ && width_ == other.width_ &&
           channels_ == other.channels_;
  }

 private:
  int height_ = 0;
  int width_ = 0;
  int channels_ = 0;
  std::vector<double> values_;
};

}  // namespace boostdet
