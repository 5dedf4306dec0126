#pragma once

#include <array>

namespace boostdet {

// Axis-aligned box in continuous image coordinates, corner form. Intersection
// width is max(0, min(x2) - max(x1)); no +1 pixel convention.
struct Box {
  double x1 = 0.0;
  double y1 = 0.0;
  double x2 = 0.0;
  double y2 = 0.0;

  Box() = default;
  Box(double x1_, double y1_, double x2_, double y2_) : x1(x1_), y1(y1_), x2(x2_), y2(y2_) {}

  static Box from_center(double cx, double cy, double w, double h) {
    return Box(cx - 0.5 * w, cy - 0.5 * h, cx + 0.5 * w, cy + 0.5 * h);
  }

  double width() const { return x2 - x1; }
  double height() const { return y2 - y1; }
  double cx() const { return 0.5 * (x1 + x2); }
  double cy() const { return 0.5 * (y1 + y2); }
  double area() const { return width() * height(); }
  bool degenerate() const { return width() <= 0.0 || height() <= 0.0; }
  bool valid() const;
};

// Encoded box offsets relative to a reference box: tx, ty are center shifts in
// reference units, tw, th are log size ratios.
struct Delta {
  double tx = 0.0;
  double ty = 0.0;
  double tw = 0.0;
  double th = 0.0;
};

// log-ratio clamp applied by decode before exponentiation
constexpr double kDeltaClamp = 4.0;

// Intersection-over-union in [0,1]; 0 for disjoint or zero-area union.
double iou(const Box& a, const Box& b);

// Analytic d(iou)/d(pred.x1, pred.y1, pred.x2, pred.y2) with the fixed box
// held constant. One-sided subgradient where the intersection boundary
// switches owner; zero for disjoint or degenerate configurations.
std::array<double, 4> iou_grad(const Box& pred, const Box& fixed);

// Delta encoding of target against reference. Throws InputError if either box
// has a non-positive extent.
Delta encode(const Box& target, const Box& reference);

// Exact inverse of encode, with tw/th clamped to +-kDeltaClamp first.
Box decode(const Delta& delta, const Box& reference);

// Clamp a box into [0, image_w] x [0, image_h]. Result may be degenerate.
Box clip(const Box& box, double image_w, double image_h);

}  // namespace boostdet
