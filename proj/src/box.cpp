#include "boostdet/box.hpp"

#include <algorithm>
#include <cmath>

#include "boostdet/errors.hpp"

namespace boostdet {

bool Box::valid() const {
  return std::isfinite(x1) && std::isfinite(y1) && std::isfinite(x2) &&
         std::isfinite(y2) && x2 >= x1 && y2 >= y1;
}

double iou(const Box& a, const Box& b) {
  const double iw = std::min(a.x2, b.x2) - std::max(a.x1, b.x1);
  const double ih = std::min(a.y2, b.y2) - std::max(a.y1, b.y1);
  if (iw <= 0.0 || ih <= 0.0) return 0.0;
  const double inter = iw * ih;
  const double uni = a.area() + b.area() - inter;
  if (uni <= 0.0) return 0.0;
  return inter / uni;
}

std::array<double, 4> iou_grad(const Box& pred, const Box& fixed) {
  std::array<double, 4> grad{0.0, 0.0, 0.0, 0.0};
  if (pred.degenerate() || fixed.degenerate()) return grad;

  const double iw = std::min(pred.x2, fixed.x2) - std::max(pred.x1, fixed.x1);
  const double ih = std::min(pred.y2, fixed.y2) - std::max(pred.y1, fixed.y1);
  if (iw <= 0.0 || ih <= 0.0) return grad;  // IoU locally constant 0

  const double inter = iw * ih;
  const double uni = pred.area() + fixed.area() - inter;
  if (uni <= 0.0) return grad;

  // dI/d(coord): nonzero only where pred owns the intersection boundary.
  const double di_dx1 = (pred.x1 >= fixed.x1) ? -ih : 0.0;
  const double di_dy1 = (pred.y1 >= fixed.y1) ? -iw : 0.0;
  const double di_dx2 = (pred.x2 <= fixed.x2) ? ih : 0.0;
  const double di_dy2 = (pred.y2 <= fixed.y2) ? iw : 0.0;

  // dA_pred/d(coord)
  const double w = pred.width();
  const double h = pred.height();
  const double da_dx1 = -h;
  const double da_dy1 = -w;
  const double da_dx2 = h;
  const double da_dy2 = w;

  // iou = I/U, U = A_pred + A_fixed - I  =>  d(iou) = (dI*U - I*(dA - dI))/U^2
  const double inv_u2 = 1.0 / (uni * uni);
  grad[0] = (di_dx1 * uni - inter * (da_dx1 - di_dx1)) * inv_u2;
  grad[1] = (di_dy1 * uni - inter * (da_dy1 - di_dy1)) * inv_u2;
  grad[2] = (di_dx2 * uni - inter * (da_dx2 - di_dx2)) * inv_u2;
  grad[3] = (di_dy2 * uni - inter * (da_dy2 - di_dy2)) * inv_u2;
  return grad;
}

Delta encode(const Box& target, const Box& reference) {
  const double rw = reference.width();
  const double rh = reference.height();
  const double tw = target.width();
  const double th = target.height();
  if (rw <= 0.0 || rh <= 0.0) throw InputError("encode: reference extents must be positive");
  if (tw <= 0.0 || th <= 0.0) throw InputError("encode: target extents must be positive");
  Delta d;
  d.tx = (target.cx() - reference.cx()) / rw;
  d.ty = (target.cy() - reference.cy()) / rh;
  d.tw = std::log(tw / rw);
  d.th = std::log(th / rh);
  return d;
}

Box decode(const Delta& delta, const Box& reference) {
  const double rw = reference.width();
  const double rh = reference.height();
  if (rw <= 0.0 || rh <= 0.0) throw InputError("decode: reference extents must be positive");
  const double tw = std::clamp(delta.tw, -kDeltaClamp, kDeltaClamp);
  const double th = std::clamp(delta.th, -kDeltaClamp, kDeltaClamp);
  const double cx = delta.tx * rw + reference.cx();
  const double cy = delta.ty * rh + reference.cy();
  return Box::from_center(cx, cy, rw * std::exp(tw), rh * std::exp(th));
}

Box clip(const Box& box, double image_w, double image_h) {
  if (image_w <= 0.0 || image_h <= 0.0) throw InputError("clip: image extents must be positive");
  Box out;
  out.x1 = std::clamp(box.x1, 0.0, image_w);
  out.y1 = std::clamp(box.y1, 0.0, image_h);
  out.x2 = std::clamp(box.x2, 0.0, image_w);
  out.y2 = std::clamp(box.y2, 0.0, image_h);
  return out;
}

}  // namespace boostdet
