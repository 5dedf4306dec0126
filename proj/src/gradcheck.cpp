#include "boostdet/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "boostdet/errors.hpp"

namespace boostdet {

std::vector<double> finite_diff_grad(
    const std::function<double(const std::vector<double>&)>& f,
    const std::vector<double>& point, double step) {
  std::vector<double> grad(point.size(), 0.0);
  std::vector<double> probe = point;
  for (std::size_t i = 0; i < point.size(); ++i) {
    probe[i] = point[i] + step;
    const double hi = f(probe);
    probe[i] = point[i] - step;
    const double lo = f(probe);
    probe[i] = point[i];
    if (!std::isfinite(hi) || !std::isfinite(lo)) {
      throw InputError("finite_diff_grad: function non-finite near point");
    }
    grad[i] = (hi - lo) / (2.0 * step);
  }
  return grad;
}

double finite_diff_check(const std::function<double(const std::vector<double>&)>& f,
                         const std::vector<double>& point,
                         const std::vector<double>& analytic_grad,
                         double step, double floor) {
  if (analytic_grad.size() != point.size()) {
    throw InputError("finite_diff_check: gradient size mismatch");
  }
  const std::vector<double> numeric = finite_diff_grad(f, point, step);
  double worst = 0.0;
  for (std::size_t i = 0; i < point.size(); ++i) {
    const double denom = std::max({floor, std::fabs(analytic_grad[i]), std::fabs(numeric[i])});
    worst = std::max(worst, std::fabs(analytic_grad[i] - numeric[i]) / denom);
  }
  return worst;
}

}  // namespace boostdet
