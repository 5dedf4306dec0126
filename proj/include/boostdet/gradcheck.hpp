#pragma once

#include <functional>
#include <vector>

namespace boostdet {

// Central finite-difference check of an analytic gradient.
//
// `f` evaluates the scalar function at a point, `analytic_grad` is the gradient
// claimed at `point`. Returns the worst componentwise relative error,
// |analytic - numeric| / max(floor, |analytic|, |numeric|).
// Throws InputError if f is non-finite anywhere in the probed neighborhood.
double finite_diff_check(const std::function<double(const std::vector<double>&)>& f,
                         const std::vector<double>& point,
                         const std::vector<double>& analytic_grad,
                         double step = 1e-5, double floor = 1e-6);

// Central-difference gradient of f at point.
std::vector<double> finite_diff_grad(
    const std::function<double(const std::vector<double>&)>& f,
    const std::vector<double>& point, double step = 1e-5);

}  // namespace boostdet
