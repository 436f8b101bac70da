#pragma once

// Central finite-difference check shared by the unit and acceptance suites.

#include <algorithm>
#include <cmath>

#include <Eigen/Dense>

namespace persona::testing {

struct GradCheck {
  double max_rel_error = 0.0;
  long entries = 0;
  // values at the worst entry
  double analytic = 0.0;
  double numeric = 0.0;
};

// Perturbs every entry of `param` by +-eps, calls `loss()` and compares the
// central difference with `analytic`. rel = |a - n| / max(|a|, |n|, guard).
// Round-off in the difference of two O(10) losses is ~1e-11 at eps = 1e-4, so
// entries below ~1e-7 cannot be resolved to 1e-4 relative; the guard floors
// the denominator there.
template <class Loss>
GradCheck check_gradient(Eigen::MatrixXd& param, const Eigen::MatrixXd& analytic, Loss&& loss, double eps = 1e-4,
                         double guard = 1e-7) {
  GradCheck out;
  for (Eigen::Index r = 0; r < param.rows(); ++r) {
    for (Eigen::Index c = 0; c < param.cols(); ++c) {
      const double saved = param(r, c);
      param(r, c) = saved + eps;
      const double up = loss();
      param(r, c) = saved - eps;
      const double down = loss();
      param(r, c) = saved;
      const double numeric = (up - down) / (2.0 * eps);
      const double a = analytic(r, c);
      const double denom = std::max({std::abs(a), std::abs(numeric), guard});
      const double rel = std::abs(a - numeric) / denom;
      if (rel > out.max_rel_error) {
        out.max_rel_error = rel;
        out.analytic = a;
        out.numeric = numeric;
      }
      ++out.entries;
    }
  }
  return out;
}

}  // namespace persona::testing
