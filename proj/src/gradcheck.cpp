#include "aim/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "aim/error.hpp"
#include "aim/rng.hpp"

namespace aim::diff {

GradCheckReport finite_diff_check(const ScalarFn& f, std::span<const double> theta,
                                  std::span<const double> analytic_grad,
                                  const GradCheckOptions& options) {
  if (!(options.step > 0.0)) throw ContractError("finite difference step must be positive");
  if (analytic_grad.size() != theta.size()) {
    throw DimensionError("gradient has " + std::to_string(analytic_grad.size()) +
                         " entries for " + std::to_string(theta.size()) + " parameters");
  }

  std::vector<std::size_t> coords(theta.size());
  std::iota(coords.begin(), coords.end(), std::size_t{0});
  if (options.max_coords != 0 && options.max_coords < coords.size()) {
    Rng rng(derive_seed(options.seed, "gradcheck"));
    rng.shuffle(coords.begin(), coords.end());
    coords.resize(options.max_coords);
    std::sort(coords.begin(), coords.end());
  }

  auto eval = [&](std::span<const double> x) {
    const double v = f(x);
    if (!std::isfinite(v)) throw EvaluationError("objective is not finite during gradient check");
    return v;
  };

  std::vector<double> x(theta.begin(), theta.end());
  GradCheckReport report;
  for (std::size_t i : coords) {
    const double analytic = analytic_grad[i];
    auto rel_error = [&](double h) {
      const double saved = x[i];
      x[i] = saved + h;
      const double up = eval(x);
      x[i] = saved - h;
      const double down = eval(x);
      x[i] = saved;
      const double numeric = (up - down) / (2.0 * h);
      const double denom = std::max({options.scale_floor, std::abs(analytic), std::abs(numeric)});
      return std::abs(analytic - numeric) / denom;
    };
    double h = options.step;
    double rel = rel_error(h);
    for (int r = 0; r < options.refinements && rel > options.tolerance; ++r) {
      h /= 10.0;
      rel = rel_error(h);
      if (rel <= options.tolerance) ++report.refined;
    }
    if (report.checked == 0 || rel > report.max_rel_error) {
      report.max_rel_error = rel;
      report.worst_index = i;
    }
    ++report.checked;
  }
  report.passed = report.max_rel_error <= options.tolerance;
  return report;
}

}  // namespace aim::diff
