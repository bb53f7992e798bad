#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>

namespace aim::diff {

struct GradCheckOptions {
  double step = 1e-5;
  double tolerance = 1e-4;
  // Denominator floor of the relative error, so coordinates whose true
  // gradient is ~0 are judged on absolute error instead.
  double scale_floor = 1e-6;
  // Coordinates checked; all of them when 0 or >= theta.size().
  std::size_t max_coords = 0;
  std::uint64_t seed = 0;
  // A coordinate that fails is retried this many times with the step divided
  // by 10 each time; a step straddling a relu kink fails at any tolerance.
  int refinements = 0;
};

struct GradCheckReport {
  bool passed = false;
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  std::size_t checked = 0;
  std::size_t refined = 0;  // coordinates that passed only after refinement
};

using ScalarFn = std::function<double(std::span<const double>)>;

// Compares analytic_grad against central differences (f(θ+he)-f(θ-he))/2h.
// Throws EvaluationError when f returns a non-finite value.
GradCheckReport finite_diff_check(const ScalarFn& f, std::span<const double> theta,
                                  std::span<const double> analytic_grad,
                                  const GradCheckOptions& options = {});

}  // namespace aim::diff
