#pragma once

#include <array>
#include <cstddef>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "aim/registry.hpp"

namespace aim {

// a(i, j): accuracy (percent) on task i after training through task j, i <= j.
// Indices are 0-based here; reports print them 1-based.
class AccuracyMatrix {
 public:
  AccuracyMatrix() = default;
  AccuracyMatrix(std::size_t n, std::string split);

  std::size_t size() const { return n_; }
  const std::string& split() const { return split_; }

  void set(std::size_t i, std::size_t j, double value);
  double at(std::size_t i, std::size_t j) const;
  bool has(std::size_t i, std::size_t j) const;
  bool complete() const;
  std::vector<double> final_column() const;

  bool operator==(const AccuracyMatrix&) const = default;

 private:
  std::size_t index(std::size_t i, std::size_t j) const;

  std::size_t n_ = 0;
  std::string split_;
  std::vector<double> values_;
  std::vector<bool> present_;
};

double average_performance(const AccuracyMatrix& m);
// Throws EvaluationError when N < 2.
double average_forgetting(const AccuracyMatrix& m);

struct Forgetting {
  double value = 0.0;
  bool defined = false;
};
// AF, or 0 flagged undefined for a single-task matrix.
Forgetting forgetting_or_zero(const AccuracyMatrix& m);

double l2_shift_percent(std::span<const double> now, std::span<const double> before,
                        std::span<const std::size_t> indices);
double rms_shift_e3(std::span<const double> now, std::span<const double> before,
                    std::span<const std::size_t> indices);
double weighted_shift_mean(std::span<const double> now, std::span<const double> before,
                           std::span<const double> fisher, std::span<const std::size_t> indices);
double weighted_shift_sum(std::span<const double> now, std::span<const double> before,
                          std::span<const double> fisher, std::span<const std::size_t> indices);

struct ShiftRow {
  std::string transition;
  Subspace subspace = Subspace::kVis;
  double l2_pct = 0.0;
  double rms_e3 = 0.0;
  double weighted_mean = 0.0;
  double weighted_sum = 0.0;
  double mean_fisher = 0.0;

  bool operator==(const ShiftRow&) const = default;
};

// One row per subspace for the move from `before` to `now`.
std::vector<ShiftRow> shift_rows(const std::string& transition, std::span<const double> now,
                                 std::span<const double> before, std::span<const double> fisher,
                                 const ParamRegistry& registry);

std::string format_double(double v);

void write_matrix_csv(std::ostream& out, const AccuracyMatrix& m, const std::vector<std::string>& task_names);
AccuracyMatrix read_matrix_csv(std::istream& in, const std::string& split, std::vector<std::string>* task_names = nullptr);

void write_shift_csv(std::ostream& out, std::span<const ShiftRow> rows);
std::vector<ShiftRow> read_shift_csv(std::istream& in);

double mean(std::span<const double> v);
// Sample standard deviation (n - 1); 0 for fewer than two values.
double stddev(std::span<const double> v);

}  // namespace aim
