#include "aim/metrics.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>

#include "aim/error.hpp"

namespace aim {

AccuracyMatrix::AccuracyMatrix(std::size_t n, std::string split)
    : n_(n), split_(std::move(split)), values_(n * n, 0.0), present_(n * n, false) {}

std::size_t AccuracyMatrix::index(std::size_t i, std::size_t j) const {
  if (i >= n_ || j >= n_ || i > j) {
    throw IndexError("accuracy entry (" + std::to_string(i) + "," + std::to_string(j) + ") outside the triangle");
  }
  return j * n_ + i;
}

void AccuracyMatrix::set(std::size_t i, std::size_t j, double value) {
  if (!(value >= 0.0 && value <= 100.0)) throw ContractError("accuracy must be in [0, 100]");
  const auto k = index(i, j);
  values_[k] = value;
  present_[k] = true;
}

double AccuracyMatrix::at(std::size_t i, std::size_t j) const {
  const auto k = index(i, j);
  if (!present_[k]) {
    throw ContractError("accuracy entry (" + std::to_string(i + 1) + "," + std::to_string(j + 1) + ") missing");
  }
  return values_[k];
}

bool AccuracyMatrix::has(std::size_t i, std::size_t j) const { return present_[index(i, j)]; }

bool AccuracyMatrix::complete() const {
  for (std::size_t j = 0; j < n_; ++j) {
    for (std::size_t i = 0; i <= j; ++i) {
      if (!present_[j * n_ + i]) return false;
    }
  }
  return true;
}

std::vector<double> AccuracyMatrix::final_column() const {
  std::vector<double> out;
  for (std::size_t i = 0; i < n_; ++i) out.push_back(at(i, n_ - 1));
  return out;
}

double average_performance(const AccuracyMatrix& m) {
  if (m.size() == 0) throw ContractError("empty accuracy matrix");
  const auto col = m.final_column();
  return mean(col);
}

double average_forgetting(const AccuracyMatrix& m) {
  const std::size_t n = m.size();
  if (n < 2) throw EvaluationError("forgetting is undefined for fewer than two tasks");
  if (!m.complete()) throw ContractError("accuracy matrix is incomplete");
  double total = 0.0;
  for (std::size_t i = 0; i + 1 < n; ++i) {
    double best = m.at(i, i);
    for (std::size_t j = i + 1; j + 1 < n; ++j) best = std::max(best, m.at(i, j));
    total += best - m.at(i, n - 1);
  }
  return total / static_cast<double>(n - 1);
}

Forgetting forgetting_or_zero(const AccuracyMatrix& m) {
  if (m.size() < 2) return {0.0, false};
  return {average_forgetting(m), true};
}

namespace {

void check_lengths(std::span<const double> a, std::span<const double> b, std::span<const std::size_t> idx) {
  if (a.size() != b.size()) throw ContractError("parameter vectors differ in length");
  for (auto i : idx) {
    if (i >= a.size()) throw IndexError("subspace index " + std::to_string(i) + " out of range");
  }
}

}  // namespace

double l2_shift_percent(std::span<const double> now, std::span<const double> before,
                        std::span<const std::size_t> indices) {
  check_lengths(now, before, indices);
  double delta = 0.0, ref = 0.0;
  for (auto i : indices) {
    const double d = now[i] - before[i];
    delta += d * d;
    ref += before[i] * before[i];
  }
  if (ref == 0.0) throw EvaluationError("relative shift against a zero-norm reference");
  return 100.0 * std::sqrt(delta) / std::sqrt(ref);
}

double rms_shift_e3(std::span<const double> now, std::span<const double> before,
                    std::span<const std::size_t> indices) {
  check_lengths(now, before, indices);
  if (indices.empty()) throw ContractError("RMS shift over an empty subspace");
  double s = 0.0;
  for (auto i : indices) {
    const double d = now[i] - before[i];
    s += d * d;
  }
  return std::sqrt(s / static_cast<double>(indices.size())) * 1000.0;
}

double weighted_shift_sum(std::span<const double> now, std::span<const double> before,
                          std::span<const double> fisher, std::span<const std::size_t> indices) {
  check_lengths(now, before, indices);
  if (fisher.size() != now.size()) throw ContractError("Fisher length does not match the parameters");
  double s = 0.0;
  for (auto i : indices) {
    const double d = now[i] - before[i];
    s += fisher[i] * d * d;
  }
  return s;
}

double weighted_shift_mean(std::span<const double> now, std::span<const double> before,
                           std::span<const double> fisher, std::span<const std::size_t> indices) {
  if (indices.empty()) return 0.0;
  return weighted_shift_sum(now, before, fisher, indices) / static_cast<double>(indices.size());
}

std::vector<ShiftRow> shift_rows(const std::string& transition, std::span<const double> now,
                                 std::span<const double> before, std::span<const double> fisher,
                                 const ParamRegistry& registry) {
  std::vector<ShiftRow> rows;
  for (Subspace s : kSubspaces) {
    const auto idx = registry.indices(s);
    ShiftRow r;
    r.transition = transition;
    r.subspace = s;
    r.l2_pct = l2_shift_percent(now, before, idx);
    r.rms_e3 = rms_shift_e3(now, before, idx);
    r.weighted_mean = weighted_shift_mean(now, before, fisher, idx);
    r.weighted_sum = weighted_shift_sum(now, before, fisher, idx);
    double f = 0.0;
    for (auto i : idx) f += fisher[i];
    r.mean_fisher = f / static_cast<double>(idx.size());
    rows.push_back(r);
  }
  return rows;
}

std::string format_double(double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

namespace {

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double parse_double(const std::string& s, std::size_t line) {
  double v = 0.0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) throw ParseError(line, "bad number '" + s + "'");
  return v;
}

}  // namespace

void write_matrix_csv(std::ostream& out, const AccuracyMatrix& m, const std::vector<std::string>& task_names) {
  if (task_names.size() != m.size()) throw ContractError("one task name per matrix row is required");
  out << "after";
  for (const auto& n : task_names) out << ',' << n;
  out << '\n';
  for (std::size_t j = 0; j < m.size(); ++j) {
    out << task_names[j];
    for (std::size_t i = 0; i < m.size(); ++i) {
      out << ',';
      if (i <= j && m.has(i, j)) out << format_double(m.at(i, j));
    }
    out << '\n';
  }
}

AccuracyMatrix read_matrix_csv(std::istream& in, const std::string& split, std::vector<std::string>* task_names) {
  std::string line;
  if (!std::getline(in, line)) throw ParseError(1, "missing header");
  auto header = split_csv(line);
  if (header.empty() || header[0] != "after") throw ParseError(1, "header must start with 'after'");
  const std::size_t n = header.size() - 1;
  if (task_names) task_names->assign(header.begin() + 1, header.end());
  AccuracyMatrix m(n, split);
  for (std::size_t j = 0; j < n; ++j) {
    if (!std::getline(in, line)) throw ParseError(j + 2, "missing row");
    auto cells = split_csv(line);
    if (cells.size() != n + 1) throw ParseError(j + 2, "expected " + std::to_string(n + 1) + " cells");
    for (std::size_t i = 0; i < n; ++i) {
      const auto& c = cells[i + 1];
      if (c.empty()) continue;
      if (i > j) throw ParseError(j + 2, "entry above the diagonal");
      m.set(i, j, parse_double(c, j + 2));
    }
  }
  return m;
}

void write_shift_csv(std::ostream& out, std::span<const ShiftRow> rows) {
  out << "transition,subspace,l2_pct,rms_e3,weighted_mean,weighted_sum,mean_fisher\n";
  for (const auto& r : rows) {
    out << r.transition << ',' << to_string(r.subspace) << ',' << format_double(r.l2_pct) << ','
        << format_double(r.rms_e3) << ',' << format_double(r.weighted_mean) << ',' << format_double(r.weighted_sum)
        << ',' << format_double(r.mean_fisher) << '\n';
  }
}

std::vector<ShiftRow> read_shift_csv(std::istream& in) {
  std::string line;
  std::size_t number = 1;
  if (!std::getline(in, line)) throw ParseError(1, "missing header");
  std::vector<ShiftRow> rows;
  while (std::getline(in, line)) {
    ++number;
    if (line.empty()) continue;
    auto c = split_csv(line);
    if (c.size() != 7) throw ParseError(number, "expected 7 cells");
    ShiftRow r;
    r.transition = c[0];
    try {
      r.subspace = parse_subspace(c[1]);
    } catch (const ConfigError& e) {
      throw ParseError(number, e.what());
    }
    r.l2_pct = parse_double(c[2], number);
    r.rms_e3 = parse_double(c[3], number);
    r.weighted_mean = parse_double(c[4], number);
    r.weighted_sum = parse_double(c[5], number);
    r.mean_fisher = parse_double(c[6], number);
    rows.push_back(r);
  }
  return rows;
}

double mean(std::span<const double> v) {
  if (v.empty()) return 0.0;
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double stddev(std::span<const double> v) {
  if (v.size() < 2) return 0.0;
  const double m = mean(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

}  // namespace aim
