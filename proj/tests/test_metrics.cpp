#include <algorithm>
#include <cmath>
#include <sstream>
#include <vector>

#include "aim/error.hpp"
#include "aim/metrics.hpp"
#include "aim/model.hpp"
#include "aim/rng.hpp"
#include "doctest.h"

using namespace aim;

namespace {

// Rows listed by task i: values for j = i..N-1.
AccuracyMatrix from_rows(const std::vector<std::vector<double>>& rows) {
  AccuracyMatrix m(rows.size(), "standard");
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t k = 0; k < rows[i].size(); ++k) m.set(i, i + k, rows[i][k]);
  }
  return m;
}

struct Dense {
  std::vector<std::vector<double>> a;  // a[i][j]
};

double oracle_ap(const Dense& d) {
  const std::size_t n = d.a.size();
  double s = 0;
  for (std::size_t i = 0; i < n; ++i) s += d.a[i][n - 1];
  return s / static_cast<double>(n);
}

double oracle_af(const Dense& d) {
  const std::size_t n = d.a.size();
  std::vector<double> drops;
  for (std::size_t i = 0; i + 1 < n; ++i) {
    auto first = d.a[i].begin() + static_cast<std::ptrdiff_t>(i);
    auto last = d.a[i].begin() + static_cast<std::ptrdiff_t>(n - 1);
    drops.push_back(*std::max_element(first, last) - d.a[i][n - 1]);
  }
  double s = 0;
  for (double x : drops) s += x;
  return s / static_cast<double>(n - 1);
}

}  // namespace

TEST_CASE("AP and AF hand cases") {
  CHECK(average_performance(from_rows({{10, 20, 30}, {40, 50}, {70}})) == 50.0);
  auto m = from_rows({{50, 40, 30}, {60, 50}, {80}});
  CHECK(average_forgetting(m) == 15.0);
  CHECK(average_forgetting(from_rows({{40, 50}, {70}})) == -10.0);
  auto single = from_rows({{42}});
  CHECK(average_performance(single) == 42.0);
  CHECK_THROWS_AS(average_forgetting(single), EvaluationError);
  auto f = forgetting_or_zero(single);
  CHECK(f.value == 0.0);
  CHECK_FALSE(f.defined);
  CHECK(average_performance(from_rows({{7, 7, 7}, {7, 7}, {7}})) == 7.0);
}

TEST_CASE("incomplete matrices are rejected") {
  AccuracyMatrix m(3, "standard");
  m.set(0, 0, 10);
  CHECK_FALSE(m.complete());
  CHECK_THROWS_AS(average_performance(m), ContractError);
  CHECK_THROWS_AS(average_forgetting(m), ContractError);
  CHECK_THROWS_AS(m.set(2, 1, 5.0), IndexError);
  CHECK_THROWS_AS(m.set(0, 1, 101.0), ContractError);
}

TEST_CASE("AP/AF agree with brute force on 1000 random matrices") {
  Rng rng(5);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 2 + rng.below(9);
    Dense d;
    d.a.assign(n, std::vector<double>(n, 0.0));
    AccuracyMatrix m(n, "standard");
    for (std::size_t j = 0; j < n; ++j) {
      for (std::size_t i = 0; i <= j; ++i) {
        const double v = trial % 3 == 0 ? static_cast<double>(rng.below(101)) : 100.0 * rng.uniform();
        d.a[i][j] = v;
        m.set(i, j, v);
      }
    }
    CHECK(average_performance(m) == oracle_ap(d));
    CHECK(average_forgetting(m) == oracle_af(d));
  }
}

TEST_CASE("raising a row's pre-final entries raises AF by c/(N-1)") {
  Rng rng(6);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 2 + rng.below(6);
    AccuracyMatrix m(n, "standard"), lifted(n, "standard");
    const std::size_t row = rng.below(n - 1);
    const double c = 1.0 + static_cast<double>(rng.below(10));
    for (std::size_t j = 0; j < n; ++j) {
      for (std::size_t i = 0; i <= j; ++i) {
        const double v = static_cast<double>(rng.below(80));
        m.set(i, j, v);
        lifted.set(i, j, (i == row && j + 1 < n) ? v + c : v);
      }
    }
    const double diff = average_forgetting(lifted) - average_forgetting(m);
    CHECK(diff * static_cast<double>(n - 1) == doctest::Approx(c).epsilon(1e-12));
  }
}

TEST_CASE("shift diagnostics") {
  const std::vector<std::size_t> two{0, 1};
  CHECK(l2_shift_percent(std::vector<double>{6, 8}, std::vector<double>{3, 4}, two) == 100.0);
  CHECK(l2_shift_percent(std::vector<double>{3, 4}, std::vector<double>{3, 4}, two) == 0.0);
  CHECK(l2_shift_percent(std::vector<double>{5, 6}, std::vector<double>{3, 4}, two) ==
        doctest::Approx(2 * l2_shift_percent(std::vector<double>{4, 5}, std::vector<double>{3, 4}, two)));
  CHECK_THROWS_AS(l2_shift_percent(std::vector<double>{1, 1}, std::vector<double>{0, 0}, two), EvaluationError);

  CHECK(rms_shift_e3(std::vector<double>{0.001, 0.001}, std::vector<double>{0, 0}, two) == doctest::Approx(1.0));
  CHECK(rms_shift_e3(std::vector<double>{1, 1}, std::vector<double>{1, 1}, two) == 0.0);
  CHECK(rms_shift_e3(std::vector<double>{-0.5, -0.5}, std::vector<double>{0, 0}, two) == doctest::Approx(500.0));

  const std::vector<double> f{2, 3};
  CHECK(weighted_shift_mean(std::vector<double>{1, 2}, std::vector<double>{0, 0}, f, two) == 7.0);
  CHECK(weighted_shift_sum(std::vector<double>{1, 2}, std::vector<double>{0, 0}, f, two) == 14.0);
  CHECK(weighted_shift_mean(std::vector<double>{1, 2}, std::vector<double>{1, 2}, f, two) == 0.0);
  CHECK(weighted_shift_mean(std::vector<double>{1, 2}, std::vector<double>{0, 0}, std::vector<double>{4, 6}, two) == 14.0);
}

TEST_CASE("shift rows cover every subspace and stay finite") {
  ModelConfig cfg;
  cfg.feature_dim = 4;
  cfg.shared_dim = 6;
  cfg.vocab_size = 48;
  ToyVLM model(cfg);
  auto before = model.registry().flat_values();
  auto now = before;
  Rng rng(2);
  for (double& v : now) v += 0.01 * rng.normal();
  std::vector<double> fisher(now.size());
  for (double& v : fisher) v = rng.uniform();
  auto rows = shift_rows("T1->T2", now, before, fisher, model.registry());
  REQUIRE(rows.size() == 3);
  for (const auto& r : rows) {
    CHECK(std::isfinite(r.l2_pct));
    CHECK(r.l2_pct > 0);
    CHECK(std::isfinite(r.rms_e3));
    CHECK(std::isfinite(r.weighted_mean));
    CHECK(r.mean_fisher > 0);
  }
  std::ostringstream out;
  write_shift_csv(out, rows);
  std::istringstream in(out.str());
  CHECK(read_shift_csv(in) == rows);
}

TEST_CASE("matrix CSV round trip") {
  Rng rng(8);
  AccuracyMatrix m(4, "comp");
  for (std::size_t j = 0; j < 4; ++j) {
    for (std::size_t i = 0; i <= j; ++i) m.set(i, j, 100.0 * rng.uniform());
  }
  std::vector<std::string> names{"count", "color", "exists", "more"};
  std::ostringstream out;
  write_matrix_csv(out, m, names);
  std::istringstream in(out.str());
  std::vector<std::string> back_names;
  auto back = read_matrix_csv(in, "comp", &back_names);
  CHECK(back == m);
  CHECK(back_names == names);
  std::istringstream bad("after,a,b\na,1,2\nb,3,4\n");
  CHECK_THROWS_AS(read_matrix_csv(bad, "standard"), ParseError);
}

TEST_CASE("mean and stddev") {
  const std::vector<double> v{2, 4, 4, 4, 5, 5, 7, 9};
  CHECK(mean(v) == 5.0);
  CHECK(stddev(v) == doctest::Approx(std::sqrt(32.0 / 7.0)));
  CHECK(stddev(std::vector<double>{3}) == 0.0);
}
