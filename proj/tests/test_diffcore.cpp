#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "aim/error.hpp"
#include "aim/gradcheck.hpp"
#include "aim/rng.hpp"
#include "aim/tape.hpp"
#include "diff_cases.hpp"
#include "doctest.h"

using aim::diff::GradCheckOptions;
using aim::diff::ParamGrads;
using aim::diff::Tape;
using aim::diff::Tensor;
using aim::diff::Var;
using aim::testing::check_case;
using aim::testing::random_cases;
using aim::testing::random_tensor;

namespace {

std::vector<double> values(const Tape& tape, Var v) {
  auto d = tape.value(v).data();
  return {d.begin(), d.end()};
}

}  // namespace

TEST_CASE("matmul values") {
  Tape tape;
  Var id = tape.constant(Tensor::matrix(2, 2, {1, 0, 0, 1}));
  Var b = tape.constant(Tensor::matrix(2, 2, {5, 6, 7, 8}));
  CHECK(values(tape, tape.matmul(id, b)) == std::vector<double>{5, 6, 7, 8});

  Var a = tape.constant(Tensor::matrix(2, 2, {1, 2, 3, 4}));
  CHECK(values(tape, tape.matmul(a, b)) == std::vector<double>{19, 22, 43, 50});

  Var zero = tape.constant(Tensor({2, 2}));
  CHECK(values(tape, tape.matmul(zero, a)) == std::vector<double>{0, 0, 0, 0});
}

TEST_CASE("matmul shape mismatch names both shapes") {
  Tape tape;
  Var a = tape.constant(Tensor({2, 3}));
  Var b = tape.constant(Tensor({2, 2}));
  try {
    tape.matmul(a, b);
    FAIL("expected DimensionError");
  } catch (const aim::DimensionError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("[2x3]") != std::string::npos);
    CHECK(msg.find("[2x2]") != std::string::npos);
  }
}

TEST_CASE("elementwise primitives") {
  Tape tape;
  Var x = tape.constant(Tensor({3}, {-1, 0, 2}));
  CHECK(values(tape, tape.relu(x)) == std::vector<double>{0, 0, 2});
  CHECK(values(tape, tape.add(x, tape.constant(Tensor({3})))) == std::vector<double>{-1, 0, 2});
  CHECK(values(tape, tape.scale(tape.constant(Tensor({2}, {1, 2})), 3.0)) == std::vector<double>{3, 6});
  CHECK_THROWS_AS(tape.add(x, tape.constant(Tensor({2}))), aim::DimensionError);
  CHECK_THROWS_AS(tape.scale(x, std::nan("")), aim::ContractError);
}

TEST_CASE("relu passes zero gradient at exactly zero") {
  Tensor x({3}, {-1, 0, 2});
  Tape tape;
  Var v = tape.parameter(x);
  Var y = tape.relu(v);
  Var loss = tape.sum_squares(tape.add(y, tape.constant(Tensor({3}, {1, 1, 1}))));
  tape.backward(loss);
  CHECK(x.grad()[0] == 0.0);
  CHECK(x.grad()[1] == 0.0);
  CHECK(x.grad()[2] == doctest::Approx(6.0));
}

TEST_CASE("mean pool") {
  Tape tape;
  CHECK(values(tape, tape.mean_pool(tape.constant(Tensor::matrix(2, 2, {2, 4, 4, 8})))) ==
        std::vector<double>{3, 6});
  CHECK(values(tape, tape.mean_pool(tape.constant(Tensor::matrix(1, 2, {1.25, -7})))) ==
        std::vector<double>{1.25, -7});
  CHECK(values(tape, tape.mean_pool(tape.constant(Tensor::matrix(3, 2, {5, 1, 5, 1, 5, 1})))) ==
        std::vector<double>{5, 1});
  CHECK_THROWS_AS(tape.group_mean_pool(tape.constant(Tensor({2, 2})), 0), aim::ContractError);

  Tensor x = Tensor::matrix(2, 2, {2, 4, 4, 8});
  Tape t2;
  Var p = t2.mean_pool(t2.parameter(x));
  t2.backward(t2.sum_squares(p));
  // d/dx of (mean)^2 = 2*mean/r
  CHECK(x.grad()[0] == doctest::Approx(3.0));
  CHECK(x.grad()[3] == doctest::Approx(6.0));
}

TEST_CASE("embedding lookup gathers and scatter-adds") {
  Tensor table = Tensor::matrix(3, 2, {1, 2, 3, 4, 5, 6});
  Tape tape;
  Var t = tape.parameter(table);
  const int first[] = {0};
  CHECK(values(tape, tape.embedding(t, first)) == std::vector<double>{1, 2});
  const int order[] = {2, 0};
  CHECK(values(tape, tape.embedding(t, order)) == std::vector<double>{5, 6, 1, 2});
  const int bad[] = {3};
  CHECK_THROWS_AS(tape.embedding(t, bad), aim::IndexError);

  Tape t2;
  const int twice[] = {1, 1};
  Var rows = t2.embedding(t2.parameter(table), twice);
  Var loss = t2.sum_squares(t2.add(rows, t2.constant(Tensor({2, 2}, {0, 0, 0, 0}))));
  t2.backward(loss);
  // each lookup contributes 2*row; repeated id doubles it
  CHECK(table.grad()[2] == doctest::Approx(4 * 3.0));
  CHECK(table.grad()[3] == doctest::Approx(4 * 4.0));
  CHECK(table.grad()[0] == 0.0);
}

TEST_CASE("softmax cross entropy") {
  Tape tape;
  const int zero[] = {0};
  Var uniform = tape.constant(Tensor({4}, {0.7, 0.7, 0.7, 0.7}));
  CHECK(tape.value(tape.softmax_cross_entropy(uniform, zero)).item() == doctest::Approx(std::log(4.0)).epsilon(1e-12));
  Var two = tape.constant(Tensor({2}, {2, 0}));
  // ln(1 + e^-2) evaluated independently
  const double expected = std::log1p(std::exp(-2.0));
  CHECK(expected == doctest::Approx(0.12693).epsilon(1e-4));
  CHECK(tape.value(tape.softmax_cross_entropy(two, zero)).item() == doctest::Approx(expected).epsilon(1e-13));
  Var huge = tape.constant(Tensor({2}, {1000, 0}));
  const double big = tape.value(tape.softmax_cross_entropy(huge, zero)).item();
  CHECK(std::isfinite(big));
  CHECK(big == doctest::Approx(0.0));
  const int out_of_range[] = {2};
  CHECK_THROWS_AS(tape.softmax_cross_entropy(two, out_of_range), aim::IndexError);

  Tensor logits({3}, {0.5, -1.0, 2.0});
  Tape t2;
  const int label[] = {1};
  t2.backward(t2.softmax_cross_entropy(t2.parameter(logits), label));
  double denom = 0;
  for (double z : logits.data()) denom += std::exp(z);
  for (int c = 0; c < 3; ++c) {
    const double p = std::exp(logits[static_cast<std::size_t>(c)]) / denom;
    CHECK(logits.grad()[static_cast<std::size_t>(c)] == doctest::Approx(p - (c == 1 ? 1.0 : 0.0)).epsilon(1e-12));
  }
}

TEST_CASE("backward basics") {
  Tensor x({3}, {1.5, -2.0, 0.25});
  Tensor unused({2}, {3, 4});
  Tape tape;
  Var vx = tape.parameter(x);
  tape.parameter(unused);
  tape.backward(tape.sum_squares(vx));
  CHECK(x.grad()[0] == 3.0);
  CHECK(x.grad()[1] == -4.0);
  CHECK(x.grad()[2] == 0.5);
  CHECK(unused.grad()[0] == 0.0);
  CHECK(unused.grad()[1] == 0.0);

  CHECK_THROWS_AS(tape.backward(vx), aim::ContractError);
}

TEST_CASE("finite difference check on primitives, 100 random trials") {
  aim::Rng rng(20240611);
  std::size_t checked = 0;
  for (int trial = 0; trial < 100; ++trial) {
    auto cases = random_cases(rng);
    for (std::size_t i = 0; i < cases.size(); ++i) {
      auto report = check_case(cases[i], static_cast<std::uint64_t>(trial * 100 + i));
      INFO("trial " << trial << " case " << i << " rel err " << report.max_rel_error);
      CHECK(report.passed);
      ++checked;
    }
  }
  CHECK(checked == 1300);
}

TEST_CASE("finite_diff_check controls") {
  std::vector<double> theta = {0.3, -1.2, 2.5, 0.0};
  auto f = [](std::span<const double> x) {
    double s = 0;
    for (double v : x) s += v * v;
    return s;
  };
  std::vector<double> grad;
  for (double v : theta) grad.push_back(2 * v);
  GradCheckOptions opt;
  opt.tolerance = 1e-6;
  CHECK(aim::diff::finite_diff_check(f, theta, grad, opt).passed);

  // relu backward rule that forgets to gate by the input sign
  std::vector<double> x = {0.8, -0.6, 1.1, -0.2};
  auto g = [](std::span<const double> v) {
    double s = 0;
    for (double e : v) s += e > 0 ? e * 3.0 : 0.0;
    return s;
  };
  std::vector<double> corrupted(x.size(), 3.0);
  CHECK_FALSE(aim::diff::finite_diff_check(g, x, corrupted, {}).passed);

  auto nan_f = [](std::span<const double>) { return std::nan(""); };
  CHECK_THROWS_AS(aim::diff::finite_diff_check(nan_f, theta, grad, {}), aim::EvaluationError);
  GradCheckOptions bad;
  bad.step = 0.0;
  CHECK_THROWS_AS(aim::diff::finite_diff_check(f, theta, grad, bad), aim::ContractError);
}

TEST_CASE("backward is deterministic and has no hidden state") {
  aim::Rng rng(7);
  Tensor w = random_tensor(rng, {6, 5});
  Tensor b = random_tensor(rng, {5});
  Tensor x = random_tensor(rng, {4, 6});
  const int labels[] = {0, 3, 4, 1};
  auto run = [&]() {
    Tape tape;
    Var h = tape.tanh(tape.add_row_bias(tape.matmul(tape.constant(x), tape.parameter(w)), tape.parameter(b)));
    tape.backward(tape.softmax_cross_entropy(h, labels));
    std::vector<double> g(w.grad().begin(), w.grad().end());
    g.insert(g.end(), b.grad().begin(), b.grad().end());
    return g;
  };
  auto first = run();
  w.zero_grad();
  b.zero_grad();
  auto second = run();
  CHECK(first == second);

  Tape tape;
  Var h = tape.relu(tape.matmul(tape.constant(x), tape.parameter(w)));
  Var loss = tape.sum_squares(h);
  tape.backward(loss);
  std::vector<double> g1(w.grad().begin(), w.grad().end());
  tape.backward(loss);
  std::vector<double> g2(w.grad().begin(), w.grad().end());
  CHECK(g1 == g2);
}

TEST_CASE("read-only parameters require a keep-gradients tape") {
  const Tensor w({2}, {1, 2});
  Tape writes;
  CHECK_THROWS_AS(writes.parameter(w), aim::ContractError);
  Tape keeps(ParamGrads::kKeep);
  Var v = keeps.parameter(w);
  keeps.backward(keeps.sum_squares(v));
  CHECK(keeps.grad(v)[1] == 4.0);
  CHECK(w.grad().empty());
}

TEST_CASE("refinement rescues a step that straddles a kink") {
  auto f = [](std::span<const double> x) { return std::max(0.0, x[0] + 3e-6); };
  const std::vector<double> theta{0.0}, grad{1.0};
  GradCheckOptions opt;
  auto plain = aim::diff::finite_diff_check(f, theta, grad, opt);
  CHECK_FALSE(plain.passed);
  opt.refinements = 1;
  auto refined = aim::diff::finite_diff_check(f, theta, grad, opt);
  CHECK(refined.passed);
  CHECK(refined.refined == 1);
  const std::vector<double> wrong{2.0};
  CHECK_FALSE(aim::diff::finite_diff_check(f, theta, wrong, opt).passed);
}
