// Runs every acceptance criterion and prints one PASS/FAIL line per criterion.
// Exit status is 0 only when all of them pass.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "aim/trainer.hpp"
#include "app.hpp"
#include "diff_cases.hpp"
#include "support.hpp"

using namespace aim;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof(buf), f, args...);
  return buf;
}

// ---------------------------------------------------------------- C1

Outcome gradient_correctness() {
  Rng rng(20240611);
  std::size_t primitive_checks = 0, primitive_fail = 0;
  double worst = 0;
  for (int trial = 0; trial < 100; ++trial) {
    auto cases = testing::random_cases(rng);
    for (std::size_t i = 0; i < cases.size(); ++i) {
      const auto r = testing::check_case(cases[i], static_cast<std::uint64_t>(trial * 100 + i));
      worst = std::max(worst, r.max_rel_error);
      primitive_fail += !r.passed;
      ++primitive_checks;
    }
  }
  std::size_t model_fail = 0, refined = 0;
  double model_worst = 0;
  ModelConfig cfg;
  Rng data(77);
  for (int trial = 0; trial < 100; ++trial) {
    cfg.seed = static_cast<std::uint64_t>(trial);
    ToyVLM model(cfg);
    std::vector<Sample> batch;
    for (int i = 0; i < 3; ++i) batch.push_back(testing::random_sample(data, cfg));
    const auto r = testing::model_gradcheck(model, batch, static_cast<std::uint64_t>(1000 + trial), 120);
    model_worst = std::max(model_worst, r.max_rel_error);
    model_fail += !r.passed;
    refined += r.refined;
  }
  return {primitive_fail == 0 && model_fail == 0,
          fmt("%zu primitive checks (worst rel err %.2e), 100 full-loss trials (worst %.2e, %zu kink refinements), "
              "tol 1e-4",
              primitive_checks, worst, model_worst, refined)};
}

// ---------------------------------------------------------------- C2

std::vector<std::uint8_t> oracle_mask(const std::vector<double>& f, const std::vector<Subspace>& tags,
                                      const MaskConfig& cfg) {
  std::vector<std::uint8_t> mask(f.size(), 1);
  for (Subspace s : kSubspaces) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < f.size(); ++i) {
      if (tags[i] == s) idx.push_back(i);
    }
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
      return f[a] != f[b] ? f[a] > f[b] : a < b;
    });
    const double want = cfg.ratio(s) * static_cast<double>(idx.size());
    auto k = static_cast<std::size_t>(std::ceil(want - 1e-9));
    k = std::min(k, idx.size());
    for (std::size_t r = 0; r < k; ++r) mask[idx[r]] = 0;
  }
  return mask;
}

Outcome mask_exactness() {
  Rng rng(31337);
  std::size_t count_fail = 0, oracle_fail = 0, locality_fail = 0, scale_fail = 0;
  const double grid[] = {0.0, 0.1, 0.3, 0.5, 0.7, 1.0};
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 3 + rng.below(400);
    std::vector<Subspace> tags(n);
    for (std::size_t i = 0; i < n; ++i) tags[i] = kSubspaces[i < 3 ? i : rng.below(3)];
    rng.shuffle(tags.begin(), tags.end());
    const bool ties = trial % 2 == 0;
    std::vector<double> f(n);
    for (double& v : f) v = ties ? static_cast<double>(rng.below(5)) : rng.uniform() * std::pow(10.0, rng.uniform(-8, 2));
    MaskConfig cfg;
    for (Subspace s : kSubspaces) {
      const double r = trial % 3 == 0 ? grid[rng.below(6)] : rng.uniform();
      (s == Subspace::kVis ? cfg.vis : s == Subspace::kShared ? cfg.shared : cfg.text) = r;
    }
    const auto m = generate_masks(f, tags, cfg);
    if (m.mask != oracle_mask(f, tags, cfg)) ++oracle_fail;
    for (Subspace s : kSubspaces) {
      std::size_t size = 0, frozen = 0;
      for (std::size_t i = 0; i < n; ++i) {
        if (tags[i] != s) continue;
        ++size;
        frozen += m.mask[i] == 0;
      }
      const auto k = static_cast<std::size_t>(std::ceil(cfg.ratio(s) * static_cast<double>(size) - 1e-9));
      if (frozen != k || m.frozen[static_cast<std::size_t>(s)] != k) ++count_fail;
    }
    // Shuffle the values of one subspace: the other two masks must not move.
    const Subspace moved = kSubspaces[rng.below(3)];
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < n; ++i) {
      if (tags[i] == moved) idx.push_back(i);
    }
    auto g = f;
    std::vector<double> vals;
    for (auto i : idx) vals.push_back(g[i]);
    rng.shuffle(vals.begin(), vals.end());
    for (std::size_t k = 0; k < idx.size(); ++k) g[idx[k]] = vals[k];
    const auto mg = generate_masks(g, tags, cfg);
    for (std::size_t i = 0; i < n; ++i) {
      if (tags[i] != moved && mg.mask[i] != m.mask[i]) {
        ++locality_fail;
        break;
      }
    }
    // Positive rescaling of one subspace leaves its mask unchanged.
    const double c = ties ? std::ldexp(1.0, static_cast<int>(rng.below(21)) - 10) : rng.uniform(0.01, 100.0);
    auto h = f;
    for (auto i : idx) h[i] *= c;
    if (generate_masks(h, tags, cfg).mask != m.mask) ++scale_fail;
  }
  const bool pass = count_fail + oracle_fail + locality_fail + scale_fail == 0;
  return {pass, fmt("1000 trials: count mismatches %zu, sort-oracle mismatches %zu, locality %zu, scale %zu",
                    count_fail, oracle_fail, locality_fail, scale_fail)};
}

// ---------------------------------------------------------------- shared small setup

StreamSpec small_stream() {
  StreamSpec s;
  s.train_per_task = 400;
  s.standard_test_per_task = 100;
  s.comp_test_per_task = 100;
  s.seed = 3;
  return s;
}

MethodConfig small_method(Method m, Optimizer opt) {
  MethodConfig c;
  c.method = m;
  c.optimizer = opt;
  c.lr = opt == Optimizer::kSgd ? 0.05 : 3e-3;
  c.batch_size = 16;
  c.epochs = 2;
  c.fisher_samples = 100;
  c.memory = 50;
  c.seed = 3;
  return c;
}

struct SmallRig {
  Stream stream = build_stream(small_stream());
  ModelConfig model = [this] {
    auto m = model_config_for(stream, ModelConfig{});
    m.seed = 3;
    return m;
  }();
};

// ---------------------------------------------------------------- C3

Outcome frozen_invariance(const SmallRig& rig) {
  std::size_t checked = 0, violations = 0;
  for (auto opt : {Optimizer::kSgd, Optimizer::kAdamw}) {
    const auto r = run_sequence(rig.stream, rig.model, small_method(Method::kAim, opt));
    for (std::size_t k = 0; k + 1 < r.masks.size(); ++k) {
      const auto& mask = r.masks[k].mask;
      for (std::size_t i = 0; i < mask.size(); ++i) {
        if (mask[i] != 0) continue;
        ++checked;
        violations += r.snapshots[k + 2][i] != r.snapshots[k + 1][i];
      }
    }
  }
  auto full = small_method(Method::kAim, Optimizer::kAdamw);
  full.ratios = {1.0, 1.0, 1.0};
  full.weight_decay = 0.05;
  const auto r = run_sequence(rig.stream, rig.model, full);
  bool whole = true;
  for (std::size_t k = 2; k < r.snapshots.size(); ++k) whole = whole && r.snapshots[k] == r.snapshots[1];
  return {violations == 0 && checked > 0 && whole,
          fmt("%zu frozen entries checked over sgd+adamw, %zu changed; rho=(1,1,1) model fixed after task 1: %s",
              checked, violations, whole ? "yes" : "no")};
}

// ---------------------------------------------------------------- C4

Outcome aggregation_laws(const SmallRig& rig) {
  std::size_t monotone_fail = 0, oracle_fail = 0, idempotent_fail = 0, additive_fail = 0;
  for (auto mode : {Aggregation::kMax, Aggregation::kSum}) {
    auto cfg = small_method(Method::kAim, Optimizer::kAdamw);
    cfg.aggregation = mode;
    std::vector<std::vector<double>> per_task, agg;
    RunHooks hooks;
    hooks.on_task_end = [&](const TaskEnd& e) {
      per_task.push_back(e.state->fisher.per_task);
      agg.push_back(e.state->fisher.aggregated);
    };
    run_sequence(rig.stream, rig.model, cfg, hooks);
    std::vector<double> oracle(per_task[0].size(), 0.0);
    for (std::size_t k = 0; k < per_task.size(); ++k) {
      for (std::size_t i = 0; i < oracle.size(); ++i) {
        oracle[i] = mode == Aggregation::kMax ? std::max(oracle[i], per_task[k][i]) : oracle[i] + per_task[k][i];
        if (mode == Aggregation::kMax && k > 0 && agg[k][i] < agg[k - 1][i]) ++monotone_fail;
      }
      if (agg[k] != oracle) ++oracle_fail;
    }
    if (mode == Aggregation::kMax) {
      FisherState st;
      aggregate(st, agg.back(), Aggregation::kMax);
      aggregate(st, agg.back(), Aggregation::kMax);
      if (st.aggregated != agg.back()) ++idempotent_fail;
    }
  }
  Rng rng(4);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 1 + rng.below(50);
    std::vector<double> a(n), b(n), c(n);
    for (std::size_t i = 0; i < n; ++i) {
      a[i] = rng.uniform();
      b[i] = rng.uniform();
      c[i] = rng.uniform();
    }
    FisherState mx, sm;
    for (const auto* v : {&a, &b, &c}) {
      const auto before = mx.aggregated;
      aggregate(mx, *v, Aggregation::kMax);
      for (std::size_t i = 0; i < before.size(); ++i) monotone_fail += mx.aggregated[i] < before[i];
      aggregate(sm, *v, Aggregation::kSum);
    }
    auto again = mx;
    aggregate(again, mx.aggregated, Aggregation::kMax);
    idempotent_fail += again.aggregated != mx.aggregated;
    for (std::size_t i = 0; i < n; ++i) additive_fail += sm.aggregated[i] != (a[i] + b[i]) + c[i];
  }
  return {monotone_fail + oracle_fail + idempotent_fail + additive_fail == 0,
          fmt("estimated Fisher over 5 tasks and 1000 random triples: monotone %zu, oracle %zu, idempotent %zu, "
              "additive %zu violations",
              monotone_fail, oracle_fail, idempotent_fail, additive_fail)};
}

// ---------------------------------------------------------------- C5

Outcome metric_oracles() {
  auto from_rows = [](const std::vector<std::vector<double>>& rows) {
    AccuracyMatrix m(rows.size(), "standard");
    for (std::size_t i = 0; i < rows.size(); ++i) {
      for (std::size_t k = 0; k < rows[i].size(); ++k) m.set(i, i + k, rows[i][k]);
    }
    return m;
  };
  const bool hand = average_performance(from_rows({{10, 20, 30}, {40, 50}, {70}})) == 50.0 &&
                    average_forgetting(from_rows({{50, 40, 30}, {60, 50}, {80}})) == 15.0 &&
                    average_forgetting(from_rows({{40, 50}, {70}})) == -10.0;
  Rng rng(55);
  std::size_t mismatches = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 2 + rng.below(9);
    std::vector<std::vector<double>> a(n, std::vector<double>(n));
    AccuracyMatrix m(n, "standard");
    for (std::size_t j = 0; j < n; ++j) {
      for (std::size_t i = 0; i <= j; ++i) {
        a[i][j] = trial % 2 ? 100.0 * rng.uniform() : static_cast<double>(rng.below(101));
        m.set(i, j, a[i][j]);
      }
    }
    double ap = 0;
    for (std::size_t i = 0; i < n; ++i) ap += a[i][n - 1];
    ap /= static_cast<double>(n);
    double af = 0;
    for (std::size_t i = 0; i + 1 < n; ++i) {
      double best = -1;
      for (std::size_t j = i; j + 1 < n; ++j) best = std::max(best, a[i][j]);
      af += best - a[i][n - 1];
    }
    af /= static_cast<double>(n - 1);
    mismatches += average_performance(m) != ap || average_forgetting(m) != af;
  }
  return {hand && mismatches == 0,
          fmt("hand cases AP=50 AF=15 AF=-10: %s; 1000 random matrices, %zu exact mismatches", hand ? "ok" : "wrong",
              mismatches)};
}

// ---------------------------------------------------------------- C6

Outcome baseline_degeneracies(const SmallRig& rig) {
  std::size_t differing = 0;
  for (auto opt : {Optimizer::kSgd, Optimizer::kAdamw}) {
    const auto van = run_sequence(rig.stream, rig.model, small_method(Method::kVanilla, opt));
    auto ewc = small_method(Method::kEwc, opt);
    ewc.ewc_lambda = 0.0;
    auto aim = small_method(Method::kAim, opt);
    aim.ratios = {0.0, 0.0, 0.0};
    aim.memory = 0;
    for (const auto& cfg : {ewc, aim}) {
      const auto r = run_sequence(rig.stream, rig.model, cfg);
      differing += r.snapshots != van.snapshots || !(r.standard == van.standard) || !(r.comp == van.comp);
    }
  }
  return {differing == 0, fmt("ewc(lambda=0) and aim(rho=0, M=0) vs vanilla, sgd+adamw: %zu of 4 trajectories differ",
                              differing)};
}

// ---------------------------------------------------------------- C7

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

Outcome determinism() {
  app::RunConfig cfg;
  cfg.stream = small_stream();
  cfg.stream.num_tasks = 3;
  cfg.method = small_method(Method::kAim, Optimizer::kAdamw);
  cfg.seeds = {1, 2};
  const fs::path root = fs::temp_directory_path() / ("aim_acceptance_" + std::to_string(::getpid()));
  std::ostringstream sink;
  app::cmd_train(cfg, root / "a", sink);
  app::cmd_train(cfg, root / "b", sink);
  std::size_t files = 0, differ = 0;
  for (auto seed : cfg.seeds) {
    for (const char* name : {"matrix_standard.csv", "matrix_comp.csv", "shift.csv"}) {
      const auto rel = fs::path("seed_" + std::to_string(seed)) / name;
      const auto a = slurp(root / "a" / rel), b = slurp(root / "b" / rel);
      ++files;
      differ += a.empty() || a != b;
    }
  }
  fs::remove_all(root);
  return {differ == 0, fmt("cmd_train twice, 2 seeds: %zu of %zu CSV files differ", differ, files)};
}

// ---------------------------------------------------------------- experiments (C8-C13)

struct Res {
  double ap, af, cap, caf, vis, shared;
  bool shifts_finite;
  std::size_t shift_rows;
};

class Experiments {
 public:
  explicit Experiments(app::RunConfig cfg) : cfg_(std::move(cfg)) {}

  const std::vector<Res>& runs(Method m, const std::string& order = "default",
                               std::function<void(MethodConfig&)> edit = {}, const std::string& tag = "") {
    const std::string key = std::string(to_string(m)) + "/" + order + "/" + tag;
    auto it = cache_.find(key);
    if (it != cache_.end()) return it->second;
    std::vector<Res> out;
    for (auto seed : cfg_.seeds) {
      app::RunConfig c = cfg_;
      c.order = order;
      c.method.method = m;
      if (edit) edit(c.method);
      const Stream stream = app::stream_for(c, seed, c.stream.comp_fold);
      const ModelConfig model = app::model_for(c, stream, seed);
      MethodConfig mc = c.method;
      mc.seed = seed;
      const auto r = run_sequence(stream, model, mc);
      Res x{average_performance(r.standard), average_forgetting(r.standard), average_performance(r.comp),
            average_forgetting(r.comp), 0, 0, true, r.shifts.size()};
      std::size_t n = 0;
      for (const auto& row : r.shifts) {
        x.shifts_finite = x.shifts_finite && std::isfinite(row.l2_pct) && std::isfinite(row.rms_e3) &&
                          std::isfinite(row.weighted_mean) && std::isfinite(row.weighted_sum) &&
                          std::isfinite(row.mean_fisher);
        if (row.subspace == Subspace::kVis) x.vis += row.l2_pct;
        if (row.subspace == Subspace::kShared) {
          x.shared += row.l2_pct;
          ++n;
        }
      }
      x.vis /= static_cast<double>(n);
      x.shared /= static_cast<double>(n);
      out.push_back(x);
    }
    return cache_.emplace(key, std::move(out)).first->second;
  }

  std::size_t tasks() const { return cfg_.stream.num_tasks; }

 private:
  app::RunConfig cfg_;
  std::map<std::string, std::vector<Res>> cache_;
};

double avg(const std::vector<Res>& r, double Res::*f) {
  double s = 0;
  for (const auto& x : r) s += x.*f;
  return s / static_cast<double>(r.size());
}

std::function<void(MethodConfig&)> variant(MaskVariant v) {
  return [v](MethodConfig& c) { c.variant = v; };
}

Outcome forgetting_exists(Experiments& ex) {
  const double af = avg(ex.runs(Method::kVanilla), &Res::af);
  return {af > 5.0, fmt("vanilla mean standard AF %.2f (needs > 5)", af)};
}

Outcome aim_beats_vanilla(Experiments& ex) {
  const auto& v = ex.runs(Method::kVanilla);
  const auto& a = ex.runs(Method::kAim);
  const bool pass = avg(a, &Res::ap) > avg(v, &Res::ap) && avg(a, &Res::af) < avg(v, &Res::af) &&
                    avg(a, &Res::cap) > avg(v, &Res::cap) && avg(a, &Res::caf) < avg(v, &Res::caf);
  return {pass, fmt("standard AP %.2f vs %.2f, AF %.2f vs %.2f; comp AP %.2f vs %.2f, AF %.2f vs %.2f (aim vs vanilla)",
                    avg(a, &Res::ap), avg(v, &Res::ap), avg(a, &Res::af), avg(v, &Res::af), avg(a, &Res::cap),
                    avg(v, &Res::cap), avg(a, &Res::caf), avg(v, &Res::caf))};
}

Outcome asymmetry_matters(Experiments& ex) {
  const auto& a = ex.runs(Method::kAim);
  const auto& sw = ex.runs(Method::kAim, "default", variant(MaskVariant::kSwapped), "swapped");
  const auto& un = ex.runs(Method::kAim, "default", variant(MaskVariant::kUniform), "uniform");
  std::size_t sw_ok = 0, un_ok = 0;
  for (std::size_t s = 0; s < a.size(); ++s) {
    sw_ok += sw[s].af >= a[s].af;
    un_ok += un[s].ap <= a[s].ap;
  }
  const bool means = avg(sw, &Res::af) >= avg(a, &Res::af) && avg(un, &Res::ap) <= avg(a, &Res::ap);
  const std::size_t need = a.size() >= 5 ? 4 : a.size();
  return {means && sw_ok >= need && un_ok >= need,
          fmt("AF swapped %.2f vs aim %.2f (%zu/%zu seeds); AP uniform %.2f vs aim %.2f (%zu/%zu seeds)",
              avg(sw, &Res::af), avg(a, &Res::af), sw_ok, a.size(), avg(un, &Res::ap), avg(a, &Res::ap), un_ok,
              a.size())};
}

Outcome memory_helps(Experiments& ex) {
  std::vector<double> ap;
  std::string detail = "AIM AP over M={0,50,200,1000}:";
  for (std::size_t m : {0, 50, 200, 1000}) {
    const auto& r = m == 200 ? ex.runs(Method::kAim)
                             : ex.runs(Method::kAim, "default", [m](MethodConfig& c) { c.memory = m; },
                                       "memory" + std::to_string(m));
    ap.push_back(avg(r, &Res::ap));
    detail += fmt(" %.2f", ap.back());
  }
  std::size_t inversions = 0;
  double worst = 0;
  for (std::size_t i = 1; i < ap.size(); ++i) {
    if (ap[i] < ap[i - 1]) {
      ++inversions;
      worst = std::max(worst, ap[i - 1] - ap[i]);
    }
  }
  detail += fmt(" (%zu inversions, largest %.2f)", inversions, worst);
  return {inversions == 0 || (inversions == 1 && worst <= 0.5), detail};
}

Outcome order_robustness(Experiments& ex) {
  std::vector<double> v, a;
  for (const char* o : {"default", "reverse", "random"}) {
    v.push_back(avg(ex.runs(Method::kVanilla, o), &Res::ap));
    a.push_back(avg(ex.runs(Method::kAim, o), &Res::ap));
  }
  return {stddev(a) < stddev(v),
          fmt("AP over default/reverse/random: vanilla %.2f %.2f %.2f (sd %.2f), aim %.2f %.2f %.2f (sd %.2f)", v[0],
              v[1], v[2], stddev(v), a[0], a[1], a[2], stddev(a))};
}

Outcome shift_diagnostics(Experiments& ex) {
  const auto& v = ex.runs(Method::kVanilla);
  bool finite = true, rows = true;
  for (const auto& x : v) {
    finite = finite && x.shifts_finite;
    rows = rows && x.shift_rows == 3 * ex.tasks();
  }
  for (const auto& x : ex.runs(Method::kAim)) finite = finite && x.shifts_finite;
  const double sh = avg(v, &Res::shared), vis = avg(v, &Res::vis);
  return {finite && rows && sh > vis,
          fmt("all rows finite: %s, 3 rows per transition: %s; vanilla mean L2 shift shared %.2f%% vs vis %.2f%%",
              finite ? "yes" : "no", rows ? "yes" : "no", sh, vis)};
}

}  // namespace

int main(int argc, char** argv) {
  const fs::path config = argc > 1 ? fs::path(argv[1]) : fs::path(AIM_EXPERIMENT_CONFIG);
  int failed = 0;
  auto run = [&](int id, const char* name, const std::function<Outcome()>& fn, double limit_s = 0) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (limit_s > 0 && secs > limit_s) {
      o.pass = false;
      o.detail += fmt(" [over the %.0f s budget]", limit_s);
    }
    failed += !o.pass;
    std::printf("C%-2d %s  %-22s %s (%.1f s)\n", id, o.pass ? "PASS" : "FAIL", name, o.detail.c_str(), secs);
    std::fflush(stdout);
  };

  run(1, "gradient correctness", gradient_correctness, 30);
  run(2, "mask exactness", mask_exactness, 10);
  const SmallRig rig;
  run(3, "frozen invariance", [&] { return frozen_invariance(rig); }, 120);
  run(4, "aggregation laws", [&] { return aggregation_laws(rig); });
  run(5, "metric oracles", metric_oracles);
  run(6, "baseline degeneracies", [&] { return baseline_degeneracies(rig); });
  run(7, "determinism", determinism);

  Experiments ex(app::load_config(config));
  run(8, "forgetting exists", [&] { return forgetting_exists(ex); });
  run(9, "aim beats vanilla", [&] { return aim_beats_vanilla(ex); });
  run(10, "asymmetry matters", [&] { return asymmetry_matters(ex); });
  run(11, "memory helps", [&] { return memory_helps(ex); });
  run(12, "order robustness", [&] { return order_robustness(ex); });
  run(13, "shift diagnostics", [&] { return shift_diagnostics(ex); });

  std::printf("%d of 13 criteria passed\n", 13 - failed);
  return failed == 0 ? 0 : 1;
}
