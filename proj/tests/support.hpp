#pragma once

#include <algorithm>
#include <cstdint>
#include <vector>

#include "aim/gradcheck.hpp"
#include "aim/model.hpp"
#include "aim/rng.hpp"

namespace aim::testing {

inline Sample random_sample(Rng& rng, const ModelConfig& cfg) {
  Sample s;
  s.regions.resize(cfg.region_count * cfg.feature_dim);
  for (double& v : s.regions) v = rng.normal();
  for (std::size_t t = 0; t < cfg.question_len; ++t) s.question.push_back(static_cast<int>(rng.below(cfg.vocab_size)));
  s.answer = static_cast<int>(rng.below(cfg.answer_classes));
  return s;
}

// Finite-difference check of the model's mean batch loss at the current
// parameters, over `coords` randomly chosen coordinates plus every vis one.
inline diff::GradCheckReport model_gradcheck(const ToyVLM& model, std::span<const Sample> batch, std::uint64_t seed,
                                             std::size_t coords) {
  ToyVLM probe(model.config());
  const auto theta = model.registry().flat_values();
  probe.registry().set_flat_values(theta);
  const auto analytic = probe.loss_and_grads(batch).grads;

  Rng rng(seed);
  std::vector<std::size_t> pick = probe.registry().indices(Subspace::kVis);
  for (std::size_t i = 0; i < coords; ++i) pick.push_back(rng.below(theta.size()));
  std::sort(pick.begin(), pick.end());
  pick.erase(std::unique(pick.begin(), pick.end()), pick.end());
  std::vector<double> sub_theta, sub_grad;
  for (auto i : pick) {
    sub_theta.push_back(theta[i]);
    sub_grad.push_back(analytic[i]);
  }
  auto full = theta;
  auto f = [&](std::span<const double> x) {
    for (std::size_t k = 0; k < pick.size(); ++k) full[pick[k]] = x[k];
    probe.registry().set_flat_values(full);
    const double l = probe.loss(batch);
    for (std::size_t k = 0; k < pick.size(); ++k) full[pick[k]] = theta[pick[k]];
    return l;
  };
  diff::GradCheckOptions opt;
  opt.step = 1e-5;
  opt.tolerance = 1e-4;
  opt.refinements = 2;
  return diff::finite_diff_check(f, sub_theta, sub_grad, opt);
}

}  // namespace aim::testing
