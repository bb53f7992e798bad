#include "aim/fisher.hpp"

#include <algorithm>
#include <numeric>

#include "aim/error.hpp"
#include "aim/kernels.hpp"
#include "aim/rng.hpp"

namespace aim {

std::string_view to_string(Aggregation a) { return a == Aggregation::kMax ? "max" : "sum"; }

Aggregation parse_aggregation(std::string_view name) {
  if (name == "max") return Aggregation::kMax;
  if (name == "sum") return Aggregation::kSum;
  throw ConfigError("unknown aggregation '" + std::string(name) + "'");
}

std::vector<std::size_t> fisher_subset(std::size_t dataset_size, std::size_t n, std::uint64_t seed) {
  if (dataset_size == 0) throw ContractError("Fisher estimation over an empty dataset");
  if (n == 0) throw ContractError("Fisher sample count must be >= 1");
  Rng rng(derive_seed(seed, "fisher_subset"));
  std::vector<std::size_t> out;
  if (n > dataset_size) {
    out.resize(n);
    for (auto& i : out) i = rng.below(dataset_size);
    return out;
  }
  std::vector<std::size_t> all(dataset_size);
  std::iota(all.begin(), all.end(), std::size_t{0});
  // partial Fisher-Yates
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t j = i + rng.below(dataset_size - i);
    std::swap(all[i], all[j]);
  }
  all.resize(n);
  return all;
}

namespace {

void accumulate(std::vector<double>& f, const std::vector<double>& g) {
  if (g.size() != f.size()) throw DimensionError("instance gradient has wrong length");
  for (std::size_t i = 0; i < f.size(); ++i) f[i] += g[i] * g[i];
}

void normalize(std::vector<double>& f, std::size_t n) {
  const double inv = static_cast<double>(n);
  for (double& v : f) v /= inv;
}

}  // namespace

std::vector<double> fisher_from_gradients_serial(std::span<const std::size_t> instances, std::size_t dim,
                                                 const InstanceGradFn& grad) {
  if (instances.empty()) throw ContractError("Fisher estimation over no instances");
  std::vector<double> f(dim, 0.0);
  for (std::size_t idx : instances) accumulate(f, grad(idx));
  normalize(f, instances.size());
  return f;
}

std::vector<double> fisher_from_gradients_parallel(std::span<const std::size_t> instances, std::size_t dim,
                                                   const InstanceGradFn& grad, std::size_t block) {
  if (instances.empty()) throw ContractError("Fisher estimation over no instances");
  if (block == 0) throw ContractError("block size must be >= 1");
  std::vector<double> f(dim, 0.0);
  std::vector<std::vector<double>> grads(block);
  for (std::size_t start = 0; start < instances.size(); start += block) {
    const std::size_t len = std::min(block, instances.size() - start);
    const auto n = static_cast<std::int64_t>(len);
#pragma omp parallel for schedule(dynamic) if (kernels::max_threads() > 1)
    for (std::int64_t j = 0; j < n; ++j) {
      grads[static_cast<std::size_t>(j)] = grad(instances[start + static_cast<std::size_t>(j)]);
    }
    for (std::size_t j = 0; j < len; ++j) accumulate(f, grads[j]);
  }
  normalize(f, instances.size());
  return f;
}

std::vector<double> estimate_fisher(const ToyVLM& model, std::span<const Sample> data, std::size_t n,
                                    std::uint64_t seed, bool parallel) {
  const auto subset = fisher_subset(data.size(), n, seed);
  InstanceGradFn grad = [&](std::size_t i) { return model.sample_gradients(data[i]).grads; };
  const std::size_t dim = model.registry().total_size();
  return parallel ? fisher_from_gradients_parallel(subset, dim, grad)
                  : fisher_from_gradients_serial(subset, dim, grad);
}

void aggregate(FisherState& state, std::span<const double> per_task, Aggregation mode) {
  if (!state.aggregated.empty() && state.aggregated.size() != per_task.size()) {
    throw ContractError("Fisher length mismatch: " + std::to_string(state.aggregated.size()) + " vs " +
                        std::to_string(per_task.size()));
  }
  if (state.aggregated.empty()) state.aggregated.assign(per_task.size(), 0.0);
  for (std::size_t i = 0; i < per_task.size(); ++i) {
    double& a = state.aggregated[i];
    a = mode == Aggregation::kMax ? std::max(a, per_task[i]) : a + per_task[i];
  }
  state.per_task.assign(per_task.begin(), per_task.end());
  ++state.k;
}

std::array<double, 3> fisher_summary(std::span<const double> fisher, const ParamRegistry& registry) {
  if (fisher.size() != registry.total_size()) throw ContractError("Fisher length does not match the registry");
  std::array<double, 3> sum{}, count{};
  const auto tags = registry.tag_map();
  for (std::size_t i = 0; i < fisher.size(); ++i) {
    const auto t = static_cast<std::size_t>(tags[i]);
    sum[t] += fisher[i];
    count[t] += 1.0;
  }
  std::array<double, 3> out{};
  for (std::size_t t = 0; t < 3; ++t) out[t] = count[t] > 0 ? sum[t] / count[t] : 0.0;
  return out;
}

}  // namespace aim
