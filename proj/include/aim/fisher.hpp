#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string_view>
#include <vector>

#include "aim/model.hpp"
#include "aim/registry.hpp"
#include "aim/sample.hpp"

namespace aim {

enum class Aggregation { kMax, kSum };

std::string_view to_string(Aggregation a);
Aggregation parse_aggregation(std::string_view name);

struct FisherState {
  std::vector<double> per_task;    // most recent task
  std::vector<double> aggregated;  // F^(k); empty means F^(0) = 0
  std::size_t k = 0;
  std::size_t samples = 0;
};

// Gradient of the loss for one instance, in registry order.
using InstanceGradFn = std::function<std::vector<double>(std::size_t instance)>;

// Which instances of a dataset of `dataset_size` enter the estimate: n distinct
// indices when n <= dataset_size, otherwise n draws with replacement.
std::vector<std::size_t> fisher_subset(std::size_t dataset_size, std::size_t n, std::uint64_t seed);

// Mean of squared per-instance gradients over `instances`. The parallel
// version computes gradients in blocks concurrently and accumulates them in
// instance order, so both agree bit for bit. `grad` must be thread-safe.
std::vector<double> fisher_from_gradients_serial(std::span<const std::size_t> instances, std::size_t dim,
                                                 const InstanceGradFn& grad);
std::vector<double> fisher_from_gradients_parallel(std::span<const std::size_t> instances, std::size_t dim,
                                                   const InstanceGradFn& grad, std::size_t block = 64);

std::vector<double> estimate_fisher(const ToyVLM& model, std::span<const Sample> data, std::size_t n,
                                    std::uint64_t seed, bool parallel = true);

void aggregate(FisherState& state, std::span<const double> per_task, Aggregation mode);

// Mean aggregated Fisher over each subspace, indexed by Subspace.
std::array<double, 3> fisher_summary(std::span<const double> fisher, const ParamRegistry& registry);

}  // namespace aim
