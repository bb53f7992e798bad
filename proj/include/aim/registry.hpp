#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "aim/tensor.hpp"

namespace aim {

enum class Subspace { kVis = 0, kShared = 1, kText = 2 };

inline constexpr std::array<Subspace, 3> kSubspaces = {Subspace::kVis, Subspace::kShared,
                                                       Subspace::kText};

std::string_view to_string(Subspace s);
Subspace parse_subspace(std::string_view name);

struct ParamEntry {
  std::string name;
  diff::Tensor tensor;
  Subspace tag = Subspace::kVis;
  std::size_t offset = 0;  // first index in the flat parameter vector
};

// Write-through view over a subset of flat parameter indices.
class FlatView {
 public:
  FlatView(std::vector<double*> values, std::vector<double*> grads, std::vector<std::size_t> indices)
      : values_(std::move(values)), grads_(std::move(grads)), indices_(std::move(indices)) {}

  std::size_t size() const { return values_.size(); }
  double& value(std::size_t i) { return *values_[i]; }
  double value(std::size_t i) const { return *values_[i]; }
  double& grad(std::size_t i) { return *grads_[i]; }
  // Global flat index of view position i.
  std::size_t index(std::size_t i) const { return indices_[i]; }
  const std::vector<std::size_t>& indices() const { return indices_; }

 private:
  std::vector<double*> values_;
  std::vector<double*> grads_;
  std::vector<std::size_t> indices_;
};

// Ordered named parameters, each tagged with exactly one subspace. Flat index
// ranges follow insertion order and are contiguous and disjoint. Entries must
// not be added while tapes or views referencing the registry are alive.
class ParamRegistry {
 public:
  std::size_t add(std::string name, std::vector<std::size_t> shape, Subspace tag);

  const std::vector<ParamEntry>& entries() const { return entries_; }
  std::vector<ParamEntry>& entries() { return entries_; }
  const ParamEntry& at(std::size_t i) const { return entries_.at(i); }
  ParamEntry& at(std::size_t i) { return entries_.at(i); }
  const ParamEntry& find(std::string_view name) const;

  std::size_t total_size() const { return total_; }
  std::size_t size(Subspace tag) const;

  // Sorted global indices of parameters tagged `tag` (all when nullopt).
  std::vector<std::size_t> indices(std::optional<Subspace> tag = std::nullopt) const;
  // Subspace tag of each flat index.
  std::vector<Subspace> tag_map() const;

  std::vector<double> flat_values(std::optional<Subspace> tag = std::nullopt) const;
  std::vector<double> flat_grads(std::optional<Subspace> tag = std::nullopt) const;
  void set_flat_values(std::span<const double> values);
  void set_flat_grads(std::span<const double> grads);
  void zero_grads();

  FlatView view(std::optional<Subspace> tag = std::nullopt);

  // Returns an empty string when every entry is consistent, else a description.
  std::string audit() const;

 private:
  std::vector<ParamEntry> entries_;
  std::size_t total_ = 0;
};

}  // namespace aim
