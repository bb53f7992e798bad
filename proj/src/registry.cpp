#include "aim/registry.hpp"

#include <algorithm>
#include <set>

#include "aim/error.hpp"

namespace aim {

std::string_view to_string(Subspace s) {
  switch (s) {
    case Subspace::kVis:
      return "vis";
    case Subspace::kShared:
      return "shared";
    case Subspace::kText:
      return "text";
  }
  return "?";
}

Subspace parse_subspace(std::string_view name) {
  if (name == "vis") return Subspace::kVis;
  if (name == "shared") return Subspace::kShared;
  if (name == "text") return Subspace::kText;
  throw ConfigError("unknown subspace '" + std::string(name) + "'");
}

std::size_t ParamRegistry::add(std::string name, std::vector<std::size_t> shape, Subspace tag) {
  for (const auto& e : entries_) {
    if (e.name == name) throw ContractError("duplicate parameter name '" + name + "'");
  }
  ParamEntry entry;
  entry.name = std::move(name);
  entry.tensor = diff::Tensor(std::move(shape));
  entry.tag = tag;
  entry.offset = total_;
  total_ += entry.tensor.size();
  entries_.push_back(std::move(entry));
  return entries_.size() - 1;
}

const ParamEntry& ParamRegistry::find(std::string_view name) const {
  for (const auto& e : entries_) {
    if (e.name == name) return e;
  }
  throw IndexError("no parameter named '" + std::string(name) + "'");
}

std::size_t ParamRegistry::size(Subspace tag) const {
  std::size_t n = 0;
  for (const auto& e : entries_) {
    if (e.tag == tag) n += e.tensor.size();
  }
  return n;
}

std::vector<std::size_t> ParamRegistry::indices(std::optional<Subspace> tag) const {
  std::vector<std::size_t> out;
  for (const auto& e : entries_) {
    if (tag && e.tag != *tag) continue;
    for (std::size_t i = 0; i < e.tensor.size(); ++i) out.push_back(e.offset + i);
  }
  return out;
}

std::vector<Subspace> ParamRegistry::tag_map() const {
  std::vector<Subspace> out(total_);
  for (const auto& e : entries_) {
    std::fill_n(out.begin() + static_cast<std::ptrdiff_t>(e.offset), e.tensor.size(), e.tag);
  }
  return out;
}

std::vector<double> ParamRegistry::flat_values(std::optional<Subspace> tag) const {
  std::vector<double> out;
  out.reserve(tag ? size(*tag) : total_);
  for (const auto& e : entries_) {
    if (tag && e.tag != *tag) continue;
    out.insert(out.end(), e.tensor.data().begin(), e.tensor.data().end());
  }
  return out;
}

std::vector<double> ParamRegistry::flat_grads(std::optional<Subspace> tag) const {
  std::vector<double> out;
  out.reserve(tag ? size(*tag) : total_);
  for (const auto& e : entries_) {
    if (tag && e.tag != *tag) continue;
    auto g = e.tensor.grad();
    if (g.empty()) {
      out.insert(out.end(), e.tensor.size(), 0.0);
    } else {
      out.insert(out.end(), g.begin(), g.end());
    }
  }
  return out;
}

void ParamRegistry::set_flat_values(std::span<const double> values) {
  if (values.size() != total_) {
    throw DimensionError("flat vector of " + std::to_string(values.size()) + " for " +
                         std::to_string(total_) + " parameters");
  }
  for (auto& e : entries_) {
    auto d = e.tensor.data();
    std::copy_n(values.begin() + static_cast<std::ptrdiff_t>(e.offset), d.size(), d.begin());
  }
}

void ParamRegistry::set_flat_grads(std::span<const double> grads) {
  if (grads.size() != total_) {
    throw DimensionError("flat gradient of " + std::to_string(grads.size()) + " for " +
                         std::to_string(total_) + " parameters");
  }
  for (auto& e : entries_) {
    auto g = e.tensor.grad();
    std::copy_n(grads.begin() + static_cast<std::ptrdiff_t>(e.offset), g.size(), g.begin());
  }
}

void ParamRegistry::zero_grads() {
  for (auto& e : entries_) e.tensor.zero_grad();
}

FlatView ParamRegistry::view(std::optional<Subspace> tag) {
  std::vector<double*> values, grads;
  std::vector<std::size_t> idx;
  for (auto& e : entries_) {
    if (tag && e.tag != *tag) continue;
    auto d = e.tensor.data();
    auto g = e.tensor.grad();
    for (std::size_t i = 0; i < d.size(); ++i) {
      values.push_back(&d[i]);
      grads.push_back(&g[i]);
      idx.push_back(e.offset + i);
    }
  }
  return FlatView(std::move(values), std::move(grads), std::move(idx));
}

std::string ParamRegistry::audit() const {
  std::set<std::string> names;
  std::size_t expected = 0;
  for (const auto& e : entries_) {
    if (!names.insert(e.name).second) return "duplicate name " + e.name;
    if (e.offset != expected) return "non-contiguous offset at " + e.name;
    expected += e.tensor.size();
    const std::string prefix = std::string(to_string(e.tag)) + ".";
    if (e.name.rfind(prefix, 0) != 0) return "parameter " + e.name + " is tagged " + prefix;
  }
  if (expected != total_) return "flat size mismatch";
  return {};
}

}  // namespace aim
