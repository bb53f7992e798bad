#include "aim/masking.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "aim/error.hpp"

namespace aim {

double MaskConfig::ratio(Subspace s) const {
  switch (s) {
    case Subspace::kVis:
      return vis;
    case Subspace::kShared:
      return shared;
    case Subspace::kText:
      return text;
  }
  return 0.0;
}

void MaskConfig::validate() const {
  for (Subspace s : kSubspaces) {
    const double r = ratio(s);
    if (!(r >= 0.0 && r <= 1.0)) {
      throw ConfigError("ratio for " + std::string(to_string(s)) + " must be in [0, 1], got " + std::to_string(r));
    }
  }
}

std::string_view to_string(MaskVariant v) {
  switch (v) {
    case MaskVariant::kAim:
      return "aim";
    case MaskVariant::kUniform:
      return "uniform";
    case MaskVariant::kSwapped:
      return "swapped";
  }
  return "?";
}

MaskVariant parse_mask_variant(std::string_view name) {
  if (name == "aim") return MaskVariant::kAim;
  if (name == "uniform") return MaskVariant::kUniform;
  if (name == "swapped") return MaskVariant::kSwapped;
  throw ConfigError("unknown mask variant '" + std::string(name) + "'");
}

MaskConfig mask_variant(const MaskConfig& cfg, MaskVariant variant) {
  cfg.validate();
  switch (variant) {
    case MaskVariant::kAim:
      return cfg;
    case MaskVariant::kUniform:
      return {0.3, 0.3, 0.3};
    case MaskVariant::kSwapped:
      return {cfg.text, cfg.shared, cfg.vis};
  }
  return cfg;
}

std::size_t freeze_count(double rho, std::size_t n) {
  if (!(rho >= 0.0 && rho <= 1.0)) throw ContractError("ratio outside [0, 1]");
  const double x = rho * static_cast<double>(n);
  const double r = std::round(x);
  if (std::abs(x - r) <= 1e-9 * std::max(1.0, x)) return static_cast<std::size_t>(r);
  return std::min(n, static_cast<std::size_t>(std::ceil(x)));
}

namespace {

struct Ranked {
  double value;
  std::size_t index;
};

// Higher value first, lower index first among equals.
bool before(const Ranked& a, const Ranked& b) {
  if (a.value != b.value) return a.value > b.value;
  return a.index < b.index;
}

// Returns the k top-ranked entries (unordered beyond the k-th, which sits at k-1).
void select_top(std::vector<Ranked>& items, std::size_t k) {
  if (k == 0 || k > items.size()) return;
  std::nth_element(items.begin(), items.begin() + static_cast<std::ptrdiff_t>(k - 1), items.end(), before);
}

void check_values(std::span<const double> values) {
  for (double v : values) {
    if (std::isnan(v)) throw ContractError("Fisher value is NaN");
  }
}

}  // namespace

double subspace_threshold(std::span<const double> values, double rho) {
  if (values.empty()) throw ContractError("threshold of an empty subspace");
  check_values(values);
  const std::size_t k = freeze_count(rho, values.size());
  if (k == 0) return std::numeric_limits<double>::infinity();
  std::vector<Ranked> items(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) items[i] = {values[i], i};
  select_top(items, k);
  return items[k - 1].value;
}

MaskSet generate_masks(std::span<const double> fisher, std::span<const Subspace> tags, const MaskConfig& cfg) {
  if (fisher.size() != tags.size()) throw ContractError("Fisher length does not match the tag map");
  cfg.validate();
  check_values(fisher);
  MaskSet out;
  out.mask.assign(fisher.size(), 1);
  std::array<std::vector<Ranked>, 3> groups;
  for (std::size_t i = 0; i < fisher.size(); ++i) {
    groups[static_cast<std::size_t>(tags[i])].push_back({fisher[i], i});
  }
  for (Subspace s : kSubspaces) {
    const auto t = static_cast<std::size_t>(s);
    auto& items = groups[t];
    out.size[t] = items.size();
    out.threshold[t] = std::numeric_limits<double>::infinity();
    if (items.empty()) continue;
    const std::size_t k = freeze_count(cfg.ratio(s), items.size());
    if (k == 0) continue;
    select_top(items, k);
    out.threshold[t] = items[k - 1].value;
    for (std::size_t j = 0; j < k; ++j) out.mask[items[j].index] = 0;
    out.frozen[t] = k;
  }
  return out;
}

MaskSet generate_masks(std::span<const double> fisher, const ParamRegistry& registry, const MaskConfig& cfg) {
  const auto tags = registry.tag_map();
  return generate_masks(fisher, tags, cfg);
}

void apply_mask(std::span<double> grads, std::span<const std::uint8_t> mask) {
  if (grads.size() != mask.size()) {
    throw ContractError("mask length " + std::to_string(mask.size()) + " does not match " +
                        std::to_string(grads.size()) + " gradients");
  }
  for (std::size_t i = 0; i < grads.size(); ++i) grads[i] *= static_cast<double>(mask[i]);
}

std::vector<double> masked(std::span<const double> grads, std::span<const std::uint8_t> mask) {
  std::vector<double> out(grads.begin(), grads.end());
  apply_mask(out, mask);
  return out;
}

}  // namespace aim
