#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "aim/registry.hpp"

namespace aim {

struct MaskConfig {
  double vis = 0.3;
  double shared = 0.1;
  double text = 0.5;

  double ratio(Subspace s) const;
  void validate() const;
  bool operator==(const MaskConfig&) const = default;
};

enum class MaskVariant { kAim, kUniform, kSwapped };

std::string_view to_string(MaskVariant v);
MaskVariant parse_mask_variant(std::string_view name);
MaskConfig mask_variant(const MaskConfig& cfg, MaskVariant variant);

// M_i = 0 marks a frozen parameter.
struct MaskSet {
  std::vector<std::uint8_t> mask;
  std::array<double, 3> threshold{};
  std::array<std::size_t, 3> frozen{};
  std::array<std::size_t, 3> size{};
};

// ceil(rho * n), treating products within 1e-9 of an integer as that integer
// so that e.g. 0.3 * 10 freezes 3, not 4.
std::size_t freeze_count(double rho, std::size_t n);

// k-th largest value with k = freeze_count(rho, |values|); +inf when k = 0.
double subspace_threshold(std::span<const double> values, double rho);

MaskSet generate_masks(std::span<const double> fisher, std::span<const Subspace> tags, const MaskConfig& cfg);
MaskSet generate_masks(std::span<const double> fisher, const ParamRegistry& registry, const MaskConfig& cfg);

void apply_mask(std::span<double> grads, std::span<const std::uint8_t> mask);
std::vector<double> masked(std::span<const double> grads, std::span<const std::uint8_t> mask);

}  // namespace aim
