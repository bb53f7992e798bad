#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string_view>
#include <vector>

#include "aim/masking.hpp"

namespace aim {

inline constexpr std::string_view kCheckpointMagic = "AIMCKPT1";
inline constexpr std::string_view kFisherMagic = "AIMFSH1";
inline constexpr std::string_view kMaskMagic = "AIMMSK1";

// Layout: 8-byte magic (zero padded), u64 config digest, u64 count, then count
// little-endian IEEE doubles.
void write_vector(const std::filesystem::path& path, std::string_view magic, std::uint64_t digest,
                  std::span<const double> values);
std::vector<double> read_vector(const std::filesystem::path& path, std::string_view magic,
                                std::uint64_t expected_digest);

// Layout: magic, u64 digest, 3 x (u64 size, u64 frozen, f64 threshold), u64
// count, then one byte per parameter.
void write_mask(const std::filesystem::path& path, std::uint64_t digest, const MaskSet& masks);
MaskSet read_mask(const std::filesystem::path& path, std::uint64_t expected_digest);

}  // namespace aim
