#pragma once

#include <filesystem>
#include <span>
#include <vector>

#include "fhm/geomodel/facies_grid.hpp"

namespace fhm::geomodel {

/// Dataset file layout (little-endian):
///   "FCDS" | u32 version=1 | u32 count | u32 nx | u32 ny | u32 K
///   | count*nx*ny u8 codes (realization-major, row-major within a grid)
inline constexpr std::uint32_t kDatasetVersion = 1;

void write_dataset(const std::filesystem::path& path, std::span<const FaciesGrid> dataset);

/// Throws FormatError on bad magic/version/header and LengthMismatchError
/// when the payload size disagrees with the header.
std::vector<FaciesGrid> read_dataset(const std::filesystem::path& path);

}  // namespace fhm::geomodel
