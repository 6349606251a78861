#pragma once

#include <filesystem>

#include "fhm/geomodel/facies_grid.hpp"

namespace fhm::geomodel {

/// Binary PGM (P5, maxval 255). Code c maps to round(255 * c / (k - 1)),
/// row j = 0 written first.
void write_pgm(const std::filesystem::path& path, const FaciesGrid& grid);

}  // namespace fhm::geomodel
