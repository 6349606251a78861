#include "fhm/geomodel/facies_grid.hpp"

#include <algorithm>
#include <string>

#include "fhm/common/error.hpp"

namespace fhm::geomodel {

namespace {

void check_dims(int nx, int ny, int k) {
  if (nx < 1 || ny < 1) throw ValidationError("facies grid needs nx >= 1 and ny >= 1");
  if (k < 2 || k > 256) throw ValidationError("facies count k must lie in [2, 256], got " + std::to_string(k));
}

}  // namespace

FaciesGrid::FaciesGrid(int nx, int ny, int k)
    : nx_(nx), ny_(ny), k_(k) {
  check_dims(nx, ny, k);
  codes_.assign(static_cast<std::size_t>(nx) * ny, 0);
}

FaciesGrid::FaciesGrid(int nx, int ny, int k, std::vector<std::uint8_t> codes)
    : nx_(nx), ny_(ny), k_(k), codes_(std::move(codes)) {
  check_dims(nx, ny, k);
  if (codes_.size() != static_cast<std::size_t>(nx) * ny) {
    throw ShapeError("facies code count " + std::to_string(codes_.size()) + " does not match " +
                     std::to_string(nx) + "x" + std::to_string(ny));
  }
  for (auto c : codes_) {
    if (c >= k_) throw ValidationError("facies code " + std::to_string(c) + " outside [0, " + std::to_string(k_) + ")");
  }
}

void FaciesGrid::set(int i, int j, std::uint8_t code) {
  if (code >= k_) throw ValidationError("facies code " + std::to_string(code) + " outside [0, " + std::to_string(k_) + ")");
  codes_[index(i, j)] = code;
}

double FaciesGrid::fraction(std::uint8_t code) const {
  if (codes_.empty()) return 0.0;
  const auto n = std::count(codes_.begin(), codes_.end(), code);
  return static_cast<double>(n) / static_cast<double>(codes_.size());
}

OneHotImage to_one_hot(const FaciesGrid& grid, int k) {
  if (k < grid.k()) {
    throw ValidationError("one-hot channel count " + std::to_string(k) + " below facies count " +
                          std::to_string(grid.k()));
  }
  OneHotImage img{grid.nx(), grid.ny(), k, {}};
  img.values.assign(static_cast<std::size_t>(k) * grid.size(), 0.0);
  for (int j = 0; j < grid.ny(); ++j) {
    for (int i = 0; i < grid.nx(); ++i) img.at(grid.at(i, j), i, j) = 1.0;
  }
  return img;
}

OneHotImage to_one_hot(const FaciesGrid& grid) { return to_one_hot(grid, grid.k()); }

FaciesGrid from_soft(const OneHotImage& image) {
  if (image.k < 2) throw ValidationError("from_soft needs at least two channels");
  if (image.values.size() != static_cast<std::size_t>(image.k) * image.nx * image.ny) {
    throw ShapeError("one-hot image value count does not match its extents");
  }
  FaciesGrid grid(image.nx, image.ny, image.k);
  for (int j = 0; j < image.ny; ++j) {
    for (int i = 0; i < image.nx; ++i) {
      int best = 0;
      double best_value = image.at(0, i, j);
      for (int c = 1; c < image.k; ++c) {
        // strict comparison keeps the lowest index on ties
        if (image.at(c, i, j) > best_value) {
          best_value = image.at(c, i, j);
          best = c;
        }
      }
      grid.set(i, j, static_cast<std::uint8_t>(best));
    }
  }
  return grid;
}

}  // namespace fhm::geomodel
