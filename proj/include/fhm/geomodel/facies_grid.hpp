#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace fhm::geomodel {

/// Categorical facies model on a regular 2D grid. Codes are stored row-major:
/// cell (i, j) with i along x and j along y lives at index j * nx + i.
class FaciesGrid {
 public:
  FaciesGrid() = default;
  /// All cells set to code 0.
  FaciesGrid(int nx, int ny, int k);
  FaciesGrid(int nx, int ny, int k, std::vector<std::uint8_t> codes);

  int nx() const { return nx_; }
  int ny() const { return ny_; }
  /// Number of facies; codes lie in [0, k).
  int k() const { return k_; }
  std::size_t size() const { return codes_.size(); }

  std::uint8_t at(int i, int j) const { return codes_[index(i, j)]; }
  void set(int i, int j, std::uint8_t code);
  std::size_t index(int i, int j) const { return static_cast<std::size_t>(j) * nx_ + i; }

  std::span<const std::uint8_t> codes() const { return codes_; }

  /// Fraction of cells carrying `code`.
  double fraction(std::uint8_t code) const;

  friend bool operator==(const FaciesGrid&, const FaciesGrid&) = default;

 private:
  int nx_ = 0;
  int ny_ = 0;
  int k_ = 0;
  std::vector<std::uint8_t> codes_;
};

/// Channel-per-facies image, laid out as [k][ny][nx].
struct OneHotImage {
  int nx = 0;
  int ny = 0;
  int k = 0;
  std::vector<double> values;

  double& at(int c, int i, int j) { return values[(static_cast<std::size_t>(c) * ny + j) * nx + i]; }
  double at(int c, int i, int j) const { return values[(static_cast<std::size_t>(c) * ny + j) * nx + i]; }
};

/// Hard encoding: 1 at the cell's facies channel, 0 elsewhere.
OneHotImage to_one_hot(const FaciesGrid& grid, int k);
OneHotImage to_one_hot(const FaciesGrid& grid);

/// Argmax per cell; ties resolve to the lowest channel index.
FaciesGrid from_soft(const OneHotImage& image);

}  // namespace fhm::geomodel
