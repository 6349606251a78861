#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "fhm/common/rng.hpp"
#include "fhm/geomodel/facies_grid.hpp"

namespace fhm::geomodel {

/// Axis the channels run along. Along x: centerline y(x); along y: x(y).
enum class Orientation { along_x, along_y };

/// Object-based generator settings. Channels are sinusoidal bands with
/// centerline y0 + A sin(2 pi x / wavelength + phase), thickened to a width.
struct ChannelGenParams {
  int nx = 32;
  int ny = 32;
  int n_channels_min = 2;
  int n_channels_max = 3;
  double width_min = 2.0;
  double width_max = 4.0;
  double amplitude_min = 2.0;
  double amplitude_max = 5.0;
  double wavelength_min = 16.0;
  double wavelength_max = 40.0;
  Orientation orientation = Orientation::along_x;
  double target_fraction_min = 0.20;
  double target_fraction_max = 0.40;
  int max_attempts = 100;

  /// Throws ValidationError when a band is inverted or out of range.
  void validate() const;
};

/// One sampled channel body, before rasterization.
struct ChannelObject {
  double offset = 0.0;  // centerline position across the flow axis
  double amplitude = 0.0;
  double wavelength = 1.0;
  double phase = 0.0;
  double width = 1.0;

  /// Centerline across-axis coordinate at along-axis coordinate s.
  double centerline(double s) const;

  /// Inclusive range of across-axis cell indices occupied in along-axis
  /// column `col`, unclipped (may extend beyond the grid). Never empty for
  /// width >= 1, and consecutive columns overlap, so each object is a
  /// connected band from the first column to the last.
  std::pair<int, int> column_span(int col) const;
};

/// Draws the objects of one attempt. Exposed for geometry tests.
std::vector<ChannelObject> sample_channel_objects(const ChannelGenParams& params, Rng& rng);

/// Rasterizes objects to a binary grid (1 = channel).
FaciesGrid rasterize_channels(const ChannelGenParams& params, const std::vector<ChannelObject>& objects);

/// Binary channel realization. Attempts whose channel fraction falls outside
/// the target band are redrawn, up to params.max_attempts; the last attempt
/// is kept when the cap is reached.
FaciesGrid generate_channel_realization(const ChannelGenParams& params, std::uint64_t seed);

/// `count` realizations; realization i uses derive_seed(seed, i).
std::vector<FaciesGrid> generate_dataset(const ChannelGenParams& params, std::size_t count, std::uint64_t seed,
                                         int threads = 1);

}  // namespace fhm::geomodel
