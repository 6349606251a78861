#include "fhm/geomodel/channel_generator.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "fhm/common/error.hpp"
#include "fhm/common/parallel.hpp"

namespace fhm::geomodel {

void ChannelGenParams::validate() const {
  if (nx < 8 || ny < 8) {
    throw ValidationError("channel generator needs at least an 8x8 grid, got " + std::to_string(nx) + "x" +
                          std::to_string(ny));
  }
  if (n_channels_min < 1 || n_channels_min > n_channels_max) throw ValidationError("invalid channel count band");
  if (width_min < 1.0 || width_min > width_max) throw ValidationError("invalid channel width band (min >= 1 cell)");
  if (amplitude_min < 0.0 || amplitude_min > amplitude_max) throw ValidationError("invalid amplitude band");
  if (wavelength_min <= 0.0 || wavelength_min > wavelength_max) throw ValidationError("invalid wavelength band");
  if (!(target_fraction_min > 0.0 && target_fraction_min <= target_fraction_max && target_fraction_max < 1.0)) {
    throw ValidationError("target channel fraction band must lie inside (0, 1)");
  }
  if (max_attempts < 1) throw ValidationError("max_attempts must be >= 1");
}

double ChannelObject::centerline(double s) const {
  return offset + amplitude * std::sin(2.0 * std::numbers::pi * s / wavelength + phase);
}

std::pair<int, int> ChannelObject::column_span(int col) const {
  // Centerline sampled on both column edges and the midpoint; the band covers
  // every cell center within width/2 of that stretch of centerline.
  const double a = centerline(col);
  const double b = centerline(col + 0.5);
  const double c = centerline(col + 1.0);
  const double lo = std::min({a, b, c}) - 0.5 * width;
  const double hi = std::max({a, b, c}) + 0.5 * width;
  // cell k has center k + 0.5
  auto first = static_cast<int>(std::ceil(lo - 0.5));
  auto last = static_cast<int>(std::floor(hi - 0.5));
  if (last < first) last = first;  // unreachable for width >= 1
  return {first, last};
}

std::vector<ChannelObject> sample_channel_objects(const ChannelGenParams& params, Rng& rng) {
  const int across = params.orientation == Orientation::along_x ? params.ny : params.nx;
  const auto n = static_cast<int>(rng.uniform_int(params.n_channels_min, params.n_channels_max));
  std::vector<ChannelObject> objects(static_cast<std::size_t>(n));
  for (auto& obj : objects) {
    obj.width = rng.uniform(params.width_min, params.width_max);
    obj.amplitude = rng.uniform(params.amplitude_min, params.amplitude_max);
    obj.wavelength = rng.uniform(params.wavelength_min, params.wavelength_max);
    obj.phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
    obj.offset = rng.uniform(0.0, static_cast<double>(across));
  }
  return objects;
}

FaciesGrid rasterize_channels(const ChannelGenParams& params, const std::vector<ChannelObject>& objects) {
  FaciesGrid grid(params.nx, params.ny, 2);
  const bool along_x = params.orientation == Orientation::along_x;
  const int along = along_x ? params.nx : params.ny;
  const int across = along_x ? params.ny : params.nx;
  for (const auto& obj : objects) {
    for (int col = 0; col < along; ++col) {
      auto [first, last] = obj.column_span(col);
      first = std::max(first, 0);
      last = std::min(last, across - 1);
      for (int r = first; r <= last; ++r) {
        if (along_x) {
          grid.set(col, r, 1);
        } else {
          grid.set(r, col, 1);
        }
      }
    }
  }
  return grid;
}

FaciesGrid generate_channel_realization(const ChannelGenParams& params, std::uint64_t seed) {
  params.validate();
  Rng rng(seed);
  FaciesGrid grid;
  for (int attempt = 0; attempt < params.max_attempts; ++attempt) {
    grid = rasterize_channels(params, sample_channel_objects(params, rng));
    const double f = grid.fraction(1);
    if (f >= params.target_fraction_min && f <= params.target_fraction_max) break;
  }
  return grid;
}

std::vector<FaciesGrid> generate_dataset(const ChannelGenParams& params, std::size_t count, std::uint64_t seed,
                                         int threads) {
  if (count < 1) throw ValidationError("dataset count must be >= 1");
  params.validate();
  std::vector<FaciesGrid> out(count);
  parallel_for(count, threads, [&](std::size_t i) { out[i] = generate_channel_realization(params, derive_seed(seed, i)); });
  return out;
}

}  // namespace fhm::geomodel
