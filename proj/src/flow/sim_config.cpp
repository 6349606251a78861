#include "fhm/flow/sim_config.hpp"

#include <cmath>
#include <string>

#include "fhm/common/error.hpp"

namespace fhm::flow {

void SimConfig::validate(int nx, int ny) const {
  if (!(dx > 0.0 && dy > 0.0 && thickness > 0.0)) throw ValidationError("cell sizes and thickness must be positive");
  if (!(viscosity > 0.0)) throw ValidationError("viscosity must be positive");
  if (!(porosity > 0.0 && porosity <= 1.0)) throw ValidationError("porosity must lie in (0, 1]");
  if (!(darcy_constant > 0.0)) throw ValidationError("darcy constant must be positive");
  if (!(cfl > 0.0 && cfl <= 1.0)) throw ValidationError("CFL number must lie in (0, 1]");
  if (!(cg_tolerance > 0.0) || cg_max_iterations < 1) throw ValidationError("invalid CG controls");
  if (!(peaceman_factor > 0.0 && well_radius_fraction > 0.0)) throw ValidationError("invalid Peaceman parameters");
  const double ro = peaceman_factor * std::sqrt(dx * dx + dy * dy);
  if (!(ro > well_radius_fraction * dx)) throw ValidationError("Peaceman radius must exceed the well radius");
  if (facies_permeability.empty()) throw ValidationError("no facies permeabilities configured");
  for (double k : facies_permeability) {
    if (!(k > 0.0)) throw ValidationError("permeabilities must be positive");
  }
  int producers = 0, injectors = 0;
  for (const auto& w : wells) {
    if (w.i < 0 || w.i >= nx || w.j < 0 || w.j >= ny) {
      throw ValidationError("well '" + w.name + "' lies outside the " + std::to_string(nx) + "x" + std::to_string(ny) +
                            " grid");
    }
    if (!std::isfinite(w.bhp)) throw ValidationError("well '" + w.name + "' has a non-finite BHP");
    (w.kind == WellKind::producer ? producers : injectors)++;
  }
  if (producers < 1 || injectors < 1) throw ValidationError("need at least one producer and one injector");
  for (std::size_t t = 0; t < report_times.size(); ++t) {
    if (!(report_times[t] >= 0.0) || (t > 0 && !(report_times[t] > report_times[t - 1]))) {
      throw ValidationError("report times must be non-negative and strictly increasing");
    }
  }
}

SimConfig SimConfig::desk_default(int nx, int ny) {
  SimConfig c;
  const int lo_i = nx / 16, hi_i = nx - 1 - nx / 16;
  const int lo_j = ny / 16, hi_j = ny - 1 - ny / 16;
  const double prod_bhp = 207.0;  // ~3000 psi
  const double inj_bhp = 276.0;   // ~4000 psi
  c.wells = {
      {"P1", lo_i, lo_j, WellKind::producer, prod_bhp},
      {"P2", hi_i, lo_j, WellKind::producer, prod_bhp},
      {"P3", lo_i, hi_j, WellKind::producer, prod_bhp},
      {"P4", hi_i, hi_j, WellKind::producer, prod_bhp},
      {"I1", nx / 2, ny / 4, WellKind::injector, inj_bhp},
      {"I2", nx / 2, ny / 2, WellKind::injector, inj_bhp},
      {"I3", nx / 2, (3 * ny) / 4, WellKind::injector, inj_bhp},
  };
  for (int t = 1; t <= 20; ++t) c.report_times.push_back(15.0 * t);
  return c;
}

}  // namespace fhm::flow
