#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "fhm/flow/sim_config.hpp"
#include "fhm/geomodel/facies_grid.hpp"

namespace fhm::flow {

/// Cellwise permeability (mD), row-major like FaciesGrid.
struct PermeabilityField {
  int nx = 0;
  int ny = 0;
  std::vector<double> values;
};

PermeabilityField permeability_from_facies(const geomodel::FaciesGrid& grid, const SimConfig& cfg);

/// Steady incompressible pressure solution.
struct PressureSolution {
  int nx = 0;
  int ny = 0;
  std::vector<double> pressure;  // bar, per cell
  /// Volumetric flux (m^3/day) across the face between (i, j) and (i + 1, j),
  /// stored at j * (nx - 1) + i; positive in +x.
  std::vector<double> flux_x;
  /// Flux across the face between (i, j) and (i, j + 1), stored at j * nx + i;
  /// positive in +y.
  std::vector<double> flux_y;
  /// Net outflow per well (m^3/day): positive for production, negative for
  /// injection.
  std::vector<double> well_outflow;
  int cg_iterations = 0;
  double relative_residual = 0.0;
};

/// Two-point (5-point stencil) finite-volume discretization with harmonic
/// transmissibilities and Peaceman wells under BHP control, solved by
/// Jacobi-preconditioned conjugate gradients. Throws NumericalError when CG
/// does not reach cfg.cg_tolerance and ValidationError when no well exists.
PressureSolution solve_pressure(const PermeabilityField& perm, const SimConfig& cfg);

/// Peaceman well index times darcy_constant (m^3/day/bar per cP).
double well_index(double permeability, const SimConfig& cfg);

/// Largest explicit upwind step (days) allowed by cfg.cfl; +inf when nothing flows.
double stable_time_step(const PressureSolution& sol, const SimConfig& cfg);

/// One explicit first-order upwind step of the water fraction. Injectors
/// supply water fraction 1. Throws ValidationError when dt exceeds the CFL
/// bound.
std::vector<double> advance_tracer(const PressureSolution& sol, const SimConfig& cfg, std::span<const double> saturation,
                                   double dt);

enum class Quantity { rate, water_cut };

std::string to_string(Quantity q);

struct DatumDescriptor {
  double time = 0.0;
  std::size_t well = 0;
  Quantity quantity = Quantity::rate;
};

/// Predicted well data, flattened time-major then in well-list order. Each
/// well reports its rate magnitude (production or injection); producers also
/// report water cut.
struct PredictedData {
  std::vector<DatumDescriptor> descriptors;
  std::vector<double> values;
};

/// Descriptor layout simulate() produces for `cfg`.
std::vector<DatumDescriptor> data_layout(const SimConfig& cfg);

/// g(x): pressure once, then tracer transport to every report time.
PredictedData simulate(const geomodel::FaciesGrid& grid, const SimConfig& cfg);

/// CSV: time,well,quantity,value
void write_predicted_csv(const std::filesystem::path& path, const PredictedData& data, const SimConfig& cfg);

}  // namespace fhm::flow
