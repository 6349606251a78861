#pragma once

#include <string>
#include <vector>

namespace fhm::flow {

enum class WellKind { producer, injector };

/// Vertical well completed in one cell, controlled by bottom-hole pressure.
struct Well {
  std::string name;
  int i = 0;
  int j = 0;
  WellKind kind = WellKind::producer;
  double bhp = 0.0;  // bar
};

/// Forward-model settings. Units: metres, millidarcy, bar, centipoise, days;
/// volumetric rates in m^3/day.
struct SimConfig {
  double dx = 30.0;
  double dy = 30.0;
  double thickness = 10.0;
  /// Permeability per facies code (index = code).
  std::vector<double> facies_permeability{500.0, 5000.0};
  std::vector<Well> wells;
  double viscosity = 1.0;
  double porosity = 0.2;
  /// m^3/day per (mD * m * bar / (cP * m)); 1.0 gives unit-free tests.
  double darcy_constant = 0.00852702;
  /// Peaceman equivalent radius r_o = factor * sqrt(dx^2 + dy^2).
  double peaceman_factor = 0.14;
  /// Well radius as a fraction of dx.
  double well_radius_fraction = 0.1;
  std::vector<double> report_times;  // days, strictly increasing, >= 0
  double cfl = 0.9;
  double cg_tolerance = 1e-12;
  int cg_max_iterations = 20000;

  /// Throws ValidationError when an invariant fails for an nx x ny grid.
  void validate(int nx, int ny) const;

  /// Four corner producers and three injectors on the centre line, which
  /// stand in for the unpublished well coordinates of the reference case.
  static SimConfig desk_default(int nx, int ny);
};

}  // namespace fhm::flow
