#include "fhm/flow/simulator.hpp"

#include <Eigen/IterativeLinearSolvers>
#include <Eigen/Sparse>
#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numbers>

#include "fhm/common/error.hpp"

namespace fhm::flow {

PermeabilityField permeability_from_facies(const geomodel::FaciesGrid& grid, const SimConfig& cfg) {
  PermeabilityField perm{grid.nx(), grid.ny(), std::vector<double>(grid.size())};
  for (std::size_t c = 0; c < grid.size(); ++c) {
    const auto code = grid.codes()[c];
    if (code >= cfg.facies_permeability.size()) {
      throw ValidationError("facies code " + std::to_string(code) + " has no permeability mapping");
    }
    perm.values[c] = cfg.facies_permeability[code];
  }
  return perm;
}

double well_index(double permeability, const SimConfig& cfg) {
  const double ro = cfg.peaceman_factor * std::sqrt(cfg.dx * cfg.dx + cfg.dy * cfg.dy);
  const double rw = cfg.well_radius_fraction * cfg.dx;
  return cfg.darcy_constant * 2.0 * std::numbers::pi * permeability * cfg.thickness / std::log(ro / rw);
}

namespace {

double harmonic(double a, double b) { return 2.0 * a * b / (a + b); }

}  // namespace

PressureSolution solve_pressure(const PermeabilityField& perm, const SimConfig& cfg) {
  const int nx = perm.nx, ny = perm.ny;
  if (cfg.wells.empty()) throw ValidationError("pressure system is singular: no well is defined");
  cfg.validate(nx, ny);
  if (perm.values.size() != static_cast<std::size_t>(nx) * ny) throw ShapeError("permeability field size mismatch");

  const auto n = static_cast<Eigen::Index>(nx) * ny;
  auto idx = [nx](int i, int j) { return static_cast<Eigen::Index>(j) * nx + i; };
  // transmissibility per unit mobility, divided by viscosity
  const double tx = cfg.darcy_constant * cfg.thickness * cfg.dy / cfg.dx / cfg.viscosity;
  const double ty = cfg.darcy_constant * cfg.thickness * cfg.dx / cfg.dy / cfg.viscosity;

  // Pressures are solved relative to the lowest BHP to keep the right-hand
  // side on the scale of the driving pressure differences.
  double p_ref = std::numeric_limits<double>::infinity();
  for (const auto& w : cfg.wells) p_ref = std::min(p_ref, w.bhp);

  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(static_cast<std::size_t>(n) * 5);
  Eigen::VectorXd diag = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n);
  auto couple = [&](Eigen::Index a, Eigen::Index b, double t) {
    trip.emplace_back(a, b, -t);
    trip.emplace_back(b, a, -t);
    diag[a] += t;
    diag[b] += t;
  };
  for (int j = 0; j < ny; ++j) {
    for (int i = 0; i < nx; ++i) {
      const double k = perm.values[static_cast<std::size_t>(idx(i, j))];
      if (i + 1 < nx) couple(idx(i, j), idx(i + 1, j), tx * harmonic(k, perm.values[static_cast<std::size_t>(idx(i + 1, j))]));
      if (j + 1 < ny) couple(idx(i, j), idx(i, j + 1), ty * harmonic(k, perm.values[static_cast<std::size_t>(idx(i, j + 1))]));
    }
  }
  std::vector<double> wi(cfg.wells.size());
  for (std::size_t w = 0; w < cfg.wells.size(); ++w) {
    const auto& well = cfg.wells[w];
    const auto c = idx(well.i, well.j);
    wi[w] = well_index(perm.values[static_cast<std::size_t>(c)], cfg) / cfg.viscosity;
    diag[c] += wi[w];
    rhs[c] += wi[w] * (well.bhp - p_ref);
  }
  for (Eigen::Index c = 0; c < n; ++c) trip.emplace_back(c, c, diag[c]);

  Eigen::SparseMatrix<double> a(n, n);
  a.setFromTriplets(trip.begin(), trip.end());

  Eigen::ConjugateGradient<Eigen::SparseMatrix<double>, Eigen::Lower | Eigen::Upper> cg;
  cg.setTolerance(cfg.cg_tolerance);
  cg.setMaxIterations(cfg.cg_max_iterations);
  cg.compute(a);
  const Eigen::VectorXd p = cg.solve(rhs);
  const double rel = rhs.norm() > 0.0 ? (rhs - a * p).norm() / rhs.norm() : 0.0;
  if (cg.info() != Eigen::Success || !(rel <= cfg.cg_tolerance * 10.0)) {
    throw NumericalError("conjugate gradients did not converge: relative residual " + std::to_string(rel) + " after " +
                         std::to_string(cg.iterations()) + " iterations");
  }

  PressureSolution sol;
  sol.nx = nx;
  sol.ny = ny;
  sol.cg_iterations = static_cast<int>(cg.iterations());
  sol.relative_residual = rel;
  sol.pressure.resize(static_cast<std::size_t>(n));
  for (Eigen::Index c = 0; c < n; ++c) sol.pressure[static_cast<std::size_t>(c)] = p[c] + p_ref;
  sol.flux_x.assign(static_cast<std::size_t>(std::max(nx - 1, 0)) * ny, 0.0);
  sol.flux_y.assign(static_cast<std::size_t>(nx) * std::max(ny - 1, 0), 0.0);
  for (int j = 0; j < ny; ++j) {
    for (int i = 0; i < nx; ++i) {
      const double k = perm.values[static_cast<std::size_t>(idx(i, j))];
      if (i + 1 < nx) {
        const double t = tx * harmonic(k, perm.values[static_cast<std::size_t>(idx(i + 1, j))]);
        sol.flux_x[static_cast<std::size_t>(j) * (nx - 1) + i] = t * (p[idx(i, j)] - p[idx(i + 1, j)]);
      }
      if (j + 1 < ny) {
        const double t = ty * harmonic(k, perm.values[static_cast<std::size_t>(idx(i, j + 1))]);
        sol.flux_y[static_cast<std::size_t>(j) * nx + i] = t * (p[idx(i, j)] - p[idx(i, j + 1)]);
      }
    }
  }
  sol.well_outflow.resize(cfg.wells.size());
  for (std::size_t w = 0; w < cfg.wells.size(); ++w) {
    const auto& well = cfg.wells[w];
    sol.well_outflow[w] = wi[w] * (p[idx(well.i, well.j)] - (well.bhp - p_ref));
  }
  return sol;
}

namespace {

// Face outflow, well injection and production per cell.
struct CellBalance {
  std::vector<double> outflow;
  std::vector<double> injection;
  std::vector<double> production;
};

CellBalance cell_balance(const PressureSolution& sol, const SimConfig& cfg) {
  const int nx = sol.nx, ny = sol.ny;
  const std::size_t n = static_cast<std::size_t>(nx) * ny;
  CellBalance b{std::vector<double>(n, 0.0), std::vector<double>(n, 0.0), std::vector<double>(n, 0.0)};
  for (int j = 0; j < ny; ++j) {
    for (int i = 0; i + 1 < nx; ++i) {
      const double f = sol.flux_x[static_cast<std::size_t>(j) * (nx - 1) + i];
      const std::size_t a = static_cast<std::size_t>(j) * nx + i;
      b.outflow[f > 0.0 ? a : a + 1] += std::abs(f);
    }
  }
  for (int j = 0; j + 1 < ny; ++j) {
    for (int i = 0; i < nx; ++i) {
      const double f = sol.flux_y[static_cast<std::size_t>(j) * nx + i];
      const std::size_t a = static_cast<std::size_t>(j) * nx + i;
      b.outflow[f > 0.0 ? a : a + nx] += std::abs(f);
    }
  }
  for (std::size_t w = 0; w < cfg.wells.size(); ++w) {
    const std::size_t c = static_cast<std::size_t>(cfg.wells[w].j) * nx + cfg.wells[w].i;
    const double q = sol.well_outflow.at(w);
    if (q > 0.0) {
      b.production[c] += q;
    } else {
      b.injection[c] -= q;
    }
  }
  return b;
}

double max_cell_outflow(const CellBalance& b) {
  double m = 0.0;
  for (std::size_t c = 0; c < b.outflow.size(); ++c) m = std::max(m, b.outflow[c] + b.production[c]);
  return m;
}

double pore_volume(const SimConfig& cfg) { return cfg.dx * cfg.dy * cfg.thickness * cfg.porosity; }

}  // namespace

double stable_time_step(const PressureSolution& sol, const SimConfig& cfg) {
  const double m = max_cell_outflow(cell_balance(sol, cfg));
  if (m <= 0.0) return std::numeric_limits<double>::infinity();
  return cfg.cfl * pore_volume(cfg) / m;
}

std::vector<double> advance_tracer(const PressureSolution& sol, const SimConfig& cfg, std::span<const double> saturation,
                                   double dt) {
  const int nx = sol.nx, ny = sol.ny;
  const std::size_t n = static_cast<std::size_t>(nx) * ny;
  if (saturation.size() != n) throw ShapeError("saturation field size mismatch");
  if (!(dt >= 0.0)) throw ValidationError("time step must be non-negative");

  const CellBalance b = cell_balance(sol, cfg);
  const double max_out = max_cell_outflow(b);
  if (max_out > 0.0 && dt * max_out > cfg.cfl * pore_volume(cfg) * (1.0 + 1e-12)) {
    throw ValidationError("time step " + std::to_string(dt) + " violates the CFL bound " +
                          std::to_string(cfg.cfl * pore_volume(cfg) / max_out));
  }

  std::vector<double> accum(n, 0.0);  // net water volume rate into each cell
  for (int j = 0; j < ny; ++j) {
    for (int i = 0; i + 1 < nx; ++i) {
      const double f = sol.flux_x[static_cast<std::size_t>(j) * (nx - 1) + i];
      const std::size_t a = static_cast<std::size_t>(j) * nx + i;
      const double water = f * (f > 0.0 ? saturation[a] : saturation[a + 1]);
      accum[a] -= water;
      accum[a + 1] += water;
    }
  }
  for (int j = 0; j + 1 < ny; ++j) {
    for (int i = 0; i < nx; ++i) {
      const double f = sol.flux_y[static_cast<std::size_t>(j) * nx + i];
      const std::size_t a = static_cast<std::size_t>(j) * nx + i;
      const double water = f * (f > 0.0 ? saturation[a] : saturation[a + nx]);
      accum[a] -= water;
      accum[a + nx] += water;
    }
  }
  std::vector<double> next(n);
  const double scale = dt / pore_volume(cfg);
  for (std::size_t c = 0; c < n; ++c) {
    const double s = saturation[c] + scale * (accum[c] + b.injection[c] - b.production[c] * saturation[c]);
    next[c] = std::clamp(s, 0.0, 1.0);
  }
  return next;
}

std::string to_string(Quantity q) { return q == Quantity::rate ? "rate" : "water_cut"; }

std::vector<DatumDescriptor> data_layout(const SimConfig& cfg) {
  std::vector<DatumDescriptor> out;
  for (double t : cfg.report_times) {
    for (std::size_t w = 0; w < cfg.wells.size(); ++w) {
      out.push_back({t, w, Quantity::rate});
      if (cfg.wells[w].kind == WellKind::producer) out.push_back({t, w, Quantity::water_cut});
    }
  }
  return out;
}

PredictedData simulate(const geomodel::FaciesGrid& grid, const SimConfig& cfg) {
  cfg.validate(grid.nx(), grid.ny());
  const PressureSolution sol = solve_pressure(permeability_from_facies(grid, cfg), cfg);
  const double dt_max = stable_time_step(sol, cfg);

  PredictedData out;
  out.descriptors = data_layout(cfg);
  out.values.reserve(out.descriptors.size());
  std::vector<double> sat(grid.size(), 0.0);
  double t = 0.0;
  for (double target : cfg.report_times) {
    while (t < target) {
      const double dt = std::min(dt_max, target - t);
      sat = advance_tracer(sol, cfg, sat, dt);
      t = (dt == target - t) ? target : t + dt;
    }
    for (std::size_t w = 0; w < cfg.wells.size(); ++w) {
      const auto& well = cfg.wells[w];
      out.values.push_back(std::abs(sol.well_outflow[w]));
      if (well.kind == WellKind::producer) {
        // the produced stream is upwinded from the well cell
        out.values.push_back(sat[grid.index(well.i, well.j)]);
      }
    }
  }
  return out;
}

void write_predicted_csv(const std::filesystem::path& path, const PredictedData& data, const SimConfig& cfg) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw ValidationError("cannot open " + path.string() + " for writing");
  os << "time,well,quantity,value\n" << std::setprecision(17);
  for (std::size_t d = 0; d < data.values.size(); ++d) {
    const auto& desc = data.descriptors[d];
    os << desc.time << ',' << cfg.wells.at(desc.well).name << ',' << to_string(desc.quantity) << ',' << data.values[d]
       << '\n';
  }
}

}  // namespace fhm::flow
