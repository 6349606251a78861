#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <numeric>

#include "fhm/common/error.hpp"
#include "fhm/common/rng.hpp"
#include "fhm/flow/simulator.hpp"
#include "fhm/geomodel/channel_generator.hpp"

using namespace fhm;
using namespace fhm::flow;
using geomodel::FaciesGrid;

namespace {

SimConfig unit_config() {
  SimConfig c;
  c.dx = c.dy = c.thickness = 1.0;
  c.viscosity = 1.0;
  c.darcy_constant = 1.0;
  c.facies_permeability = {1.0, 1.0};
  return c;
}

FaciesGrid random_grid(int nx, int ny, std::uint64_t seed) {
  geomodel::ChannelGenParams p;
  p.nx = nx;
  p.ny = ny;
  return geomodel::generate_channel_realization(p, seed);
}

FaciesGrid mirror_x(const FaciesGrid& g) {
  FaciesGrid m(g.nx(), g.ny(), g.k());
  for (int j = 0; j < g.ny(); ++j) {
    for (int i = 0; i < g.nx(); ++i) m.set(g.nx() - 1 - i, j, g.at(i, j));
  }
  return m;
}

double rel_diff(double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-300}); }

// Largest per-cell imbalance of face fluxes and well outflow, relative to the
// gross well rate.
double worst_cell_imbalance(const PressureSolution& sol, const SimConfig& cfg) {
  const int nx = sol.nx, ny = sol.ny;
  std::vector<double> net(static_cast<std::size_t>(nx) * ny, 0.0);
  for (int j = 0; j < ny; ++j) {
    for (int i = 0; i + 1 < nx; ++i) {
      const double f = sol.flux_x[static_cast<std::size_t>(j) * (nx - 1) + i];
      net[static_cast<std::size_t>(j) * nx + i] += f;
      net[static_cast<std::size_t>(j) * nx + i + 1] -= f;
    }
  }
  for (int j = 0; j + 1 < ny; ++j) {
    for (int i = 0; i < nx; ++i) {
      const double f = sol.flux_y[static_cast<std::size_t>(j) * nx + i];
      net[static_cast<std::size_t>(j) * nx + i] += f;
      net[static_cast<std::size_t>(j + 1) * nx + i] -= f;
    }
  }
  double gross = 0.0;
  for (std::size_t w = 0; w < cfg.wells.size(); ++w) {
    net[static_cast<std::size_t>(cfg.wells[w].j) * nx + cfg.wells[w].i] += sol.well_outflow[w];
    gross += std::abs(sol.well_outflow[w]);
  }
  double worst = 0.0;
  for (double v : net) worst = std::max(worst, std::abs(v));
  return worst / gross;
}

}  // namespace

TEST_CASE("permeability lookup") {
  SimConfig cfg = unit_config();
  cfg.facies_permeability = {500.0, 5000.0};
  FaciesGrid all(4, 3, 2, std::vector<std::uint8_t>(12, 1));
  for (double k : permeability_from_facies(all, cfg).values) CHECK(k == 5000.0);

  FaciesGrid mixed(2, 1, 2, {0, 1});
  const auto perm = permeability_from_facies(mixed, cfg);
  CHECK(perm.values == std::vector<double>{500.0, 5000.0});

  FaciesGrid three(2, 1, 3, {0, 2});
  CHECK_THROWS_AS(permeability_from_facies(three, cfg), ValidationError);
}

TEST_CASE("config validation") {
  SimConfig cfg = unit_config();
  CHECK_THROWS_AS(cfg.validate(3, 1), ValidationError);  // no wells
  cfg.wells = {{"I", 0, 0, WellKind::injector, 2.0}, {"P", 2, 0, WellKind::producer, 1.0}};
  CHECK_NOTHROW(cfg.validate(3, 1));
  CHECK_THROWS_AS(cfg.validate(2, 1), ValidationError);  // well outside

  auto bad = cfg;
  bad.wells[1].kind = WellKind::injector;
  CHECK_THROWS_AS(bad.validate(3, 1), ValidationError);
  bad = cfg;
  bad.facies_permeability = {1.0, 0.0};
  CHECK_THROWS_AS(bad.validate(3, 1), ValidationError);
  bad = cfg;
  bad.report_times = {1.0, 1.0};
  CHECK_THROWS_AS(bad.validate(3, 1), ValidationError);
  bad = cfg;
  bad.report_times = {-1.0};
  CHECK_THROWS_AS(bad.validate(3, 1), ValidationError);
  bad = cfg;
  bad.cfl = 1.5;
  CHECK_THROWS_AS(bad.validate(3, 1), ValidationError);
}

TEST_CASE("no wells makes the pressure system singular") {
  SimConfig cfg = unit_config();
  FaciesGrid g(3, 1, 2);
  CHECK_THROWS_AS(solve_pressure(permeability_from_facies(g, cfg), cfg), ValidationError);
}

TEST_CASE("1x3 network matches series transmissibilities") {
  SimConfig cfg = unit_config();
  cfg.wells = {{"I", 0, 0, WellKind::injector, 2.0}, {"P", 2, 0, WellKind::producer, 1.0}};
  FaciesGrid g(3, 1, 2);
  const auto sol = solve_pressure(permeability_from_facies(g, cfg), cfg);

  // r_o = 0.14 sqrt(2), r_w = 0.1, unit k h mu
  const double wi = 2.0 * std::numbers::pi / std::log(0.14 * std::sqrt(2.0) / 0.1);
  const double q = (2.0 - 1.0) / (1.0 / wi + 1.0 + 1.0 + 1.0 / wi);
  CHECK(std::abs(well_index(1.0, cfg) - wi) <= 1e-12 * wi);
  CHECK(std::abs(sol.well_outflow[0] + q) <= 1e-12);
  CHECK(std::abs(sol.well_outflow[1] - q) <= 1e-12);
  CHECK(std::abs(sol.pressure[0] - (2.0 - q / wi)) <= 1e-12);
  CHECK(std::abs(sol.pressure[1] - (2.0 - q / wi - q)) <= 1e-12);
  CHECK(std::abs(sol.pressure[2] - (1.0 + q / wi)) <= 1e-12);
  CHECK(std::abs(sol.flux_x[0] - q) <= 1e-12);
  CHECK(std::abs(sol.flux_x[1] - q) <= 1e-12);
}

TEST_CASE("symmetric well pair gives a symmetric field") {
  SimConfig cfg = unit_config();
  const int n = 9;
  cfg.wells = {{"I", 1, 4, WellKind::injector, 3.0}, {"P", 7, 4, WellKind::producer, 1.0}};
  FaciesGrid g(n, n, 2);
  const auto sol = solve_pressure(permeability_from_facies(g, cfg), cfg);
  CHECK(std::abs(sol.well_outflow[0] + sol.well_outflow[1]) <= 1e-10 * std::abs(sol.well_outflow[1]));
  const double mid = 2.0;
  double worst = 0.0;
  for (int j = 0; j < n; ++j) {
    for (int i = 0; i < n; ++i) {
      const double p = sol.pressure[static_cast<std::size_t>(j) * n + i];
      const double px = sol.pressure[static_cast<std::size_t>(j) * n + (n - 1 - i)];
      const double py = sol.pressure[static_cast<std::size_t>(n - 1 - j) * n + i];
      worst = std::max({worst, std::abs((p - mid) + (px - mid)), std::abs(p - py)});
    }
  }
  CHECK(worst <= 1e-10);
}

TEST_CASE("mass balance on random channel grids") {
  const SimConfig cfg = SimConfig::desk_default(32, 32);
  for (std::uint64_t s = 0; s < 100; ++s) {
    const auto sol = solve_pressure(permeability_from_facies(random_grid(32, 32, s), cfg), cfg);
    double net = 0.0, gross = 0.0;
    for (double q : sol.well_outflow) {
      net += q;
      gross += std::abs(q);
    }
    CHECK(std::abs(net) <= 1e-8 * gross);
    CHECK(worst_cell_imbalance(sol, cfg) <= 1e-8);
    for (std::size_t w = 0; w < cfg.wells.size(); ++w) {
      if (cfg.wells[w].kind == WellKind::producer) {
        CHECK(sol.well_outflow[w] >= 0.0);
      } else {
        CHECK(sol.well_outflow[w] <= 0.0);
      }
    }
  }
}

TEST_CASE("tracer step") {
  SimConfig cfg = SimConfig::desk_default(32, 32);
  const auto grid = random_grid(32, 32, 7);
  const auto sol = solve_pressure(permeability_from_facies(grid, cfg), cfg);
  const double dt = stable_time_step(sol, cfg);
  REQUIRE(std::isfinite(dt));

  SUBCASE("saturations stay in [0, 1] and water volume is conserved") {
    std::vector<double> s(grid.size(), 0.0);
    const double pv = cfg.dx * cfg.dy * cfg.thickness * cfg.porosity;
    for (int step = 0; step < 400; ++step) {
      const auto next = advance_tracer(sol, cfg, s, dt);
      double change = 0.0, source = 0.0;
      for (std::size_t c = 0; c < s.size(); ++c) {
        CHECK(next[c] >= 0.0);
        CHECK(next[c] <= 1.0);
        change += (next[c] - s[c]) * pv;
      }
      for (std::size_t w = 0; w < cfg.wells.size(); ++w) {
        const double q = sol.well_outflow[w];
        source -= q > 0.0 ? q * s[grid.index(cfg.wells[w].i, cfg.wells[w].j)] : q;
      }
      CHECK(std::abs(change - dt * source) <= 1e-9 * std::max(1.0, dt * std::abs(source)));
      s = next;
    }
  }

  SUBCASE("CFL violation is rejected") {
    std::vector<double> s(grid.size(), 0.0);
    CHECK_THROWS_AS(advance_tracer(sol, cfg, s, dt * 1.01), ValidationError);
    CHECK_THROWS_AS(advance_tracer(sol, cfg, s, -1.0), ValidationError);
    CHECK_THROWS_AS(advance_tracer(sol, cfg, std::vector<double>(3, 0.0), dt), ShapeError);
  }
}

TEST_CASE("zero flux leaves saturation unchanged") {
  SimConfig cfg = unit_config();
  cfg.wells = {{"I", 0, 0, WellKind::injector, 1.5}, {"P", 3, 2, WellKind::producer, 1.5}};
  FaciesGrid g(4, 3, 2);
  const auto sol = solve_pressure(permeability_from_facies(g, cfg), cfg);
  CHECK(std::isinf(stable_time_step(sol, cfg)));
  std::vector<double> s(g.size());
  Rng rng(5);
  for (auto& v : s) v = rng.uniform();
  CHECK(advance_tracer(sol, cfg, s, 123.0) == s);
}

TEST_CASE("1D front follows the characteristic") {
  SimConfig cfg = unit_config();
  cfg.porosity = 0.2;
  const int n = 60;
  cfg.wells = {{"I", 0, 0, WellKind::injector, 10.0}, {"P", n - 1, 0, WellKind::producer, 0.0}};
  FaciesGrid g(n, 1, 2);
  const auto sol = solve_pressure(permeability_from_facies(g, cfg), cfg);
  const double q = -sol.well_outflow[0];
  const double pv = cfg.porosity;  // per cell
  const double dt = stable_time_step(sol, cfg);

  std::vector<double> s(g.size(), 0.0);
  double t = 0.0;
  for (double front_cells : {10.0, 25.0, 40.0}) {
    const double target = front_cells * pv / q;
    while (t < target) {
      const double step = std::min(dt, target - t);
      s = advance_tracer(sol, cfg, s, step);
      t += step;
    }
    const auto swept = std::count_if(s.begin(), s.end(), [](double v) { return v >= 0.5; });
    CHECK(std::abs(static_cast<double>(swept) - q * t / pv) <= 1.0);
  }
}

TEST_CASE("simulate layout and water cut") {
  SimConfig cfg = SimConfig::desk_default(32, 32);
  cfg.report_times.insert(cfg.report_times.begin(), 0.0);
  const auto layout = data_layout(cfg);
  CHECK(layout.size() == cfg.report_times.size() * (cfg.wells.size() + 4));
  CHECK(layout[0].time == 0.0);
  CHECK(layout[0].quantity == Quantity::rate);
  CHECK(layout[1].quantity == Quantity::water_cut);

  for (std::uint64_t s = 0; s < 20; ++s) {
    const auto data = simulate(random_grid(32, 32, 1000 + s), cfg);
    REQUIRE(data.values.size() == layout.size());
    std::vector<double> last(cfg.wells.size(), 0.0);
    for (std::size_t d = 0; d < data.values.size(); ++d) {
      const auto& desc = data.descriptors[d];
      const double v = data.values[d];
      CHECK(std::isfinite(v));
      if (desc.quantity == Quantity::rate) {
        CHECK(v >= 0.0);
        continue;
      }
      if (desc.time == 0.0) CHECK(v == 0.0);
      CHECK(v <= 1.0);
      CHECK(v >= last[desc.well]);
      last[desc.well] = v;
    }
  }
}

TEST_CASE("mirrored grids give mirrored data") {
  SimConfig cfg = SimConfig::desk_default(31, 31);
  cfg.wells = {{"P1", 2, 2, WellKind::producer, 207.0},   {"P2", 28, 2, WellKind::producer, 207.0},
               {"P3", 2, 28, WellKind::producer, 207.0},  {"P4", 28, 28, WellKind::producer, 207.0},
               {"I1", 15, 8, WellKind::injector, 276.0},  {"I2", 15, 22, WellKind::injector, 276.0}};
  const std::vector<std::size_t> swap = {1, 0, 3, 2, 4, 5};
  for (std::uint64_t s = 0; s < 5; ++s) {
    const auto grid = random_grid(31, 31, 50 + s);
    const auto a = simulate(grid, cfg);
    const auto b = simulate(mirror_x(grid), cfg);
    REQUIRE(a.values.size() == b.values.size());
    // matching entries: same time and quantity, mirrored well
    for (std::size_t d = 0; d < a.values.size(); ++d) {
      const auto& da = a.descriptors[d];
      std::size_t e = 0;
      while (!(b.descriptors[e].time == da.time && b.descriptors[e].quantity == da.quantity &&
               b.descriptors[e].well == swap[da.well])) {
        ++e;
      }
      if (da.quantity == Quantity::rate) {
        CHECK(rel_diff(a.values[d], b.values[e]) <= 1e-9);
      } else {
        CHECK(std::abs(a.values[d] - b.values[e]) <= 1e-9);
      }
    }
  }
}

TEST_CASE("relabelling wells permutes the data") {
  const SimConfig cfg = SimConfig::desk_default(32, 32);
  SimConfig shuffled = cfg;
  const std::vector<std::size_t> order = {4, 2, 6, 0, 5, 1, 3};
  for (std::size_t w = 0; w < order.size(); ++w) shuffled.wells[w] = cfg.wells[order[w]];
  const auto grid = random_grid(32, 32, 11);
  const auto a = simulate(grid, cfg);
  const auto b = simulate(grid, shuffled);
  REQUIRE(a.values.size() == b.values.size());
  for (std::size_t e = 0; e < b.values.size(); ++e) {
    const auto& db = b.descriptors[e];
    const std::size_t original = order[db.well];
    const auto it = std::find_if(a.descriptors.begin(), a.descriptors.end(), [&](const DatumDescriptor& da) {
      return da.time == db.time && da.quantity == db.quantity && da.well == original;
    });
    REQUIRE(it != a.descriptors.end());
    const double va = a.values[static_cast<std::size_t>(it - a.descriptors.begin())];
    CHECK(std::abs(va - b.values[e]) <= 1e-10 * std::max(1.0, std::abs(va)));
  }
}

TEST_CASE("permeability scaling") {
  const SimConfig cfg = SimConfig::desk_default(32, 32);
  const double c = 3.7;
  SimConfig scaled = cfg;
  for (auto& k : scaled.facies_permeability) k *= c;
  const auto grid = random_grid(32, 32, 23);

  SUBCASE("rates scale by c") {
    const auto a = solve_pressure(permeability_from_facies(grid, cfg), cfg);
    const auto b = solve_pressure(permeability_from_facies(grid, scaled), scaled);
    for (std::size_t w = 0; w < cfg.wells.size(); ++w) CHECK(rel_diff(b.well_outflow[w], c * a.well_outflow[w]) <= 1e-10);
  }

  SUBCASE("water cut is unchanged when the time grid shrinks by c") {
    for (auto& t : scaled.report_times) t /= c;
    const auto a = simulate(grid, cfg);
    const auto b = simulate(grid, scaled);
    for (std::size_t d = 0; d < a.values.size(); ++d) {
      if (a.descriptors[d].quantity == Quantity::rate) {
        CHECK(rel_diff(b.values[d], c * a.values[d]) <= 1e-10);
      } else {
        CHECK(std::abs(b.values[d] - a.values[d]) <= 1e-9);
      }
    }
  }
}

TEST_CASE("simulate is deterministic and writes CSV") {
  const SimConfig cfg = SimConfig::desk_default(32, 32);
  const auto grid = random_grid(32, 32, 3);
  const auto a = simulate(grid, cfg);
  CHECK(simulate(grid, cfg).values == a.values);

  const auto path = std::filesystem::temp_directory_path() / "fhm_tests" / "predicted.csv";
  std::filesystem::create_directories(path.parent_path());
  write_predicted_csv(path, a, cfg);
  std::ifstream is(path);
  std::string line;
  std::getline(is, line);
  CHECK(line == "time,well,quantity,value");
  std::getline(is, line);
  CHECK(line.rfind("15,P1,rate,", 0) == 0);
  std::size_t rows = 1;
  while (std::getline(is, line)) ++rows;
  CHECK(rows == a.values.size());
}
