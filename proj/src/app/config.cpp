#include "fhm/app/config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "fhm/common/error.hpp"
#include "fhm/common/rng.hpp"

namespace fhm::app {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  if (trim(s).empty()) return out;
  std::string item;
  std::istringstream is(s);
  while (std::getline(is, item, sep)) out.push_back(trim(item));
  return out;
}

template <class T>
T parse_number(const std::string& s) {
  T v{};
  const auto t = trim(s);
  const auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (ec != std::errc{} || p != t.data() + t.size() || t.empty()) {
    throw ValidationError("'" + s + "' is not a valid number");
  }
  return v;
}

std::vector<double> parse_doubles(const std::string& s) {
  std::vector<double> out;
  for (const auto& item : split(s, ',')) out.push_back(parse_number<double>(item));
  return out;
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string fmt_list(const std::vector<double>& v) {
  std::string out;
  for (std::size_t n = 0; n < v.size(); ++n) out += (n ? "," : "") + fmt(v[n]);
  return out;
}

std::pair<int, int> parse_cell(const std::string& s) {
  const auto parts = split(s, ':');
  if (parts.size() != 2) throw ValidationError("cell '" + s + "' must be i:j");
  return {parse_number<int>(parts[0]), parse_number<int>(parts[1])};
}

std::vector<nn::ConvStage> parse_conv(const std::string& s) {
  std::vector<nn::ConvStage> out;
  for (const auto& item : split(s, ',')) {
    const auto p = split(item, ':');
    if (p.size() != 5) throw ValidationError("conv stage '" + item + "' must be kernels:kh:kw:sh:sw");
    out.push_back({parse_number<int>(p[0]), parse_number<int>(p[1]), parse_number<int>(p[2]),
                   parse_number<int>(p[3]), parse_number<int>(p[4])});
  }
  return out;
}

std::vector<flow::Well> parse_wells(const std::string& s) {
  std::vector<flow::Well> out;
  for (const auto& item : split(s, ',')) {
    const auto p = split(item, ':');
    if (p.size() != 5) throw ValidationError("well '" + item + "' must be name:producer|injector:i:j:bhp");
    flow::Well w;
    w.name = p[0];
    if (p[1] == "producer") {
      w.kind = flow::WellKind::producer;
    } else if (p[1] == "injector") {
      w.kind = flow::WellKind::injector;
    } else {
      throw ValidationError("well kind '" + p[1] + "' must be producer or injector");
    }
    w.i = parse_number<int>(p[2]);
    w.j = parse_number<int>(p[3]);
    w.bhp = parse_number<double>(p[4]);
    out.push_back(w);
  }
  return out;
}

nn::NetworkConfig preset(const std::string& name, int nx, int ny) {
  if (name == "table1-desk") return nn::NetworkConfig::table1_desk(nx, ny);
  if (name == "table1") return nn::NetworkConfig::table1(nx, ny);
  throw ValidationError("unknown network preset '" + name + "' (expected table1-desk or table1)");
}

using Setter = std::function<void(ExperimentConfig&, const std::string&)>;

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = [] {
    std::map<std::string, Setter> m;
    m["generator.n_channels_min"] = [](auto& c, auto& v) { c.generator.n_channels_min = parse_number<int>(v); };
    m["generator.n_channels_max"] = [](auto& c, auto& v) { c.generator.n_channels_max = parse_number<int>(v); };
    m["generator.width_min"] = [](auto& c, auto& v) { c.generator.width_min = parse_number<double>(v); };
    m["generator.width_max"] = [](auto& c, auto& v) { c.generator.width_max = parse_number<double>(v); };
    m["generator.amplitude_min"] = [](auto& c, auto& v) { c.generator.amplitude_min = parse_number<double>(v); };
    m["generator.amplitude_max"] = [](auto& c, auto& v) { c.generator.amplitude_max = parse_number<double>(v); };
    m["generator.wavelength_min"] = [](auto& c, auto& v) { c.generator.wavelength_min = parse_number<double>(v); };
    m["generator.wavelength_max"] = [](auto& c, auto& v) { c.generator.wavelength_max = parse_number<double>(v); };
    m["generator.orientation"] = [](auto& c, auto& v) {
      if (v == "x") {
        c.generator.orientation = geomodel::Orientation::along_x;
      } else if (v == "y") {
        c.generator.orientation = geomodel::Orientation::along_y;
      } else {
        throw ValidationError("generator.orientation must be x or y");
      }
    };
    m["generator.fraction_min"] = [](auto& c, auto& v) { c.generator.target_fraction_min = parse_number<double>(v); };
    m["generator.fraction_max"] = [](auto& c, auto& v) { c.generator.target_fraction_max = parse_number<double>(v); };
    m["generator.max_attempts"] = [](auto& c, auto& v) { c.generator.max_attempts = parse_number<int>(v); };

    m["data.n_train"] = [](auto& c, auto& v) { c.data.n_train = parse_number<int>(v); };
    m["data.n_val"] = [](auto& c, auto& v) { c.data.n_val = parse_number<int>(v); };

    m["network.n_z"] = [](auto& c, auto& v) { c.network.n_z = parse_number<int>(v); };
    m["network.conv"] = [](auto& c, auto& v) { c.network.conv = parse_conv(v); };
    m["network.dense"] = [](auto& c, auto& v) {
      c.network.dense_units.clear();
      for (const auto& item : split(v, ',')) c.network.dense_units.push_back(parse_number<int>(item));
    };
    m["network.dropout"] = [](auto& c, auto& v) { c.network.dropout_rate = parse_number<double>(v); };
    m["network.output_kernel"] = [](auto& c, auto& v) { c.network.output_kernel = parse_number<int>(v); };

    m["training.epochs"] = [](auto& c, auto& v) { c.training.epochs = parse_number<int>(v); };
    m["training.batch_size"] = [](auto& c, auto& v) { c.training.batch_size = parse_number<int>(v); };
    m["training.learning_rate"] = [](auto& c, auto& v) { c.training.learning_rate = parse_number<double>(v); };
    m["training.beta1"] = [](auto& c, auto& v) { c.training.beta1 = parse_number<double>(v); };
    m["training.beta2"] = [](auto& c, auto& v) { c.training.beta2 = parse_number<double>(v); };
    m["training.epsilon"] = [](auto& c, auto& v) { c.training.epsilon = parse_number<double>(v); };
    m["training.lambda"] = [](auto& c, auto& v) { c.training.lambda = parse_number<double>(v); };

    m["simulation.dx"] = [](auto& c, auto& v) { c.simulation.dx = parse_number<double>(v); };
    m["simulation.dy"] = [](auto& c, auto& v) { c.simulation.dy = parse_number<double>(v); };
    m["simulation.thickness"] = [](auto& c, auto& v) { c.simulation.thickness = parse_number<double>(v); };
    m["simulation.facies_permeability"] = [](auto& c, auto& v) {
      c.simulation.facies_permeability = parse_doubles(v);
    };
    m["simulation.wells"] = [](auto& c, auto& v) { c.simulation.wells = parse_wells(v); };
    m["simulation.viscosity"] = [](auto& c, auto& v) { c.simulation.viscosity = parse_number<double>(v); };
    m["simulation.porosity"] = [](auto& c, auto& v) { c.simulation.porosity = parse_number<double>(v); };
    m["simulation.darcy_constant"] = [](auto& c, auto& v) { c.simulation.darcy_constant = parse_number<double>(v); };
    m["simulation.peaceman_factor"] = [](auto& c, auto& v) { c.simulation.peaceman_factor = parse_number<double>(v); };
    m["simulation.well_radius_fraction"] = [](auto& c, auto& v) {
      c.simulation.well_radius_fraction = parse_number<double>(v);
    };
    m["simulation.report_times"] = [](auto& c, auto& v) { c.simulation.report_times = parse_doubles(v); };
    m["simulation.cfl"] = [](auto& c, auto& v) { c.simulation.cfl = parse_number<double>(v); };
    m["simulation.cg_tolerance"] = [](auto& c, auto& v) { c.simulation.cg_tolerance = parse_number<double>(v); };
    m["simulation.cg_max_iterations"] = [](auto& c, auto& v) {
      c.simulation.cg_max_iterations = parse_number<int>(v);
    };

    m["assim.n_e"] = [](auto& c, auto& v) { c.assim.n_e = parse_number<int>(v); };
    m["assim.n_a"] = [](auto& c, auto& v) { c.assim.n_a = parse_number<int>(v); };
    m["assim.alphas"] = [](auto& c, auto& v) { c.assim.alphas = parse_doubles(v); };
    m["assim.noise_fraction"] = [](auto& c, auto& v) { c.assim.noise_fraction = parse_number<double>(v); };
    m["assim.water_cut_floor"] = [](auto& c, auto& v) { c.assim.water_cut_floor = parse_number<double>(v); };
    m["assim.rate_floor_fraction"] = [](auto& c, auto& v) { c.assim.rate_floor_fraction = parse_number<double>(v); };
    m["assim.hard_variance"] = [](auto& c, auto& v) { c.assim.hard_variance = parse_number<double>(v); };
    m["assim.hard_cells"] = [](auto& c, auto& v) {
      c.assim.hard_cells.clear();
      for (const auto& item : split(v, ',')) c.assim.hard_cells.push_back(parse_cell(item));
    };
    m["assim.prior_source"] = [](auto& c, auto& v) {
      if (v == "encoder_means") {
        c.assim.prior_source = assim::PriorSource::encoder_means;
      } else if (v == "standard_normal") {
        c.assim.prior_source = assim::PriorSource::standard_normal;
      } else {
        throw ValidationError("assim.prior_source must be encoder_means or standard_normal");
      }
    };
    m["assim.map_count"] = [](auto& c, auto& v) { c.assim.map_count = parse_number<int>(v); };

    m["seed"] = [](auto& c, auto& v) { c.seed = parse_number<std::uint64_t>(v); };
    m["threads"] = [](auto& c, auto& v) { c.threads = parse_number<int>(v); };
    m["paths.run_dir"] = [](auto& c, auto& v) { c.run_dir = v; };
    return m;
  }();
  return table;
}

}  // namespace

assim::MdaSchedule AssimSettings::schedule() const {
  if (!alphas.empty()) {
    if (static_cast<int>(alphas.size()) != n_a) {
      throw ValidationError("assim.alphas has " + std::to_string(alphas.size()) + " entries but assim.n_a = " +
                            std::to_string(n_a));
    }
    return assim::MdaSchedule{alphas};
  }
  return assim::default_schedule(n_a);
}

void ExperimentConfig::validate() const {
  if (nx != generator.nx || ny != generator.ny || nx != network.nx || ny != network.ny) {
    throw ValidationError("grid size disagrees between generator and network");
  }
  if (threads < 1) throw ValidationError("threads must be >= 1");
  generator.validate();
  network.validate();
  training.validate();
  simulation.validate(nx, ny);
  if (data.n_train < 1 || data.n_val < 1) throw ValidationError("data.n_train and data.n_val must be >= 1");
  if (assim.n_e < 2) throw ValidationError("assim.n_e must be >= 2");
  assim.schedule().validate();
  if (!(assim.noise_fraction >= 0.0) || !(assim.water_cut_floor > 0.0) || !(assim.rate_floor_fraction > 0.0) ||
      !(assim.hard_variance > 0.0)) {
    throw ValidationError("noise fraction must be >= 0 and floors and hard variance > 0");
  }
  for (const auto& [i, j] : hard_cells()) {
    if (i < 0 || i >= nx || j < 0 || j >= ny) {
      throw ValidationError("hard cell " + std::to_string(i) + ":" + std::to_string(j) + " is outside the grid");
    }
  }
  if (assim.map_count < 0) throw ValidationError("assim.map_count must be >= 0");
}

std::vector<std::pair<int, int>> ExperimentConfig::hard_cells() const {
  if (!assim.hard_cells.empty()) return assim.hard_cells;
  std::vector<std::pair<int, int>> cells;
  for (const auto& w : simulation.wells) cells.emplace_back(w.i, w.j);
  return cells;
}

std::uint64_t stage_seed(const ExperimentConfig& cfg, SeedTag tag) {
  return derive_seed(cfg.seed, static_cast<std::uint64_t>(tag));
}

ExperimentConfig parse_config(std::istream& is, const std::string& source) {
  struct Entry {
    std::string key, value;
    int line;
  };
  std::vector<Entry> entries;
  std::string line;
  for (int n = 1; std::getline(is, line); ++n) {
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    if (trim(line).empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ValidationError(source + ":" + std::to_string(n) + ": expected key=value");
    entries.push_back({trim(line.substr(0, eq)), trim(line.substr(eq + 1)), n});
  }

  ExperimentConfig cfg;
  auto fail = [&](const Entry& e, const std::string& what) {
    throw ValidationError(source + ":" + std::to_string(e.line) + ": " + e.key + ": " + what);
  };
  // Structural keys first: they reset the derived defaults.
  for (const auto& e : entries) {
    try {
      if (e.key == "grid.nx") cfg.nx = parse_number<int>(e.value);
      if (e.key == "grid.ny") cfg.ny = parse_number<int>(e.value);
      if (e.key == "network.preset") cfg.network_preset = e.value;
    } catch (const ValidationError& err) {
      fail(e, err.what());
    }
  }
  if (cfg.nx < 1 || cfg.ny < 1) throw ValidationError(source + ": grid.nx and grid.ny must be >= 1");
  cfg.generator.nx = cfg.nx;
  cfg.generator.ny = cfg.ny;
  try {
    cfg.network = preset(cfg.network_preset, cfg.nx, cfg.ny);
  } catch (const ValidationError& err) {
    throw ValidationError(source + ": " + err.what());
  }
  cfg.simulation = flow::SimConfig::desk_default(cfg.nx, cfg.ny);

  const auto& table = setters();
  for (const auto& e : entries) {
    if (e.key == "grid.nx" || e.key == "grid.ny" || e.key == "network.preset") continue;
    const auto it = table.find(e.key);
    if (it == table.end()) fail(e, "unknown key");
    try {
      it->second(cfg, e.value);
    } catch (const ValidationError& err) {
      fail(e, err.what());
    }
  }
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ValidationError("cannot read config " + path.string());
  return parse_config(is, path.string());
}

std::string format_config(const ExperimentConfig& c) {
  std::ostringstream os;
  auto kv = [&](const std::string& k, const std::string& v) { os << k << '=' << v << '\n'; };
  kv("seed", std::to_string(c.seed));
  kv("threads", std::to_string(c.threads));
  kv("paths.run_dir", c.run_dir.string());
  kv("grid.nx", std::to_string(c.nx));
  kv("grid.ny", std::to_string(c.ny));

  const auto& g = c.generator;
  kv("generator.n_channels_min", std::to_string(g.n_channels_min));
  kv("generator.n_channels_max", std::to_string(g.n_channels_max));
  kv("generator.width_min", fmt(g.width_min));
  kv("generator.width_max", fmt(g.width_max));
  kv("generator.amplitude_min", fmt(g.amplitude_min));
  kv("generator.amplitude_max", fmt(g.amplitude_max));
  kv("generator.wavelength_min", fmt(g.wavelength_min));
  kv("generator.wavelength_max", fmt(g.wavelength_max));
  kv("generator.orientation", g.orientation == geomodel::Orientation::along_x ? "x" : "y");
  kv("generator.fraction_min", fmt(g.target_fraction_min));
  kv("generator.fraction_max", fmt(g.target_fraction_max));
  kv("generator.max_attempts", std::to_string(g.max_attempts));

  kv("data.n_train", std::to_string(c.data.n_train));
  kv("data.n_val", std::to_string(c.data.n_val));

  kv("network.preset", c.network_preset);
  kv("network.n_z", std::to_string(c.network.n_z));
  std::string conv;
  for (std::size_t n = 0; n < c.network.conv.size(); ++n) {
    const auto& s = c.network.conv[n];
    conv += (n ? "," : "") + std::to_string(s.kernels) + ":" + std::to_string(s.kernel_h) + ":" +
            std::to_string(s.kernel_w) + ":" + std::to_string(s.stride_h) + ":" + std::to_string(s.stride_w);
  }
  kv("network.conv", conv);
  std::string dense;
  for (std::size_t n = 0; n < c.network.dense_units.size(); ++n) {
    dense += (n ? "," : "") + std::to_string(c.network.dense_units[n]);
  }
  kv("network.dense", dense);
  kv("network.dropout", fmt(c.network.dropout_rate));
  kv("network.output_kernel", std::to_string(c.network.output_kernel));

  const auto& t = c.training;
  kv("training.epochs", std::to_string(t.epochs));
  kv("training.batch_size", std::to_string(t.batch_size));
  kv("training.learning_rate", fmt(t.learning_rate));
  kv("training.beta1", fmt(t.beta1));
  kv("training.beta2", fmt(t.beta2));
  kv("training.epsilon", fmt(t.epsilon));
  kv("training.lambda", fmt(t.lambda));

  const auto& s = c.simulation;
  kv("simulation.dx", fmt(s.dx));
  kv("simulation.dy", fmt(s.dy));
  kv("simulation.thickness", fmt(s.thickness));
  kv("simulation.facies_permeability", fmt_list(s.facies_permeability));
  std::string wells;
  for (std::size_t n = 0; n < s.wells.size(); ++n) {
    const auto& w = s.wells[n];
    wells += (n ? "," : "") + w.name + ":" + (w.kind == flow::WellKind::producer ? "producer" : "injector") + ":" +
             std::to_string(w.i) + ":" + std::to_string(w.j) + ":" + fmt(w.bhp);
  }
  kv("simulation.wells", wells);
  kv("simulation.viscosity", fmt(s.viscosity));
  kv("simulation.porosity", fmt(s.porosity));
  kv("simulation.darcy_constant", fmt(s.darcy_constant));
  kv("simulation.peaceman_factor", fmt(s.peaceman_factor));
  kv("simulation.well_radius_fraction", fmt(s.well_radius_fraction));
  kv("simulation.report_times", fmt_list(s.report_times));
  kv("simulation.cfl", fmt(s.cfl));
  kv("simulation.cg_tolerance", fmt(s.cg_tolerance));
  kv("simulation.cg_max_iterations", std::to_string(s.cg_max_iterations));

  const auto& a = c.assim;
  kv("assim.n_e", std::to_string(a.n_e));
  kv("assim.n_a", std::to_string(a.n_a));
  kv("assim.alphas", fmt_list(a.alphas));
  kv("assim.noise_fraction", fmt(a.noise_fraction));
  kv("assim.water_cut_floor", fmt(a.water_cut_floor));
  kv("assim.rate_floor_fraction", fmt(a.rate_floor_fraction));
  kv("assim.hard_variance", fmt(a.hard_variance));
  std::string cells;
  for (std::size_t n = 0; n < a.hard_cells.size(); ++n) {
    cells += (n ? "," : "") + std::to_string(a.hard_cells[n].first) + ":" + std::to_string(a.hard_cells[n].second);
  }
  kv("assim.hard_cells", cells);
  kv("assim.prior_source", assim::to_string(a.prior_source));
  kv("assim.map_count", std::to_string(a.map_count));
  return os.str();
}

}  // namespace fhm::app
