#include "fhm/assim/observations.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "fhm/common/error.hpp"
#include "fhm/common/rng.hpp"

namespace fhm::assim {

std::string to_string(ObsKind kind) {
  switch (kind) {
    case ObsKind::hard_facies: return "hard_facies";
    case ObsKind::rate: return "rate";
    case ObsKind::water_cut: return "water_cut";
  }
  return "?";
}

ObsKind obs_kind_from_string(const std::string& s) {
  if (s == "hard_facies") return ObsKind::hard_facies;
  if (s == "rate") return ObsKind::rate;
  if (s == "water_cut") return ObsKind::water_cut;
  throw ValidationError("unknown observation kind '" + s + "'");
}

bool ObservationSet::has_hard_data() const {
  for (const auto& d : descriptors) {
    if (d.kind == ObsKind::hard_facies) return true;
  }
  return false;
}

void ObservationSet::validate() const {
  if (descriptors.empty()) throw ValidationError("observation set is empty");
  if (static_cast<std::size_t>(values.size()) != descriptors.size() ||
      static_cast<std::size_t>(variances.size()) != descriptors.size()) {
    throw ValidationError("observation descriptor, value and variance counts differ");
  }
  for (Eigen::Index i = 0; i < variances.size(); ++i) {
    if (!(variances[i] > 0.0) || !std::isfinite(variances[i])) {
      throw ValidationError("observation " + std::to_string(i) + " has a non-positive error variance");
    }
    if (!std::isfinite(values[i])) throw ValidationError("observation " + std::to_string(i) + " is not finite");
  }
}

void write_observations_csv(const std::filesystem::path& path, const ObservationSet& obs) {
  obs.validate();
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw ValidationError("cannot open " + path.string() + " for writing");
  os << "time,well_or_cell,kind,value,stddev\n" << std::setprecision(17);
  for (std::size_t d = 0; d < obs.size(); ++d) {
    const auto& desc = obs.descriptors[d];
    const auto i = static_cast<Eigen::Index>(d);
    os << desc.time << ',';
    if (desc.kind == ObsKind::hard_facies) {
      os << desc.cell_i << ':' << desc.cell_j << ",hard_facies," << desc.facies;
    } else {
      os << desc.well << ',' << to_string(desc.kind) << ',' << obs.values[i];
    }
    os << ',' << std::sqrt(obs.variances[i]) << '\n';
  }
}

ObservationSet read_observations_csv(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ValidationError("cannot open observations " + path.string());
  std::string line;
  if (!std::getline(is, line) || line.rfind("time,well_or_cell,kind,value,stddev", 0) != 0) {
    throw FormatError("observation CSV must start with the header time,well_or_cell,kind,value,stddev");
  }
  std::vector<ObsDescriptor> desc;
  std::vector<double> values, variances;
  std::size_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    if (f.size() != 5) throw FormatError("observation CSV line " + std::to_string(lineno) + " needs 5 fields");
    try {
      ObsDescriptor d;
      d.time = std::stod(f[0]);
      d.kind = obs_kind_from_string(f[2]);
      const double value = std::stod(f[3]);
      const double sd = std::stod(f[4]);
      if (d.kind == ObsKind::hard_facies) {
        const auto colon = f[1].find(':');
        if (colon == std::string::npos) throw FormatError("hard-facies location must be i:j");
        d.cell_i = std::stoi(f[1].substr(0, colon));
        d.cell_j = std::stoi(f[1].substr(colon + 1));
        d.facies = static_cast<int>(value);
        if (d.facies != value || d.facies < 0) throw FormatError("hard-facies value must be a facies code");
        values.push_back(1.0);
      } else {
        d.well = f[1];
        values.push_back(value);
      }
      variances.push_back(sd * sd);
      desc.push_back(std::move(d));
    } catch (const std::logic_error&) {
      throw FormatError("observation CSV line " + std::to_string(lineno) + " has a malformed number");
    }
  }
  ObservationSet obs;
  obs.descriptors = std::move(desc);
  obs.values = Eigen::Map<Eigen::VectorXd>(values.data(), static_cast<Eigen::Index>(values.size()));
  obs.variances = Eigen::Map<Eigen::VectorXd>(variances.data(), static_cast<Eigen::Index>(variances.size()));
  obs.validate();
  return obs;
}

Eigen::MatrixXd perturb_observations(const ObservationSet& obs, double alpha, std::uint64_t seed,
                                     const std::vector<std::uint64_t>& member_ids) {
  if (!(alpha > 0.0)) throw ValidationError("inflation factor must be positive");
  obs.validate();
  const auto nd = static_cast<Eigen::Index>(obs.size());
  const auto ne = static_cast<Eigen::Index>(member_ids.size());
  Eigen::MatrixXd out(nd, ne);
  const Eigen::VectorXd sd = (alpha * obs.variances).cwiseSqrt();
  for (Eigen::Index j = 0; j < ne; ++j) {
    Rng rng(derive_seed(seed, member_ids[static_cast<std::size_t>(j)]));
    for (Eigen::Index i = 0; i < nd; ++i) out(i, j) = obs.values[i] + sd[i] * rng.normal();
  }
  return out;
}

Eigen::VectorXd normalized_mismatch(const Eigen::MatrixXd& predicted, const ObservationSet& obs) {
  if (predicted.rows() != static_cast<Eigen::Index>(obs.size())) {
    throw ShapeError("predicted data has " + std::to_string(predicted.rows()) + " rows, observations have " +
                     std::to_string(obs.size()));
  }
  const Eigen::VectorXd inv_var = obs.variances.cwiseInverse();
  Eigen::VectorXd phi(predicted.cols());
  for (Eigen::Index j = 0; j < predicted.cols(); ++j) {
    const Eigen::VectorXd r = predicted.col(j) - obs.values;
    phi[j] = r.cwiseProduct(r).dot(inv_var) / static_cast<double>(obs.size());
  }
  return phi;
}

}  // namespace fhm::assim
