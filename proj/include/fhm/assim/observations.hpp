#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace fhm::assim {

enum class ObsKind { hard_facies, rate, water_cut };

std::string to_string(ObsKind kind);
ObsKind obs_kind_from_string(const std::string& s);

/// What a datum measures. Hard-facies data carry the cell and the observed
/// facies code; well data carry the well name and report time.
struct ObsDescriptor {
  ObsKind kind = ObsKind::rate;
  std::string well;
  double time = 0.0;
  int cell_i = -1;
  int cell_j = -1;
  int facies = -1;
};

/// d_obs with a diagonal error covariance C_e.
///
/// For hard-facies data the observed value is the channel indicator 1.0
/// (the facies code lives in the descriptor).
struct ObservationSet {
  std::vector<ObsDescriptor> descriptors;
  Eigen::VectorXd values;
  Eigen::VectorXd variances;

  std::size_t size() const { return descriptors.size(); }
  bool has_hard_data() const;
  /// Throws ValidationError unless counts agree and all variances are > 0.
  void validate() const;
};

/// CSV with header time,well_or_cell,kind,value,stddev. Hard-facies rows
/// name the cell as "i:j" and put the facies code in `value`.
void write_observations_csv(const std::filesystem::path& path, const ObservationSet& obs);
ObservationSet read_observations_csv(const std::filesystem::path& path);

/// Column j = d_obs + e_j with e_j ~ N(0, alpha * C_e), drawn from the
/// stream derive_seed(seed, member_ids[j]).
Eigen::MatrixXd perturb_observations(const ObservationSet& obs, double alpha, std::uint64_t seed,
                                     const std::vector<std::uint64_t>& member_ids);

/// Per-member normalized mismatch (d_j - d_obs)^T C_e^{-1} (d_j - d_obs) / n_d.
Eigen::VectorXd normalized_mismatch(const Eigen::MatrixXd& predicted, const ObservationSet& obs);

}  // namespace fhm::assim
