#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "fhm/assim/observations.hpp"

namespace fhm::assim {

/// n_e latent vectors stored as the columns of an n_z x n_e matrix. Each
/// member carries an id that keys its random streams, so reordering members
/// reorders results without changing them.
struct LatentEnsemble {
  Eigen::MatrixXd members;
  std::vector<std::uint64_t> ids;

  LatentEnsemble() = default;
  /// ids default to 0..n_e-1.
  explicit LatentEnsemble(Eigen::MatrixXd z);
  LatentEnsemble(Eigen::MatrixXd z, std::vector<std::uint64_t> member_ids);

  Eigen::Index n_z() const { return members.rows(); }
  Eigen::Index n_e() const { return members.cols(); }
  /// Throws ValidationError when n_e < 2, ids mismatch, or entries are not finite.
  void validate() const;
};

/// Inflation factors alpha_1..alpha_{n_a} with sum(1 / alpha_k) = 1.
struct MdaSchedule {
  std::vector<double> alphas;

  std::size_t n_a() const { return alphas.size(); }
  /// Throws ValidationError unless all alphas > 0 and |sum(1/alpha) - 1| <= 1e-12.
  void validate() const;
};

/// Constant schedule alpha_k = n_a.
MdaSchedule default_schedule(int n_a);

/// Fraction of the singular-value sum kept by the truncated pseudo-inverse.
inline constexpr double kSvdEnergy = 0.999;

/// One ES-MDA analysis step:
///   z_j <- z_j + C_zd (C_dd + alpha C_e)^+ (d_obs + e_j - d_j)
/// with sample (cross-)covariances normalized by 1/(n_e - 1). The inverse is
/// a truncated SVD of the C_e-scaled matrix keeping kSvdEnergy of the
/// singular-value sum. Perturbations come from perturb_observations(obs,
/// alpha, seed, Z.ids).
LatentEnsemble esmda_update(const LatentEnsemble& z, const Eigen::MatrixXd& predicted, const ObservationSet& obs,
                            double alpha, std::uint64_t seed);

}  // namespace fhm::assim
