#include "fhm/assim/esmda.hpp"

#include <Eigen/SVD>
#include <cmath>
#include <numeric>

#include "fhm/common/error.hpp"

namespace fhm::assim {

LatentEnsemble::LatentEnsemble(Eigen::MatrixXd z) : members(std::move(z)) {
  ids.resize(static_cast<std::size_t>(members.cols()));
  std::iota(ids.begin(), ids.end(), std::uint64_t{0});
}

LatentEnsemble::LatentEnsemble(Eigen::MatrixXd z, std::vector<std::uint64_t> member_ids)
    : members(std::move(z)), ids(std::move(member_ids)) {}

void LatentEnsemble::validate() const {
  if (n_e() < 2) throw ValidationError("an ensemble needs at least two members");
  if (static_cast<Eigen::Index>(ids.size()) != n_e()) throw ValidationError("member id count differs from n_e");
  if (!members.allFinite()) throw NumericalError("latent ensemble holds non-finite entries");
}

void MdaSchedule::validate() const {
  if (alphas.empty()) throw ValidationError("MDA schedule needs at least one iteration");
  double inv_sum = 0.0;
  for (double a : alphas) {
    if (!(a > 0.0) || !std::isfinite(a)) throw ValidationError("inflation factors must be positive and finite");
    inv_sum += 1.0 / a;
  }
  if (std::abs(inv_sum - 1.0) > 1e-12) {
    throw ValidationError("inverse inflation factors sum to " + std::to_string(inv_sum) + ", not 1");
  }
}

MdaSchedule default_schedule(int n_a) {
  if (n_a < 1) throw ValidationError("n_a must be >= 1");
  return {std::vector<double>(static_cast<std::size_t>(n_a), static_cast<double>(n_a))};
}

LatentEnsemble esmda_update(const LatentEnsemble& z, const Eigen::MatrixXd& predicted, const ObservationSet& obs,
                            double alpha, std::uint64_t seed) {
  z.validate();
  obs.validate();
  if (predicted.cols() != z.n_e()) {
    throw ShapeError("predicted data has " + std::to_string(predicted.cols()) + " members, ensemble has " +
                     std::to_string(z.n_e()));
  }
  if (predicted.rows() != static_cast<Eigen::Index>(obs.size())) {
    throw ShapeError("predicted data rows do not match the observation count");
  }
  if (!predicted.allFinite()) throw NumericalError("predicted data holds non-finite entries");
  if (!(alpha > 0.0)) throw ValidationError("inflation factor must be positive");

  const double norm = 1.0 / static_cast<double>(z.n_e() - 1);
  const Eigen::MatrixXd dz = z.members.colwise() - z.members.rowwise().mean();
  const Eigen::MatrixXd dd = predicted.colwise() - predicted.rowwise().mean();

  // Work in data scaled by the observation standard deviations so that
  // rates and fractions enter the truncation on equal footing.
  const Eigen::VectorXd inv_sd = obs.variances.cwiseSqrt().cwiseInverse();
  const Eigen::MatrixXd dd_scaled = inv_sd.asDiagonal() * dd;
  Eigen::MatrixXd c = norm * dd_scaled * dd_scaled.transpose();
  c.diagonal().array() += alpha;

  const Eigen::BDCSVD<Eigen::MatrixXd> svd(c, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Eigen::VectorXd& s = svd.singularValues();
  const double total = s.sum();
  Eigen::Index keep = 0;
  double acc = 0.0;
  while (keep < s.size() && acc < kSvdEnergy * total) acc += s[keep++];
  Eigen::VectorXd s_inv = Eigen::VectorXd::Zero(s.size());
  for (Eigen::Index i = 0; i < keep; ++i) s_inv[i] = 1.0 / s[i];
  const Eigen::MatrixXd c_pinv = svd.matrixV() * s_inv.asDiagonal() * svd.matrixU().transpose();

  const Eigen::MatrixXd innovation =
      inv_sd.asDiagonal() * (perturb_observations(obs, alpha, seed, z.ids) - predicted);
  const Eigen::MatrixXd czd_scaled = norm * dz * dd_scaled.transpose();

  LatentEnsemble out = z;
  out.members += czd_scaled * (c_pinv * innovation);
  if (!out.members.allFinite()) throw NumericalError("ES-MDA update produced non-finite latents");
  return out;
}

}  // namespace fhm::assim
