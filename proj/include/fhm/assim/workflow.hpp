#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fhm/assim/esmda.hpp"
#include "fhm/assim/observations.hpp"
#include "fhm/flow/simulator.hpp"
#include "fhm/geomodel/facies_grid.hpp"
#include "fhm/nn/vae.hpp"

namespace fhm::assim {

/// Maps one latent vector to predicted data through the decoder.
class ForwardModel {
 public:
  virtual ~ForwardModel() = default;
  virtual Eigen::VectorXd evaluate(const nn::VaeNetwork& decoder, const Eigen::VectorXd& z) const = 0;
  virtual std::string name() const = 0;
};

/// Decoded soft probability of the observed facies channel at each hard cell.
class HardDataForward final : public ForwardModel {
 public:
  /// Takes locations and facies codes from the hard_facies descriptors of `obs`.
  explicit HardDataForward(const ObservationSet& obs);
  Eigen::VectorXd evaluate(const nn::VaeNetwork& decoder, const Eigen::VectorXd& z) const override;
  std::string name() const override { return "hard_data"; }

 private:
  std::vector<ObsDescriptor> cells_;
};

/// simulate(from_soft(decode(z))), with outputs picked to match `obs`.
class ProductionForward final : public ForwardModel {
 public:
  ProductionForward(flow::SimConfig cfg, const ObservationSet& obs);
  Eigen::VectorXd evaluate(const nn::VaeNetwork& decoder, const Eigen::VectorXd& z) const override;
  std::string name() const override { return "production"; }

 private:
  flow::SimConfig cfg_;
  std::vector<std::size_t> rows_;  // index into simulate() output per observation
};

/// Predicted-data matrix (n_d x n_e) for all members. A failing member
/// aborts with its index.
Eigen::MatrixXd hard_data_forward(const nn::VaeNetwork& decoder, const LatentEnsemble& z, const ObservationSet& obs,
                                  int threads = 1);

Eigen::MatrixXd evaluate_ensemble(const ForwardModel& model, const nn::VaeNetwork& decoder, const LatentEnsemble& z,
                                  int threads = 1);

enum class PriorSource { encoder_means, standard_normal };

std::string to_string(PriorSource s);

/// z_j = encoder mean of realization j, in input order.
LatentEnsemble prior_latents_from_realizations(const nn::VaeNetwork& encoder,
                                               std::span<const geomodel::FaciesGrid> realizations, int threads = 1);

/// z_j ~ N(0, I) from per-member streams derive_seed(seed, j).
LatentEnsemble sample_prior(int n_z, int n_e, std::uint64_t seed);

struct IterationRecord {
  int iteration = 0;   // 0 = prior
  double alpha = 0.0;  // inflation used to produce this ensemble (0 for the prior)
  Eigen::VectorXd member_mismatch;
  double mean_mismatch = 0.0;
  /// Fraction of members whose decoded facies match every hard datum;
  /// empty when the observations hold no hard data.
  std::optional<double> hard_honor_rate;
};

struct AssimilationReport {
  PriorSource prior_source = PriorSource::encoder_means;
  std::vector<IterationRecord> iterations;  // n_a + 1 entries
  std::vector<LatentEnsemble> ensembles;    // per iteration
  std::vector<Eigen::MatrixXd> predicted;   // per iteration
  std::vector<geomodel::FaciesGrid> posterior_facies;
};

struct AssimilationOptions {
  std::uint64_t seed = 1;
  int threads = 1;
  PriorSource prior_source = PriorSource::encoder_means;
};

/// ES-MDA on the latent ensemble: for each alpha_k, decode and forward every
/// member, record the mismatch, update. The final ensemble is forwarded once
/// more so the report holds the prior plus every iteration. Iteration k uses
/// perturbation seed derive_seed(seed, k).
AssimilationReport run_assimilation(const nn::VaeNetwork& decoder, const ForwardModel& forward,
                                    const LatentEnsemble& prior, const ObservationSet& obs,
                                    const MdaSchedule& schedule, const AssimilationOptions& options);

/// Fraction of `grids` that carry the observed facies at every hard cell.
double hard_data_honor_rate(std::span<const geomodel::FaciesGrid> grids, const ObservationSet& obs);

}  // namespace fhm::assim
