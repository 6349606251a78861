#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "fhm/geomodel/facies_grid.hpp"
#include "fhm/nn/vae.hpp"

namespace fhm::nn {

struct TrainConfig {
  int epochs = 30;
  int batch_size = 32;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  /// Weight of the KL term in the loss.
  double lambda = 1.0;
  std::uint64_t seed = 1;
  int threads = 1;

  void validate() const;
};

struct EpochRecord {
  int epoch = 0;  // 1-based, continues across resumes
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_accuracy = 0.0;
};

/// Optimizer state carried across epochs and checkpoints.
struct AdamState {
  std::int64_t step = 0;
  int epochs_done = 0;
  VaeParameters first_moment;
  VaeParameters second_moment;
};

/// One bias-corrected Adam update of `params` with gradient `grads`.
void adam_step(VaeParameters& params, const VaeParameters& grads, AdamState& state, const TrainConfig& cfg);

struct TrainResult {
  std::vector<EpochRecord> history;
  AdamState state;
};

/// Mini-batch Adam training on the mean total loss.
///
/// Every random draw (shuffle order, reparameterization noise, dropout masks)
/// derives from (cfg.seed, absolute epoch, position), so a run resumed from
/// `resume` reproduces the uninterrupted run. Validation loss and accuracy
/// are evaluated in eval mode with z = mu. Throws NumericalError with the
/// epoch index if the loss or a gradient turns non-finite.
TrainResult train(VaeNetwork& net, std::span<const geomodel::FaciesGrid> train_set,
                  std::span<const geomodel::FaciesGrid> val_set, const TrainConfig& cfg,
                  std::optional<AdamState> resume = std::nullopt,
                  const std::function<void(const EpochRecord&)>& on_epoch = {});

/// Fraction of cells where from_soft(decode(mu(x))) equals x, averaged over
/// the dataset.
double reconstruction_accuracy(const VaeNetwork& net, std::span<const geomodel::FaciesGrid> dataset, int threads = 1);

/// Mean eval-mode loss with z = mu.
double evaluation_loss(const VaeNetwork& net, std::span<const geomodel::FaciesGrid> dataset, double lambda,
                       int threads = 1);

}  // namespace fhm::nn
