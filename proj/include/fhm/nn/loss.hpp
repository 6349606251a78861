#pragma once

#include <span>

namespace fhm::nn {

/// Predictions are clamped to [kBceClamp, 1 - kBceClamp] before logs.
inline constexpr double kBceClamp = 1e-7;

/// Closed-form KL divergence of N(mu, exp(logvar)) from N(0, I):
/// 0.5 * sum(mu^2 + sigma^2 - ln sigma^2 - 1).
double kl_divergence(std::span<const double> mu, std::span<const double> logvar);

/// Mean binary cross-entropy over all entries.
double bce_loss(std::span<const double> target, std::span<const double> prediction);

/// bce_loss + lambda * kl_divergence.
double total_loss(std::span<const double> target, std::span<const double> prediction, std::span<const double> mu,
                  std::span<const double> logvar, double lambda);

}  // namespace fhm::nn
