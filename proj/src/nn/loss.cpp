#include "fhm/nn/loss.hpp"

#include <algorithm>
#include <cmath>

#include "fhm/common/error.hpp"

namespace fhm::nn {

double kl_divergence(std::span<const double> mu, std::span<const double> logvar) {
  if (mu.size() != logvar.size()) throw ShapeError("kl_divergence: mu and logvar lengths differ");
  double sum = 0.0;
  for (std::size_t i = 0; i < mu.size(); ++i) {
    sum += mu[i] * mu[i] + std::exp(logvar[i]) - logvar[i] - 1.0;
  }
  return 0.5 * sum;
}

double bce_loss(std::span<const double> target, std::span<const double> prediction) {
  if (target.size() != prediction.size()) throw ShapeError("bce_loss: target and prediction sizes differ");
  if (target.empty()) return 0.0;
  double sum = 0.0;
  for (std::size_t i = 0; i < target.size(); ++i) {
    const double p = std::clamp(prediction[i], kBceClamp, 1.0 - kBceClamp);
    sum += target[i] * std::log(p) + (1.0 - target[i]) * std::log1p(-p);
  }
  return -sum / static_cast<double>(target.size());
}

double total_loss(std::span<const double> target, std::span<const double> prediction, std::span<const double> mu,
                  std::span<const double> logvar, double lambda) {
  return bce_loss(target, prediction) + lambda * kl_divergence(mu, logvar);
}

}  // namespace fhm::nn
