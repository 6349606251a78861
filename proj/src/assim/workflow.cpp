#include "fhm/assim/workflow.hpp"

#include <cmath>
#include <map>
#include <string>

#include "fhm/common/error.hpp"
#include "fhm/common/parallel.hpp"
#include "fhm/common/rng.hpp"

namespace fhm::assim {

namespace {

nn::Tensor to_tensor(const Eigen::VectorXd& z) {
  return nn::Tensor({static_cast<std::size_t>(z.size())}, std::vector<double>(z.data(), z.data() + z.size()));
}

}  // namespace

HardDataForward::HardDataForward(const ObservationSet& obs) {
  for (const auto& d : obs.descriptors) {
    if (d.kind != ObsKind::hard_facies) {
      throw ValidationError("hard-data forward model only accepts hard_facies observations");
    }
    cells_.push_back(d);
  }
  if (cells_.empty()) throw ValidationError("no hard-facies observations");
}

Eigen::VectorXd HardDataForward::evaluate(const nn::VaeNetwork& decoder, const Eigen::VectorXd& z) const {
  const auto image = nn::decode(decoder, to_tensor(z));
  Eigen::VectorXd d(static_cast<Eigen::Index>(cells_.size()));
  for (std::size_t c = 0; c < cells_.size(); ++c) {
    const auto& cell = cells_[c];
    if (cell.cell_i < 0 || cell.cell_i >= image.nx || cell.cell_j < 0 || cell.cell_j >= image.ny ||
        cell.facies >= image.k) {
      throw ValidationError("hard datum at " + std::to_string(cell.cell_i) + ":" + std::to_string(cell.cell_j) +
                            " lies outside the decoded grid");
    }
    d[static_cast<Eigen::Index>(c)] = image.at(cell.facies, cell.cell_i, cell.cell_j);
  }
  return d;
}

ProductionForward::ProductionForward(flow::SimConfig cfg, const ObservationSet& obs) : cfg_(std::move(cfg)) {
  std::map<std::string, std::size_t> well_index;
  for (std::size_t w = 0; w < cfg_.wells.size(); ++w) well_index[cfg_.wells[w].name] = w;
  const auto layout = flow::data_layout(cfg_);
  for (const auto& d : obs.descriptors) {
    if (d.kind == ObsKind::hard_facies) throw ValidationError("production forward model got a hard_facies datum");
    const auto w = well_index.find(d.well);
    if (w == well_index.end()) throw ValidationError("observation names unknown well '" + d.well + "'");
    const auto q = d.kind == ObsKind::rate ? flow::Quantity::rate : flow::Quantity::water_cut;
    std::size_t row = layout.size();
    for (std::size_t r = 0; r < layout.size(); ++r) {
      if (layout[r].well == w->second && layout[r].quantity == q && std::abs(layout[r].time - d.time) <= 1e-9) {
        row = r;
        break;
      }
    }
    if (row == layout.size()) {
      throw ValidationError("no simulated " + to_string(d.kind) + " for well '" + d.well + "' at time " +
                            std::to_string(d.time));
    }
    rows_.push_back(row);
  }
}

Eigen::VectorXd ProductionForward::evaluate(const nn::VaeNetwork& decoder, const Eigen::VectorXd& z) const {
  const auto facies = nn::decode_facies(decoder, to_tensor(z));
  const auto data = flow::simulate(facies, cfg_);
  Eigen::VectorXd d(static_cast<Eigen::Index>(rows_.size()));
  for (std::size_t r = 0; r < rows_.size(); ++r) d[static_cast<Eigen::Index>(r)] = data.values[rows_[r]];
  return d;
}

Eigen::MatrixXd evaluate_ensemble(const ForwardModel& model, const nn::VaeNetwork& decoder, const LatentEnsemble& z,
                                  int threads) {
  std::vector<Eigen::VectorXd> cols(static_cast<std::size_t>(z.n_e()));
  parallel_for(cols.size(), threads, [&](std::size_t j) {
    try {
      cols[j] = model.evaluate(decoder, z.members.col(static_cast<Eigen::Index>(j)));
    } catch (const std::exception& e) {
      throw NumericalError(model.name() + " forward model failed for member " + std::to_string(j) + ": " + e.what());
    }
  });
  Eigen::MatrixXd d(cols.front().size(), z.n_e());
  for (std::size_t j = 0; j < cols.size(); ++j) d.col(static_cast<Eigen::Index>(j)) = cols[j];
  return d;
}

Eigen::MatrixXd hard_data_forward(const nn::VaeNetwork& decoder, const LatentEnsemble& z, const ObservationSet& obs,
                                  int threads) {
  return evaluate_ensemble(HardDataForward(obs), decoder, z, threads);
}

std::string to_string(PriorSource s) {
  return s == PriorSource::encoder_means ? "encoder_means" : "standard_normal";
}

LatentEnsemble prior_latents_from_realizations(const nn::VaeNetwork& encoder,
                                               std::span<const geomodel::FaciesGrid> realizations, int threads) {
  std::vector<geomodel::OneHotImage> images;
  images.reserve(realizations.size());
  for (const auto& g : realizations) images.push_back(geomodel::to_one_hot(g, encoder.config().k));
  const auto enc = nn::encode_batch(encoder, images, threads);
  const auto ne = static_cast<Eigen::Index>(realizations.size());
  const auto nz = static_cast<Eigen::Index>(encoder.n_z());
  Eigen::MatrixXd z(nz, ne);
  for (Eigen::Index j = 0; j < ne; ++j) {
    for (Eigen::Index i = 0; i < nz; ++i) z(i, j) = enc.mu[static_cast<std::size_t>(j * nz + i)];
  }
  return LatentEnsemble(std::move(z));
}

LatentEnsemble sample_prior(int n_z, int n_e, std::uint64_t seed) {
  if (n_z < 1 || n_e < 1) throw ValidationError("prior sampling needs n_z >= 1 and n_e >= 1");
  Eigen::MatrixXd z(n_z, n_e);
  for (int j = 0; j < n_e; ++j) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(j)));
    for (int i = 0; i < n_z; ++i) z(i, j) = rng.normal();
  }
  return LatentEnsemble(std::move(z));
}

double hard_data_honor_rate(std::span<const geomodel::FaciesGrid> grids, const ObservationSet& obs) {
  if (grids.empty()) return 0.0;
  std::size_t honored = 0;
  for (const auto& g : grids) {
    bool ok = true;
    for (const auto& d : obs.descriptors) {
      if (d.kind != ObsKind::hard_facies) continue;
      if (g.at(d.cell_i, d.cell_j) != d.facies) {
        ok = false;
        break;
      }
    }
    honored += ok;
  }
  return static_cast<double>(honored) / static_cast<double>(grids.size());
}

namespace {

std::vector<geomodel::FaciesGrid> decode_all(const nn::VaeNetwork& decoder, const LatentEnsemble& z, int threads) {
  std::vector<geomodel::FaciesGrid> out(static_cast<std::size_t>(z.n_e()));
  parallel_for(out.size(), threads, [&](std::size_t j) {
    out[j] = nn::decode_facies(decoder, to_tensor(z.members.col(static_cast<Eigen::Index>(j))));
  });
  return out;
}

}  // namespace

AssimilationReport run_assimilation(const nn::VaeNetwork& decoder, const ForwardModel& forward,
                                    const LatentEnsemble& prior, const ObservationSet& obs,
                                    const MdaSchedule& schedule, const AssimilationOptions& options) {
  schedule.validate();
  prior.validate();
  obs.validate();
  if (prior.n_z() != decoder.n_z()) throw ShapeError("prior latent size does not match the decoder");

  AssimilationReport report;
  report.prior_source = options.prior_source;
  LatentEnsemble z = prior;
  const bool hard = obs.has_hard_data();

  auto record = [&](int k, double alpha) -> const Eigen::MatrixXd& {
    Eigen::MatrixXd d;
    try {
      d = evaluate_ensemble(forward, decoder, z, options.threads);
    } catch (const std::exception& e) {
      throw NumericalError("iteration " + std::to_string(k) + ": " + e.what());
    }
    IterationRecord rec;
    rec.iteration = k;
    rec.alpha = alpha;
    rec.member_mismatch = normalized_mismatch(d, obs);
    rec.mean_mismatch = rec.member_mismatch.mean();
    if (hard) rec.hard_honor_rate = hard_data_honor_rate(decode_all(decoder, z, options.threads), obs);
    report.iterations.push_back(std::move(rec));
    report.ensembles.push_back(z);
    report.predicted.push_back(std::move(d));
    return report.predicted.back();
  };

  double alpha_used = 0.0;
  for (std::size_t k = 0; k < schedule.n_a(); ++k) {
    const Eigen::MatrixXd& d = record(static_cast<int>(k), alpha_used);
    const double alpha = schedule.alphas[k];
    try {
      z = esmda_update(z, d, obs, alpha, derive_seed(options.seed, k));
    } catch (const NumericalError& e) {
      throw NumericalError("ES-MDA update failed at iteration " + std::to_string(k + 1) + ": " + e.what());
    }
    alpha_used = alpha;
  }
  record(static_cast<int>(schedule.n_a()), alpha_used);
  report.posterior_facies = decode_all(decoder, z, options.threads);
  return report;
}

}  // namespace fhm::assim
