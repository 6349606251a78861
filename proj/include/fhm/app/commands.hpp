#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "fhm/app/config.hpp"
#include "fhm/assim/observations.hpp"

namespace fhm::app {

enum class ObsMode { hard, production };
std::string to_string(ObsMode mode);
ObsMode obs_mode_from_string(const std::string& s);

/// Fixed file names inside the run directory.
struct RunLayout {
  std::filesystem::path root;

  std::filesystem::path train_set() const { return root / "train.fcds"; }
  std::filesystem::path val_set() const { return root / "val.fcds"; }
  std::filesystem::path reference() const { return root / "reference.fcds"; }
  std::filesystem::path prior_set() const { return root / "prior.fcds"; }
  std::filesystem::path checkpoint() const { return root / "vae.ckpt"; }
  std::filesystem::path history() const { return root / "history.csv"; }
  std::filesystem::path observations(ObsMode m) const { return root / ("obs_" + to_string(m) + ".csv"); }
  std::filesystem::path reference_data() const { return root / "reference_data.csv"; }
  std::filesystem::path assim_dir(ObsMode m) const { return root / ("assim_" + to_string(m)); }
  std::filesystem::path report_dir(ObsMode m) const { return root / ("report_" + to_string(m)); }
};

struct GenDataSummary {
  std::size_t n_train = 0;
  std::size_t n_val = 0;
  std::size_t n_prior = 0;
  double mean_fraction = 0.0;
  double min_fraction = 0.0;
  double max_fraction = 0.0;
  double reference_fraction = 0.0;
};
/// Writes train/val sets, a reference realization absent from the training
/// set, and n_e prior realizations.
GenDataSummary cmd_gen_data(const ExperimentConfig& cfg, std::ostream& log);

struct TrainSummary {
  int epochs_run = 0;
  int last_epoch = 0;
  double final_accuracy = 0.0;
};
/// Trains (or resumes from the checkpoint's optimizer state) and writes the
/// checkpoint and the history CSV.
TrainSummary cmd_train(const ExperimentConfig& cfg, bool resume, std::ostream& log);

/// Observations from the reference realization. Production noise has
/// standard deviation max(noise_fraction * |d|, floor).
assim::ObservationSet make_observations(const ExperimentConfig& cfg, ObsMode mode, const geomodel::FaciesGrid& reference,
                                        bool zero_noise);
assim::ObservationSet cmd_make_obs(const ExperimentConfig& cfg, ObsMode mode, bool zero_noise, std::ostream& log);

struct AssimSummary {
  double prior_mean_mismatch = 0.0;
  double posterior_mean_mismatch = 0.0;
  std::optional<double> prior_honor_rate;
  std::optional<double> posterior_honor_rate;
};
/// Runs ES-MDA and writes iterations.csv, mismatch.csv, observations.csv,
/// predicted_prior.csv, predicted_posterior.csv, posterior.fcds and maps.
AssimSummary cmd_assimilate(const ExperimentConfig& cfg, ObsMode mode, std::ostream& log);

/// Linear-interpolation quantile (q in [0, 1]) of unsorted values.
double quantile(std::vector<double> values, double q);

struct ReportSeries {
  std::string name;  // "<well_or_cell>_<kind>"
  std::size_t rows = 0;
};
/// Reads an assimilation directory and writes one CSV per (well or cell,
/// kind) series plus summary.txt into `out_dir`.
std::vector<ReportSeries> cmd_report(const std::filesystem::path& assim_dir, const std::filesystem::path& out_dir,
                                     std::ostream& log);

}  // namespace fhm::app
