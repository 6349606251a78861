#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "fhm/assim/esmda.hpp"
#include "fhm/assim/workflow.hpp"
#include "fhm/flow/sim_config.hpp"
#include "fhm/geomodel/channel_generator.hpp"
#include "fhm/nn/trainer.hpp"
#include "fhm/nn/vae.hpp"

namespace fhm::app {

struct DataSettings {
  int n_train = 2000;
  int n_val = 500;
};

struct AssimSettings {
  int n_e = 100;
  int n_a = 4;
  std::vector<double> alphas;  // empty: constant alpha = n_a
  double noise_fraction = 0.05;
  double water_cut_floor = 0.01;
  double rate_floor_fraction = 0.01;  // of the reference field-average rate
  double hard_variance = 0.01;
  std::vector<std::pair<int, int>> hard_cells;  // empty: the well cells
  assim::PriorSource prior_source = assim::PriorSource::encoder_means;
  int map_count = 20;

  assim::MdaSchedule schedule() const;
};

/// Every tunable of a run. Stage seeds are derived from `seed`.
struct ExperimentConfig {
  std::uint64_t seed = 1;
  int threads = 1;
  int nx = 32;
  int ny = 32;
  std::string network_preset = "table1-desk";
  geomodel::ChannelGenParams generator;
  DataSettings data;
  nn::NetworkConfig network = nn::NetworkConfig::table1_desk(32, 32);
  nn::TrainConfig training;
  flow::SimConfig simulation = flow::SimConfig::desk_default(32, 32);
  AssimSettings assim;
  std::filesystem::path run_dir = "run";

  void validate() const;
  /// Configured hard-data cells, or the well cells when none are listed.
  std::vector<std::pair<int, int>> hard_cells() const;
};

/// Seed tags per pipeline stage.
enum class SeedTag : std::uint64_t {
  train_data = 101,
  val_data = 102,
  reference = 103,
  prior_data = 104,
  network_init = 201,
  training = 202,
  obs_noise = 301,
  assimilation = 401,
  prior_latents = 402,
};
std::uint64_t stage_seed(const ExperimentConfig& cfg, SeedTag tag);

/// Parses "key=value" lines; '#' starts a comment. Grid and preset keys are
/// applied first so later keys override the derived defaults regardless of
/// line order. Unknown keys and malformed values throw ValidationError.
ExperimentConfig parse_config(std::istream& is, const std::string& source = "<config>");
ExperimentConfig load_config(const std::filesystem::path& path);

/// Full key=value dump that parses back to the same configuration.
std::string format_config(const ExperimentConfig& cfg);

}  // namespace fhm::app
