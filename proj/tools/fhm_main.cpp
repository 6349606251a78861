#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "fhm/app/commands.hpp"
#include "fhm/app/config.hpp"
#include "fhm/common/error.hpp"

namespace {

enum Exit { ok = 0, failure = 1, validation = 2, numerical = 3 };

}  // namespace

int main(int argc, char** argv) {
  using namespace fhm;
  CLI::App app{"Facies history matching with ES-MDA over a convolutional VAE latent space"};
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
  std::string run_dir;
  app.add_option("--config", config_path, "key=value experiment config")->check(CLI::ExistingFile);
  app.add_option("--seed", seed, "master seed (overrides the config)");
  app.add_option("--threads", threads, "worker threads (overrides the config)")->check(CLI::PositiveNumber);
  app.add_option("--run-dir", run_dir, "run directory (overrides paths.run_dir)");

  auto* gen = app.add_subcommand("gen-data", "generate train/validation/prior sets and the reference model");

  auto* train = app.add_subcommand("train", "train the VAE and write the checkpoint and history CSV");
  bool resume = false;
  std::optional<int> epochs;
  train->add_flag("--resume", resume, "continue from the checkpoint's optimizer state");
  train->add_option("--epochs", epochs, "epochs to run (overrides training.epochs)")->check(CLI::NonNegativeNumber);

  std::string mode = "production";
  auto* make_obs = app.add_subcommand("make-obs", "observe the reference model");
  bool zero_noise = false;
  make_obs->add_option("--mode", mode, "hard or production")->check(CLI::IsMember({"hard", "production"}));
  make_obs->add_flag("--zero-noise", zero_noise, "write the exact reference data");

  auto* assimilate = app.add_subcommand("assimilate", "run ES-MDA on the latent ensemble");
  assimilate->add_option("--mode", mode, "hard or production")->check(CLI::IsMember({"hard", "production"}));

  auto* report = app.add_subcommand("report", "per-series data-match CSVs and a summary");
  std::string report_in, report_out;
  report->add_option("--mode", mode, "hard or production")->check(CLI::IsMember({"hard", "production"}));
  report->add_option("--dir", report_in, "assimilation directory (default: from the run directory and mode)");
  report->add_option("--out", report_out, "output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? Exit::ok : Exit::validation;
  }

  try {
    auto cfg = config_path.empty() ? app::ExperimentConfig{} : app::load_config(config_path);
    if (seed) cfg.seed = *seed;
    if (threads) cfg.threads = *threads;
    if (!run_dir.empty()) cfg.run_dir = run_dir;
    if (epochs) cfg.training.epochs = *epochs;
    const auto obs_mode = app::obs_mode_from_string(mode);
    const app::RunLayout run{cfg.run_dir};

    if (gen->parsed()) {
      app::cmd_gen_data(cfg, std::cout);
    } else if (train->parsed()) {
      app::cmd_train(cfg, resume, std::cout);
    } else if (make_obs->parsed()) {
      app::cmd_make_obs(cfg, obs_mode, zero_noise, std::cout);
    } else if (assimilate->parsed()) {
      app::cmd_assimilate(cfg, obs_mode, std::cout);
    } else if (report->parsed()) {
      const std::filesystem::path in = report_in.empty() ? run.assim_dir(obs_mode) : std::filesystem::path(report_in);
      const std::filesystem::path out = report_out.empty() ? run.report_dir(obs_mode) : std::filesystem::path(report_out);
      app::cmd_report(in, out, std::cout);
    }
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return Exit::validation;
  } catch (const FormatError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return Exit::validation;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return Exit::numerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return Exit::failure;
  }
  return Exit::ok;
}
