#include "fhm/app/commands.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <memory>
#include <ostream>
#include <sstream>

#include "fhm/common/error.hpp"
#include "fhm/common/rng.hpp"
#include "fhm/flow/simulator.hpp"
#include "fhm/geomodel/dataset_io.hpp"
#include "fhm/geomodel/pgm.hpp"
#include "fhm/nn/checkpoint.hpp"

namespace fhm::app {

namespace fs = std::filesystem;

namespace {

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void require(const fs::path& p, const std::string& hint) {
  if (!fs::exists(p)) throw ValidationError("missing " + p.string() + " (" + hint + ")");
}

std::ofstream open_out(const fs::path& p) {
  std::ofstream os(p, std::ios::trunc);
  if (!os) throw ValidationError("cannot open " + p.string() + " for writing");
  return os;
}

void ensure_dir(const fs::path& p) {
  std::error_code ec;
  fs::create_directories(p, ec);
  if (ec) throw ValidationError("cannot create directory " + p.string() + ": " + ec.message());
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> f;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) f.push_back(cell);
  if (!line.empty() && line.back() == ',') f.emplace_back();
  return f;
}

std::string location(const assim::ObsDescriptor& d) {
  if (d.kind == assim::ObsKind::hard_facies) return std::to_string(d.cell_i) + ":" + std::to_string(d.cell_j);
  return d.well;
}

// Rows: one per datum; columns: descriptor then one value per member.
void write_predicted(const fs::path& path, const assim::ObservationSet& obs, const Eigen::MatrixXd& d) {
  auto os = open_out(path);
  os << "time,well_or_cell,kind";
  for (Eigen::Index j = 0; j < d.cols(); ++j) os << ",m" << j;
  os << '\n';
  for (std::size_t r = 0; r < obs.size(); ++r) {
    const auto& desc = obs.descriptors[r];
    os << fmt(desc.time) << ',' << location(desc) << ',' << assim::to_string(desc.kind);
    for (Eigen::Index j = 0; j < d.cols(); ++j) os << ',' << fmt(d(static_cast<Eigen::Index>(r), j));
    os << '\n';
  }
}

Eigen::MatrixXd read_predicted(const fs::path& path, std::size_t rows) {
  std::ifstream is(path);
  if (!is) throw ValidationError("cannot read " + path.string());
  std::string line;
  std::getline(is, line);
  const auto header = split_csv(line);
  if (header.size() < 4 || header[0] != "time") throw FormatError(path.string() + ": bad header");
  const auto ne = static_cast<Eigen::Index>(header.size() - 3);
  Eigen::MatrixXd d(static_cast<Eigen::Index>(rows), ne);
  std::size_t r = 0;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto f = split_csv(line);
    if (r >= rows || static_cast<Eigen::Index>(f.size()) != ne + 3) {
      throw FormatError(path.string() + ": row " + std::to_string(r + 1) + " does not match the observations");
    }
    for (Eigen::Index j = 0; j < ne; ++j) d(static_cast<Eigen::Index>(r), j) = std::stod(f[3 + j]);
    ++r;
  }
  if (r != rows) throw FormatError(path.string() + ": expected " + std::to_string(rows) + " rows");
  return d;
}

std::vector<geomodel::FaciesGrid> decode_members(const nn::VaeNetwork& net, const assim::LatentEnsemble& z) {
  std::vector<geomodel::FaciesGrid> out;
  for (Eigen::Index j = 0; j < z.n_e(); ++j) {
    const Eigen::VectorXd col = z.members.col(j);
    out.push_back(nn::decode_facies(net, nn::Tensor({static_cast<std::size_t>(col.size())},
                                                    std::vector<double>(col.data(), col.data() + col.size()))));
  }
  return out;
}

}  // namespace

std::string to_string(ObsMode mode) { return mode == ObsMode::hard ? "hard" : "production"; }

ObsMode obs_mode_from_string(const std::string& s) {
  if (s == "hard") return ObsMode::hard;
  if (s == "production") return ObsMode::production;
  throw ValidationError("mode must be hard or production, got '" + s + "'");
}

GenDataSummary cmd_gen_data(const ExperimentConfig& cfg, std::ostream& log) {
  cfg.validate();
  const RunLayout run{cfg.run_dir};
  ensure_dir(run.root);
  const auto& gen = cfg.generator;
  const auto train = geomodel::generate_dataset(gen, static_cast<std::size_t>(cfg.data.n_train),
                                                stage_seed(cfg, SeedTag::train_data), cfg.threads);
  const auto val = geomodel::generate_dataset(gen, static_cast<std::size_t>(cfg.data.n_val),
                                              stage_seed(cfg, SeedTag::val_data), cfg.threads);
  const auto prior = geomodel::generate_dataset(gen, static_cast<std::size_t>(cfg.assim.n_e),
                                                stage_seed(cfg, SeedTag::prior_data), cfg.threads);

  // The reference must not appear in the training set.
  geomodel::FaciesGrid reference;
  for (std::uint64_t attempt = 0;; ++attempt) {
    reference = geomodel::generate_channel_realization(gen, derive_seed(stage_seed(cfg, SeedTag::reference), attempt));
    if (std::find(train.begin(), train.end(), reference) == train.end()) break;
  }

  geomodel::write_dataset(run.train_set(), train);
  geomodel::write_dataset(run.val_set(), val);
  geomodel::write_dataset(run.prior_set(), prior);
  geomodel::write_dataset(run.reference(), std::vector<geomodel::FaciesGrid>{reference});

  GenDataSummary s;
  s.n_train = train.size();
  s.n_val = val.size();
  s.n_prior = prior.size();
  s.min_fraction = 1.0;
  double sum = 0.0;
  for (const auto& g : train) {
    const double f = g.fraction(1);
    sum += f;
    s.min_fraction = std::min(s.min_fraction, f);
    s.max_fraction = std::max(s.max_fraction, f);
  }
  s.mean_fraction = sum / static_cast<double>(train.size());
  s.reference_fraction = reference.fraction(1);
  log << "train " << s.n_train << ", validation " << s.n_val << ", prior " << s.n_prior << " realizations\n"
      << "channel fraction: mean " << s.mean_fraction << ", min " << s.min_fraction << ", max " << s.max_fraction
      << ", reference " << s.reference_fraction << '\n';
  return s;
}

TrainSummary cmd_train(const ExperimentConfig& cfg, bool resume, std::ostream& log) {
  cfg.validate();
  const RunLayout run{cfg.run_dir};
  require(run.train_set(), "run gen-data first");
  require(run.val_set(), "run gen-data first");
  const auto train = geomodel::read_dataset(run.train_set());
  const auto val = geomodel::read_dataset(run.val_set());

  nn::TrainConfig tc = cfg.training;
  tc.seed = stage_seed(cfg, SeedTag::training);
  tc.threads = cfg.threads;

  std::optional<nn::AdamState> state;
  std::vector<std::string> old_rows;
  std::optional<nn::VaeNetwork> net;
  if (resume) {
    require(run.checkpoint(), "nothing to resume");
    auto ck = nn::load_training_checkpoint(run.checkpoint());
    if (!ck.optimizer) throw ValidationError(run.checkpoint().string() + " has no optimizer state to resume from");
    net.emplace(std::move(ck.net));
    state = std::move(ck.optimizer);
    std::ifstream is(run.history());
    std::string line;
    std::getline(is, line);
    while (std::getline(is, line)) {
      if (line.empty()) continue;
      if (std::stoi(split_csv(line).at(0)) <= state->epochs_done) old_rows.push_back(line);
    }
  } else {
    net.emplace(nn::VaeNetwork::initialized(cfg.network, stage_seed(cfg, SeedTag::network_init)));
  }

  auto history = open_out(run.history());
  history << "epoch,train_loss,val_loss,val_accuracy\n";
  for (const auto& row : old_rows) history << row << '\n';
  history.flush();
  auto result = nn::train(*net, train, val, tc, state, [&](const nn::EpochRecord& r) {
    history << r.epoch << ',' << fmt(r.train_loss) << ',' << fmt(r.val_loss) << ',' << fmt(r.val_accuracy) << '\n';
    history.flush();
    log << "epoch " << r.epoch << "  train " << r.train_loss << "  val " << r.val_loss << "  accuracy "
        << r.val_accuracy << '\n';
  });
  nn::save_checkpoint(*net, run.checkpoint(), &result.state);

  TrainSummary s;
  s.epochs_run = static_cast<int>(result.history.size());
  s.last_epoch = result.state.epochs_done;
  s.final_accuracy = result.history.empty() ? nn::reconstruction_accuracy(*net, val, cfg.threads)
                                            : result.history.back().val_accuracy;
  log << "final validation accuracy " << fmt(s.final_accuracy) << '\n';
  return s;
}

assim::ObservationSet make_observations(const ExperimentConfig& cfg, ObsMode mode,
                                        const geomodel::FaciesGrid& reference, bool zero_noise) {
  assim::ObservationSet obs;
  std::vector<double> values, variances;
  if (mode == ObsMode::hard) {
    for (const auto& [i, j] : cfg.hard_cells()) {
      assim::ObsDescriptor d;
      d.kind = assim::ObsKind::hard_facies;
      d.cell_i = i;
      d.cell_j = j;
      d.facies = reference.at(i, j);
      obs.descriptors.push_back(d);
      values.push_back(1.0);
      variances.push_back(cfg.assim.hard_variance);
    }
  } else {
    const auto data = flow::simulate(reference, cfg.simulation);
    double rate_sum = 0.0;
    std::size_t rate_count = 0;
    for (std::size_t r = 0; r < data.values.size(); ++r) {
      if (data.descriptors[r].quantity == flow::Quantity::rate) {
        rate_sum += std::abs(data.values[r]);
        ++rate_count;
      }
    }
    const double rate_floor = cfg.assim.rate_floor_fraction * rate_sum / static_cast<double>(rate_count);
    Rng rng(stage_seed(cfg, SeedTag::obs_noise));
    for (std::size_t r = 0; r < data.values.size(); ++r) {
      const auto& src = data.descriptors[r];
      assim::ObsDescriptor d;
      d.kind = src.quantity == flow::Quantity::rate ? assim::ObsKind::rate : assim::ObsKind::water_cut;
      d.well = cfg.simulation.wells[src.well].name;
      d.time = src.time;
      const double floor = d.kind == assim::ObsKind::rate ? rate_floor : cfg.assim.water_cut_floor;
      const double sd = std::max(cfg.assim.noise_fraction * std::abs(data.values[r]), floor);
      const double noise = rng.normal();
      obs.descriptors.push_back(d);
      values.push_back(zero_noise ? data.values[r] : data.values[r] + sd * noise);
      variances.push_back(sd * sd);
    }
  }
  obs.values = Eigen::Map<Eigen::VectorXd>(values.data(), static_cast<Eigen::Index>(values.size()));
  obs.variances = Eigen::Map<Eigen::VectorXd>(variances.data(), static_cast<Eigen::Index>(variances.size()));
  obs.validate();
  return obs;
}

assim::ObservationSet cmd_make_obs(const ExperimentConfig& cfg, ObsMode mode, bool zero_noise, std::ostream& log) {
  cfg.validate();
  const RunLayout run{cfg.run_dir};
  require(run.reference(), "run gen-data first");
  const auto refs = geomodel::read_dataset(run.reference());
  if (refs.size() != 1) throw FormatError(run.reference().string() + " must hold exactly one realization");
  const auto obs = make_observations(cfg, mode, refs.front(), zero_noise);
  if (mode == ObsMode::production) {
    flow::write_predicted_csv(run.reference_data(), flow::simulate(refs.front(), cfg.simulation), cfg.simulation);
  }
  assim::write_observations_csv(run.observations(mode), obs);
  log << "wrote " << obs.size() << " " << to_string(mode) << " observations to " << run.observations(mode).string()
      << (zero_noise ? " (no noise)" : "") << '\n';
  return obs;
}

AssimSummary cmd_assimilate(const ExperimentConfig& cfg, ObsMode mode, std::ostream& log) {
  cfg.validate();
  const RunLayout run{cfg.run_dir};
  require(run.checkpoint(), "run train first");
  require(run.observations(mode), "run make-obs first");
  const auto net = nn::load_checkpoint(run.checkpoint());
  if (net.config().nx != cfg.nx || net.config().ny != cfg.ny) {
    throw ValidationError("checkpoint grid does not match the configured grid");
  }
  const auto obs = assim::read_observations_csv(run.observations(mode));

  assim::LatentEnsemble prior;
  if (cfg.assim.prior_source == assim::PriorSource::encoder_means) {
    require(run.prior_set(), "run gen-data first");
    const auto realizations = geomodel::read_dataset(run.prior_set());
    if (static_cast<int>(realizations.size()) != cfg.assim.n_e) {
      throw ValidationError(run.prior_set().string() + " holds " + std::to_string(realizations.size()) +
                            " realizations but assim.n_e = " + std::to_string(cfg.assim.n_e));
    }
    prior = assim::prior_latents_from_realizations(net, realizations, cfg.threads);
  } else {
    prior = assim::sample_prior(net.n_z(), cfg.assim.n_e, stage_seed(cfg, SeedTag::prior_latents));
  }

  std::unique_ptr<assim::ForwardModel> forward;
  if (mode == ObsMode::hard) {
    forward = std::make_unique<assim::HardDataForward>(obs);
  } else {
    forward = std::make_unique<assim::ProductionForward>(cfg.simulation, obs);
  }
  assim::AssimilationOptions opt;
  opt.seed = stage_seed(cfg, SeedTag::assimilation);
  opt.threads = cfg.threads;
  opt.prior_source = cfg.assim.prior_source;
  const auto report = assim::run_assimilation(net, *forward, prior, obs, cfg.assim.schedule(), opt);

  const auto dir = run.assim_dir(mode);
  ensure_dir(dir);
  {
    auto os = open_out(dir / "iterations.csv");
    os << "iteration,alpha,mean_mismatch,hard_honor_rate\n";
    for (const auto& it : report.iterations) {
      os << it.iteration << ',' << fmt(it.alpha) << ',' << fmt(it.mean_mismatch) << ','
         << (it.hard_honor_rate ? fmt(*it.hard_honor_rate) : "") << '\n';
      log << "iteration " << it.iteration << "  alpha " << it.alpha << "  mean mismatch " << it.mean_mismatch;
      if (it.hard_honor_rate) log << "  honor rate " << *it.hard_honor_rate;
      log << '\n';
    }
  }
  {
    auto os = open_out(dir / "mismatch.csv");
    os << "iteration,member,mismatch\n";
    for (const auto& it : report.iterations) {
      for (Eigen::Index j = 0; j < it.member_mismatch.size(); ++j) {
        os << it.iteration << ',' << j << ',' << fmt(it.member_mismatch[j]) << '\n';
      }
    }
  }
  open_out(dir / "prior_source.txt") << assim::to_string(report.prior_source) << '\n';
  assim::write_observations_csv(dir / "observations.csv", obs);
  write_predicted(dir / "predicted_prior.csv", obs, report.predicted.front());
  write_predicted(dir / "predicted_posterior.csv", obs, report.predicted.back());
  geomodel::write_dataset(dir / "posterior.fcds", report.posterior_facies);
  const auto prior_facies = decode_members(net, report.ensembles.front());
  geomodel::write_dataset(dir / "prior.fcds", prior_facies);

  const auto maps = dir / "maps";
  ensure_dir(maps);
  const auto n_maps = std::min<std::size_t>(static_cast<std::size_t>(cfg.assim.map_count), prior_facies.size());
  for (std::size_t m = 0; m < n_maps; ++m) {
    char name[32];
    std::snprintf(name, sizeof name, "%03zu.pgm", m);
    geomodel::write_pgm(maps / ("prior_" + std::string(name)), prior_facies[m]);
    geomodel::write_pgm(maps / ("posterior_" + std::string(name)), report.posterior_facies[m]);
  }

  AssimSummary s;
  s.prior_mean_mismatch = report.iterations.front().mean_mismatch;
  s.posterior_mean_mismatch = report.iterations.back().mean_mismatch;
  s.prior_honor_rate = report.iterations.front().hard_honor_rate;
  s.posterior_honor_rate = report.iterations.back().hard_honor_rate;
  log << "mean mismatch: prior " << s.prior_mean_mismatch << ", posterior " << s.posterior_mean_mismatch << '\n';
  return s;
}

double quantile(std::vector<double> values, double q) {
  if (values.empty()) throw ValidationError("quantile of an empty set");
  if (!(q >= 0.0 && q <= 1.0)) throw ValidationError("quantile level must lie in [0, 1]");
  std::sort(values.begin(), values.end());
  const double pos = q * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, values.size() - 1);
  const double w = pos - static_cast<double>(lo);
  return values[lo] + w * (values[hi] - values[lo]);
}

std::vector<ReportSeries> cmd_report(const fs::path& assim_dir, const fs::path& out_dir, std::ostream& log) {
  for (const char* f : {"observations.csv", "predicted_prior.csv", "predicted_posterior.csv", "iterations.csv"}) {
    require(assim_dir / f, "incomplete assimilation directory; run assimilate first");
  }
  const auto obs = assim::read_observations_csv(assim_dir / "observations.csv");
  const auto prior = read_predicted(assim_dir / "predicted_prior.csv", obs.size());
  const auto post = read_predicted(assim_dir / "predicted_posterior.csv", obs.size());
  ensure_dir(out_dir);

  // Series keyed by location and kind, in first-appearance order.
  std::vector<std::string> order;
  std::map<std::string, std::vector<std::size_t>> rows;
  for (std::size_t r = 0; r < obs.size(); ++r) {
    const auto& d = obs.descriptors[r];
    auto key = location(d) + "_" + assim::to_string(d.kind);
    std::replace(key.begin(), key.end(), ':', '-');
    if (!rows.count(key)) order.push_back(key);
    rows[key].push_back(r);
  }

  auto row_values = [](const Eigen::MatrixXd& m, std::size_t r) {
    const Eigen::VectorXd v = m.row(static_cast<Eigen::Index>(r)).transpose();
    return std::vector<double>(v.data(), v.data() + v.size());
  };
  std::vector<ReportSeries> series;
  for (const auto& key : order) {
    auto os = open_out(out_dir / (key + ".csv"));
    os << "time,observed,prior_p10,prior_p50,prior_p90,post_p10,post_p50,post_p90,post_mean\n";
    for (const auto r : rows[key]) {
      const auto a = row_values(prior, r);
      const auto b = row_values(post, r);
      const auto ri = static_cast<Eigen::Index>(r);
      const double observed = obs.values[ri];
      os << fmt(obs.descriptors[r].time) << ',' << fmt(observed) << ',' << fmt(quantile(a, 0.1)) << ','
         << fmt(quantile(a, 0.5)) << ',' << fmt(quantile(a, 0.9)) << ',' << fmt(quantile(b, 0.1)) << ','
         << fmt(quantile(b, 0.5)) << ',' << fmt(quantile(b, 0.9)) << ',' << fmt(post.row(ri).mean()) << '\n';
    }
    series.push_back({key, rows[key].size()});
  }

  const auto phi_prior = assim::normalized_mismatch(prior, obs);
  const auto phi_post = assim::normalized_mismatch(post, obs);
  std::string source = "unknown";
  if (std::ifstream is(assim_dir / "prior_source.txt"); is) std::getline(is, source);
  std::ostringstream summary;
  summary << "prior source " << source << "\nmembers " << prior.cols() << "\nobservations " << obs.size() << "\nseries " << series.size()
          << "\nprior mean mismatch " << fmt(phi_prior.mean()) << "\nposterior mean mismatch " << fmt(phi_post.mean())
          << "\nreduction factor " << fmt(phi_prior.mean() / phi_post.mean()) << '\n';
  open_out(out_dir / "summary.txt") << summary.str();
  log << summary.str();
  return series;
}

}  // namespace fhm::app
