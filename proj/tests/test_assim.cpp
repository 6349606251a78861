#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>

#include "fhm/assim/esmda.hpp"
#include "fhm/assim/observations.hpp"
#include "fhm/assim/workflow.hpp"
#include "fhm/common/error.hpp"
#include "fhm/common/rng.hpp"
#include "fhm/geomodel/channel_generator.hpp"
#include "fhm/nn/vae.hpp"

using namespace fhm;
using namespace fhm::assim;
namespace fs = std::filesystem;

namespace {

ObservationSet scalar_obs(double value, double variance) {
  ObservationSet obs;
  ObsDescriptor d;
  d.kind = ObsKind::rate;
  d.well = "W";
  obs.descriptors = {d};
  obs.values = Eigen::VectorXd::Constant(1, value);
  obs.variances = Eigen::VectorXd::Constant(1, variance);
  return obs;
}

ObservationSet vector_obs(const Eigen::VectorXd& values, const Eigen::VectorXd& variances) {
  ObservationSet obs;
  for (Eigen::Index i = 0; i < values.size(); ++i) {
    ObsDescriptor d;
    d.kind = ObsKind::rate;
    d.well = "W" + std::to_string(i);
    d.time = static_cast<double>(i);
    obs.descriptors.push_back(d);
  }
  obs.values = values;
  obs.variances = variances;
  return obs;
}

Eigen::MatrixXd standard_normal(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed) {
  Rng rng(seed);
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j) {
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = rng.normal();
  }
  return m;
}

double mean(const Eigen::RowVectorXd& v) { return v.mean(); }
double variance(const Eigen::RowVectorXd& v) {
  const double m = v.mean();
  return (v.array() - m).square().sum() / static_cast<double>(v.size() - 1);
}

// Linear model d = H z run through repeated updates.
LatentEnsemble run_linear(const LatentEnsemble& prior, const Eigen::MatrixXd& h, const ObservationSet& obs,
                          const MdaSchedule& schedule, std::uint64_t seed) {
  LatentEnsemble z = prior;
  for (std::size_t k = 0; k < schedule.n_a(); ++k) {
    z = esmda_update(z, h * z.members, obs, schedule.alphas[k], derive_seed(seed, k));
  }
  return z;
}

}  // namespace

TEST_CASE("default schedules") {
  CHECK(default_schedule(4).alphas == std::vector<double>{4, 4, 4, 4});
  CHECK(default_schedule(1).alphas == std::vector<double>{1});
  const auto s20 = default_schedule(20);
  CHECK(s20.alphas == std::vector<double>(20, 20.0));
  double inv = 0.0;
  for (double a : s20.alphas) inv += 1.0 / a;
  CHECK(std::abs(inv - 1.0) <= 1e-12);
  for (int n = 1; n <= 50; ++n) CHECK_NOTHROW(default_schedule(n).validate());
  CHECK_THROWS_AS(default_schedule(0), ValidationError);
  CHECK_THROWS_AS((MdaSchedule{{2.0, 3.0}}.validate()), ValidationError);
  CHECK_THROWS_AS((MdaSchedule{{2.0, -2.0}}.validate()), ValidationError);
  CHECK_NOTHROW((MdaSchedule{{3.0, 3.0, 3.0}}.validate()));
  CHECK_NOTHROW((MdaSchedule{{9.333333333333333, 7.0, 4.0, 2.0}}.validate()));
}

TEST_CASE("observation perturbations") {
  const auto obs = vector_obs(Eigen::Vector3d(1.0, -2.0, 5.0), Eigen::Vector3d(0.5, 2.0, 0.01));
  std::vector<std::uint64_t> ids(100000);
  std::iota(ids.begin(), ids.end(), std::uint64_t{0});
  const double alpha = 3.0;
  const auto e = perturb_observations(obs, alpha, 42, ids);
  for (Eigen::Index i = 0; i < 3; ++i) {
    const Eigen::RowVectorXd row = e.row(i);
    CHECK(std::abs(variance(row) / (alpha * obs.variances[i]) - 1.0) < 0.02);
    CHECK(std::abs(mean(row) - obs.values[i]) < 4.0 * std::sqrt(alpha * obs.variances[i] / 1e5));
  }
  // Off-diagonal covariance vanishes (diagonal C_e).
  const Eigen::MatrixXd c = e.colwise() - e.rowwise().mean();
  const double c01 = c.row(0).dot(c.row(1)) / (1e5 - 1.0);
  CHECK(std::abs(c01) / std::sqrt(alpha * alpha * 0.5 * 2.0) < 0.02);

  CHECK(perturb_observations(obs, alpha, 42, ids) == e);
  CHECK(perturb_observations(obs, alpha, 43, ids) != e);
  CHECK_THROWS_AS(perturb_observations(obs, 0.0, 1, ids), ValidationError);

  // Vanishing variance leaves d_obs.
  const auto tiny = vector_obs(Eigen::Vector3d(1.0, -2.0, 5.0), Eigen::Vector3d::Constant(1e-30));
  const auto p = perturb_observations(tiny, 1.0, 7, {0, 1, 2, 3});
  for (Eigen::Index j = 0; j < 4; ++j) CHECK((p.col(j) - tiny.values).cwiseAbs().maxCoeff() < 1e-13);

  // Columns follow member ids, not positions.
  const auto a = perturb_observations(obs, 1.0, 5, {10, 20});
  const auto b = perturb_observations(obs, 1.0, 5, {20, 10});
  CHECK(a.col(0) == b.col(1));
  CHECK(a.col(1) == b.col(0));
}

TEST_CASE("constant predictions leave the ensemble unchanged") {
  const LatentEnsemble z(standard_normal(5, 30, 1));
  const auto obs = vector_obs(Eigen::Vector2d(1.0, 2.0), Eigen::Vector2d(0.1, 0.2));
  Eigen::MatrixXd d(2, 30);
  d.row(0).setConstant(0.3);
  d.row(1).setConstant(-4.0);
  const auto out = esmda_update(z, d, obs, 4.0, 9);
  CHECK(out.members == z.members);
}

TEST_CASE("scalar linear-Gaussian update matches the Bayes posterior") {
  // z ~ N(0,1), d = z, d_obs = 1, C_e = 1: posterior N(0.5, 0.5).
  const LatentEnsemble prior(standard_normal(1, 100000, 2024));
  const auto obs = scalar_obs(1.0, 1.0);
  const Eigen::MatrixXd h = Eigen::MatrixXd::Identity(1, 1);

  const auto single = run_linear(prior, h, obs, default_schedule(1), 7);
  const Eigen::RowVectorXd s = single.members.row(0);
  CHECK(std::abs(mean(s) - 0.5) <= 0.02);
  CHECK(std::abs(variance(s) - 0.5) <= 0.02);

  const auto multi = run_linear(prior, h, obs, MdaSchedule{{4, 4, 4, 4}}, 7);
  const Eigen::RowVectorXd m = multi.members.row(0);
  CHECK(std::abs(mean(m) - mean(s)) <= 0.02);
  CHECK(std::abs(variance(m) - 0.5) <= 0.02);
}

TEST_CASE("multivariate linear update matches the Kalman posterior") {
  const Eigen::Index nz = 3, nd = 2, ne = 50000;
  Eigen::MatrixXd h(nd, nz);
  h << 1.0, 0.5, 0.0, 0.0, -1.0, 2.0;
  const Eigen::Vector2d r(0.5, 2.0);
  const auto obs = vector_obs(Eigen::Vector2d(1.0, -0.5), r);
  const LatentEnsemble prior(standard_normal(nz, ne, 11));

  // Analytic posterior with prior N(0, I).
  const Eigen::MatrixXd s = h * h.transpose() + Eigen::MatrixXd(r.asDiagonal());
  const Eigen::MatrixXd gain = h.transpose() * s.inverse();
  const Eigen::VectorXd post_mean = gain * obs.values;
  const Eigen::MatrixXd post_cov = Eigen::MatrixXd::Identity(nz, nz) - gain * h;

  for (const auto& schedule : {default_schedule(1), default_schedule(4)}) {
    const auto z = run_linear(prior, h, obs, schedule, 3);
    const Eigen::VectorXd m = z.members.rowwise().mean();
    const Eigen::MatrixXd dz = z.members.colwise() - m;
    const Eigen::MatrixXd c = dz * dz.transpose() / static_cast<double>(ne - 1);
    CHECK((m - post_mean).cwiseAbs().maxCoeff() < 0.03);
    CHECK((c - post_cov).cwiseAbs().maxCoeff() < 0.03);
  }
}

TEST_CASE("member permutation permutes the update") {
  const LatentEnsemble z(standard_normal(4, 12, 5));
  Eigen::MatrixXd h = standard_normal(3, 4, 6);
  const auto obs = vector_obs(Eigen::Vector3d(0.2, -0.1, 1.0), Eigen::Vector3d(0.3, 0.3, 0.3));
  const auto out = esmda_update(z, h * z.members, obs, 2.0, 77);

  std::vector<Eigen::Index> perm(12);
  std::iota(perm.begin(), perm.end(), 0);
  std::reverse(perm.begin(), perm.end());
  std::swap(perm[0], perm[5]);
  Eigen::MatrixXd zp(4, 12);
  std::vector<std::uint64_t> ids(12);
  for (Eigen::Index j = 0; j < 12; ++j) {
    zp.col(j) = z.members.col(perm[static_cast<std::size_t>(j)]);
    ids[static_cast<std::size_t>(j)] = z.ids[static_cast<std::size_t>(perm[static_cast<std::size_t>(j)])];
  }
  const LatentEnsemble permuted(zp, ids);
  const auto out_p = esmda_update(permuted, h * permuted.members, obs, 2.0, 77);
  for (Eigen::Index j = 0; j < 12; ++j) {
    CHECK((out_p.members.col(j) - out.members.col(perm[static_cast<std::size_t>(j)])).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("rank-deficient predictions are handled by the truncated inverse") {
  // More data than members, with duplicated rows.
  const LatentEnsemble z(standard_normal(3, 6, 8));
  Eigen::MatrixXd h(10, 3);
  for (Eigen::Index i = 0; i < 10; ++i) h.row(i) = Eigen::RowVector3d(1.0, 0.5 * static_cast<double>(i % 2), 0.0);
  const auto obs = vector_obs(Eigen::VectorXd::Constant(10, 0.5), Eigen::VectorXd::Constant(10, 0.1));
  const auto out = esmda_update(z, h * z.members, obs, 1.0, 1);
  CHECK(out.members.allFinite());
  // The unobserved third latent is untouched only through sampling error.
  CHECK(out.members.row(0) != z.members.row(0));
}

TEST_CASE("update input checks") {
  const LatentEnsemble z(standard_normal(2, 5, 1));
  const auto obs = scalar_obs(1.0, 1.0);
  CHECK_THROWS_AS(esmda_update(z, Eigen::MatrixXd::Zero(1, 4), obs, 1.0, 1), ShapeError);
  CHECK_THROWS_AS(esmda_update(z, Eigen::MatrixXd::Zero(2, 5), obs, 1.0, 1), ShapeError);
  Eigen::MatrixXd bad = Eigen::MatrixXd::Zero(1, 5);
  bad(0, 2) = std::nan("");
  CHECK_THROWS_AS(esmda_update(z, bad, obs, 1.0, 1), NumericalError);
  CHECK_THROWS_AS(LatentEnsemble(Eigen::MatrixXd::Zero(2, 1)).validate(), ValidationError);
  CHECK_THROWS_AS(esmda_update(z, Eigen::MatrixXd::Zero(1, 5), obs, 0.0, 1), ValidationError);
}

TEST_CASE("normalized mismatch") {
  const auto obs = vector_obs(Eigen::Vector2d(1.0, 2.0), Eigen::Vector2d(0.25, 4.0));
  Eigen::MatrixXd d(2, 2);
  d << 1.5, 1.0, 0.0, 2.0;
  const auto phi = normalized_mismatch(d, obs);
  // ((0.5^2 / 0.25) + (2^2 / 4)) / 2 = 1 ; zero residual for the second member.
  CHECK(phi[0] == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(phi[1] == 0.0);
  CHECK_THROWS_AS(normalized_mismatch(Eigen::MatrixXd::Zero(3, 2), obs), ShapeError);
}

TEST_CASE("observation CSV round trip") {
  ObservationSet obs;
  ObsDescriptor hard;
  hard.kind = ObsKind::hard_facies;
  hard.cell_i = 3;
  hard.cell_j = 7;
  hard.facies = 1;
  ObsDescriptor wc;
  wc.kind = ObsKind::water_cut;
  wc.well = "P2";
  wc.time = 45.0;
  obs.descriptors = {hard, wc};
  obs.values = Eigen::Vector2d(1.0, 0.123456789012345);
  obs.variances = Eigen::Vector2d(0.01, 1e-4);
  const auto dir = fs::temp_directory_path() / "fhm_tests";
  fs::create_directories(dir);
  const auto path = dir / "obs.csv";
  write_observations_csv(path, obs);
  const auto back = read_observations_csv(path);
  REQUIRE(back.size() == 2);
  CHECK(back.descriptors[0].kind == ObsKind::hard_facies);
  CHECK(back.descriptors[0].cell_i == 3);
  CHECK(back.descriptors[0].cell_j == 7);
  CHECK(back.descriptors[0].facies == 1);
  CHECK(back.values[0] == 1.0);
  CHECK(back.descriptors[1].well == "P2");
  CHECK(back.descriptors[1].time == 45.0);
  CHECK(back.values[1] == obs.values[1]);
  CHECK(back.variances[1] == doctest::Approx(1e-4).epsilon(1e-14));
  CHECK(back.has_hard_data());

  std::ofstream(path) << "time,well_or_cell,kind,value,stddev\n0,P1,pressure,1,1\n";
  CHECK_THROWS(read_observations_csv(path));
  std::ofstream(path) << "time,well_or_cell,kind,value,stddev\n0,P1,rate,1,0\n";
  CHECK_THROWS_AS(read_observations_csv(path), ValidationError);
  std::ofstream(path) << "a,b\n";
  CHECK_THROWS_AS(read_observations_csv(path), FormatError);
}

namespace {

nn::NetworkConfig tiny_net() {
  nn::NetworkConfig c;
  c.nx = c.ny = 8;
  c.n_z = 3;
  c.conv = {{2, 2, 2, 2, 2}, {2, 3, 3, 1, 1}};
  c.dense_units = {6};
  return c;
}

ObservationSet hard_obs(std::vector<std::tuple<int, int, int>> cells) {
  ObservationSet obs;
  for (auto [i, j, f] : cells) {
    ObsDescriptor d;
    d.kind = ObsKind::hard_facies;
    d.cell_i = i;
    d.cell_j = j;
    d.facies = f;
    obs.descriptors.push_back(d);
  }
  obs.values = Eigen::VectorXd::Ones(static_cast<Eigen::Index>(cells.size()));
  obs.variances = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(cells.size()), 0.01);
  return obs;
}

}  // namespace

TEST_CASE("hard-data forward model") {
  const nn::VaeNetwork zero(tiny_net());
  const auto obs = hard_obs({{1, 2, 1}, {5, 5, 0}});
  const LatentEnsemble z(standard_normal(3, 4, 1));
  const auto d = hard_data_forward(zero, z, obs);
  CHECK(d.rows() == 2);
  CHECK(d.cols() == 4);
  CHECK((d.array() == 0.5).all());

  // A decoder that saturates toward channel 1 predicts ~1 for facies-1 cells.
  nn::VaeNetwork sat(tiny_net());
  auto& last = sat.params().decoder.back();
  last.bias[0] = -30.0;
  last.bias[1] = 30.0;
  const auto obs1 = hard_obs({{1, 2, 1}, {6, 0, 1}});
  const auto d1 = hard_data_forward(sat, z, obs1);
  CHECK((d1.array() > 1.0 - 1e-12).all());
  // Zero innovation up to the noise: no update.
  const auto phi = normalized_mismatch(d1, obs1);
  CHECK(phi.maxCoeff() < 1e-20);

  CHECK_THROWS_AS(HardDataForward(hard_obs({{8, 0, 1}})).evaluate(zero, z.members.col(0)), ValidationError);
}

TEST_CASE("prior builders") {
  const auto net = nn::VaeNetwork::initialized(tiny_net(), 3);
  geomodel::ChannelGenParams p;
  p.nx = p.ny = 8;
  p.n_channels_min = p.n_channels_max = 1;
  p.width_min = 1.0;
  p.width_max = 2.0;
  p.target_fraction_min = 0.05;
  p.target_fraction_max = 0.6;
  auto grids = geomodel::generate_dataset(p, 4, 1);
  grids.push_back(grids[1]);
  const auto z = prior_latents_from_realizations(net, grids);
  CHECK(z.n_e() == 5);
  CHECK(z.n_z() == 3);
  CHECK(z.members.col(4) == z.members.col(1));
  for (Eigen::Index j = 0; j < 5; ++j) {
    const auto enc = nn::encode(net, geomodel::to_one_hot(grids[static_cast<std::size_t>(j)]));
    for (Eigen::Index i = 0; i < 3; ++i) CHECK(z.members(i, j) == enc.mu[static_cast<std::size_t>(i)]);
  }
  const auto a = sample_prior(3, 5, 9);
  CHECK(a.members == sample_prior(3, 5, 9).members);
  CHECK(a.members != sample_prior(3, 5, 10).members);
}

TEST_CASE("assimilation run bookkeeping") {
  const auto net = nn::VaeNetwork::initialized(tiny_net(), 4);
  const auto obs = hard_obs({{1, 1, 1}, {4, 6, 0}, {7, 3, 1}});
  const auto prior = sample_prior(3, 20, 2);
  const HardDataForward fwd(obs);
  AssimilationOptions opt;
  opt.seed = 5;
  const auto report = run_assimilation(net, fwd, prior, obs, default_schedule(3), opt);
  REQUIRE(report.iterations.size() == 4);
  REQUIRE(report.ensembles.size() == 4);
  REQUIRE(report.predicted.size() == 4);
  CHECK(report.ensembles.front().members == prior.members);
  CHECK(report.posterior_facies.size() == 20);
  for (std::size_t k = 0; k < report.iterations.size(); ++k) {
    const auto& it = report.iterations[k];
    CHECK(it.iteration == static_cast<int>(k));
    CHECK(it.alpha == (k == 0 ? 0.0 : 3.0));
    REQUIRE(it.hard_honor_rate.has_value());
    // Recompute the mismatch from the stored predictions.
    const auto phi = normalized_mismatch(report.predicted[k], obs);
    CHECK((phi - it.member_mismatch).cwiseAbs().maxCoeff() <= 1e-12);
    CHECK(std::abs(phi.mean() - it.mean_mismatch) <= 1e-12);
    // Stored predictions belong to the stored ensemble.
    CHECK(evaluate_ensemble(fwd, net, report.ensembles[k]) == report.predicted[k]);
  }
  // Posterior facies are the decoded final ensemble.
  for (std::size_t j = 0; j < 20; ++j) {
    const Eigen::VectorXd col = report.ensembles.back().members.col(static_cast<Eigen::Index>(j));
    CHECK(report.posterior_facies[j] ==
          nn::decode_facies(net, nn::Tensor({3}, std::vector<double>(col.data(), col.data() + 3))));
  }
  CHECK(hard_data_honor_rate(report.posterior_facies, obs) == *report.iterations.back().hard_honor_rate);

  const auto again = run_assimilation(net, fwd, prior, obs, default_schedule(3), opt);
  CHECK(again.ensembles.back().members == report.ensembles.back().members);
  opt.threads = 3;
  const auto threaded = run_assimilation(net, fwd, prior, obs, default_schedule(3), opt);
  CHECK(threaded.ensembles.back().members == report.ensembles.back().members);
}

TEST_CASE("a collapsed ensemble stays put") {
  const auto net = nn::VaeNetwork::initialized(tiny_net(), 4);
  const auto obs = hard_obs({{1, 1, 1}});
  Eigen::MatrixXd same(3, 6);
  same.colwise() = Eigen::Vector3d(0.3, -0.2, 0.1);
  const LatentEnsemble prior(same);
  const auto report = run_assimilation(net, HardDataForward(obs), prior, obs, default_schedule(1), {});
  CHECK(report.ensembles.back().members == prior.members);
  CHECK(report.iterations.front().mean_mismatch == report.iterations.back().mean_mismatch);
}

TEST_CASE("forward failures carry member and iteration context") {
  struct Failing final : ForwardModel {
    Eigen::VectorXd evaluate(const nn::VaeNetwork&, const Eigen::VectorXd& z) const override {
      if (z[0] > 0.5) throw NumericalError("solver blew up");
      return Eigen::VectorXd::Zero(1);
    }
    std::string name() const override { return "failing"; }
  };
  const auto net = nn::VaeNetwork::initialized(tiny_net(), 4);
  Eigen::MatrixXd z = Eigen::MatrixXd::Zero(3, 4);
  z(0, 2) = 1.0;
  try {
    run_assimilation(net, Failing{}, LatentEnsemble(z), scalar_obs(0.0, 1.0), default_schedule(1), {});
    FAIL("expected failure");
  } catch (const NumericalError& e) {
    const std::string what = e.what();
    CHECK(what.find("iteration 0") != std::string::npos);
    CHECK(what.find("member 2") != std::string::npos);
  }
}
