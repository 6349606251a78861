#include "fhm/nn/trainer.hpp"

#include <cmath>
#include <numeric>
#include <string>

#include "fhm/common/error.hpp"
#include "fhm/common/parallel.hpp"
#include "fhm/common/rng.hpp"

namespace fhm::nn {

void TrainConfig::validate() const {
  if (epochs < 0) throw ValidationError("epochs must be >= 0");
  if (batch_size < 1) throw ValidationError("batch size must be >= 1");
  if (!(learning_rate > 0.0)) throw ValidationError("learning rate must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0)) throw ValidationError("Adam betas must lie in [0, 1)");
  if (!(epsilon > 0.0)) throw ValidationError("Adam epsilon must be positive");
  if (!(lambda >= 0.0)) throw ValidationError("KL weight lambda must be >= 0");
}

void adam_step(VaeParameters& params, const VaeParameters& grads, AdamState& state, const TrainConfig& cfg) {
  if (state.first_moment.parameter_count() != params.parameter_count()) {
    state.first_moment = grads;
    state.first_moment.fill(0.0);
    state.second_moment = state.first_moment;
  }
  ++state.step;
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  const double step = cfg.learning_rate / c1;

  std::vector<Tensor*> p, m, v;
  std::vector<const Tensor*> g;
  params.for_each([&](const std::string&, Tensor& t) { p.push_back(&t); });
  state.first_moment.for_each([&](const std::string&, Tensor& t) { m.push_back(&t); });
  state.second_moment.for_each([&](const std::string&, Tensor& t) { v.push_back(&t); });
  grads.for_each([&](const std::string&, const Tensor& t) { g.push_back(&t); });
  for (std::size_t t = 0; t < p.size(); ++t) {
    double* w = p[t]->data();
    double* mt = m[t]->data();
    double* vt = v[t]->data();
    const double* gt = g[t]->data();
    for (std::size_t i = 0; i < p[t]->size(); ++i) {
      mt[i] = cfg.beta1 * mt[i] + (1.0 - cfg.beta1) * gt[i];
      vt[i] = cfg.beta2 * vt[i] + (1.0 - cfg.beta2) * gt[i] * gt[i];
      w[i] -= step * mt[i] / (std::sqrt(vt[i] / c2) + cfg.epsilon);
    }
  }
}

namespace {

// stream tags under derive_seed(seed, epoch)
constexpr std::uint64_t kShuffleTag = 0;
constexpr std::uint64_t kEpsTag = 1;
constexpr std::uint64_t kDropoutTag = 2;

void check_set(const VaeNetwork& net, std::span<const geomodel::FaciesGrid> set, const char* what) {
  if (set.empty()) throw ValidationError(std::string(what) + " set is empty");
  const auto& c = net.config();
  for (const auto& g : set) {
    if (g.nx() != c.nx || g.ny() != c.ny || g.k() > c.k) {
      throw ShapeError(std::string(what) + " grid " + std::to_string(g.nx()) + "x" + std::to_string(g.ny()) +
                       " does not match the network input " + std::to_string(c.nx) + "x" + std::to_string(c.ny));
    }
  }
}

std::vector<Tensor> to_tensors(const VaeNetwork& net, std::span<const geomodel::FaciesGrid> set) {
  std::vector<Tensor> out;
  out.reserve(set.size());
  for (const auto& g : set) out.push_back(image_to_tensor(geomodel::to_one_hot(g, net.config().k)));
  return out;
}

}  // namespace

double reconstruction_accuracy(const VaeNetwork& net, std::span<const geomodel::FaciesGrid> dataset, int threads) {
  check_set(net, dataset, "accuracy");
  std::vector<double> per(dataset.size());
  parallel_for(dataset.size(), threads, [&](std::size_t i) {
    const auto& x = dataset[i];
    const auto enc = encode(net, geomodel::to_one_hot(x, net.config().k));
    const auto rec = decode_facies(net, enc.mu);
    std::size_t hit = 0;
    for (std::size_t c = 0; c < x.size(); ++c) hit += rec.codes()[c] == x.codes()[c];
    per[i] = static_cast<double>(hit) / static_cast<double>(x.size());
  });
  return std::accumulate(per.begin(), per.end(), 0.0) / static_cast<double>(per.size());
}

double evaluation_loss(const VaeNetwork& net, std::span<const geomodel::FaciesGrid> dataset, double lambda,
                       int threads) {
  check_set(net, dataset, "evaluation");
  const auto tensors = to_tensors(net, dataset);
  std::vector<SampleNoise> noise(tensors.size(), SampleNoise{Tensor({static_cast<std::size_t>(net.n_z())}), 0});
  GradientOptions opt;
  opt.lambda = lambda;
  opt.mode = Mode::eval;
  opt.threads = threads;
  return batch_loss(net, tensors, noise, opt).total;
}

TrainResult train(VaeNetwork& net, std::span<const geomodel::FaciesGrid> train_set,
                  std::span<const geomodel::FaciesGrid> val_set, const TrainConfig& cfg,
                  std::optional<AdamState> resume, const std::function<void(const EpochRecord&)>& on_epoch) {
  cfg.validate();
  check_set(net, train_set, "training");
  check_set(net, val_set, "validation");

  TrainResult result;
  if (resume) result.state = std::move(*resume);
  const auto samples = to_tensors(net, train_set);
  const auto nz = static_cast<std::size_t>(net.n_z());
  const auto batch = static_cast<std::size_t>(cfg.batch_size);

  GradientOptions opt;
  opt.lambda = cfg.lambda;
  opt.mode = Mode::train;
  opt.threads = cfg.threads;

  std::vector<std::size_t> order(samples.size());
  for (int local = 0; local < cfg.epochs; ++local) {
    const int epoch = result.state.epochs_done + 1;
    const std::uint64_t epoch_seed = derive_seed(cfg.seed, static_cast<std::uint64_t>(epoch));
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng shuffler(derive_seed(epoch_seed, kShuffleTag));
    shuffler.shuffle(std::span<std::size_t>(order));

    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += batch) {
      const std::size_t count = std::min(batch, order.size() - start);
      std::vector<Tensor> xs;
      std::vector<SampleNoise> noise;
      xs.reserve(count);
      noise.reserve(count);
      for (std::size_t b = 0; b < count; ++b) {
        const std::size_t pos = start + b;
        xs.push_back(samples[order[pos]]);
        Rng eps_rng(derive_seed(epoch_seed, kEpsTag, pos));
        SampleNoise sn{Tensor({nz}), derive_seed(epoch_seed, kDropoutTag, pos)};
        eps_rng.fill_normal(sn.eps.values());
        noise.push_back(std::move(sn));
      }
      BatchGradient bg;
      try {
        bg = backward(net, xs, noise, opt);
      } catch (const NumericalError& e) {
        throw NumericalError("training diverged at epoch " + std::to_string(epoch) + ": " + e.what());
      }
      if (!std::isfinite(bg.loss.total)) {
        throw NumericalError("training diverged at epoch " + std::to_string(epoch) + ": loss is not finite");
      }
      adam_step(net.params(), bg.grads, result.state, cfg);
      loss_sum += bg.loss.total;
      ++batches;
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(batches);
    rec.val_loss = evaluation_loss(net, val_set, cfg.lambda, cfg.threads);
    rec.val_accuracy = reconstruction_accuracy(net, val_set, cfg.threads);
    if (!std::isfinite(rec.val_loss)) {
      throw NumericalError("training diverged at epoch " + std::to_string(epoch) + ": validation loss is not finite");
    }
    result.state.epochs_done = epoch;
    result.history.push_back(rec);
    if (on_epoch) on_epoch(rec);
  }
  return result;
}

}  // namespace fhm::nn
