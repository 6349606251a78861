#include "fhm/nn/vae.hpp"

#include <algorithm>
#include <cmath>

#include "fhm/common/error.hpp"
#include "fhm/common/parallel.hpp"
#include "fhm/common/rng.hpp"
#include "fhm/nn/loss.hpp"

namespace fhm::nn {

NetworkConfig NetworkConfig::table1_desk(int nx, int ny, int k) {
  NetworkConfig c;
  c.nx = nx;
  c.ny = ny;
  c.k = k;
  return c;
}

NetworkConfig NetworkConfig::table1(int nx, int ny, int k) {
  NetworkConfig c;
  c.nx = nx;
  c.ny = ny;
  c.k = k;
  c.n_z = 100;
  c.conv = {{32, 2, 2, 2, 2}, {32, 3, 3, 2, 2}, {16, 3, 3, 1, 1}};
  c.dense_units = {1024};
  return c;
}

void NetworkConfig::validate() const {
  if (nx < 1 || ny < 1) throw ValidationError("network grid extents must be >= 1");
  if (k < 2) throw ValidationError("network needs k >= 2 facies channels");
  if (n_z < 1) throw ValidationError("latent size n_z must be >= 1");
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) throw ValidationError("dropout rate must lie in [0, 1)");
  if (output_kernel < 1) throw ValidationError("output kernel must be >= 1");
  for (int u : dense_units) {
    if (u < 1) throw ValidationError("dense unit counts must be >= 1");
  }
}

// ---------------------------------------------------------------------------

void VaeParameters::for_each(const std::function<void(const std::string&, Tensor&)>& fn) {
  auto visit = [&](const std::string& prefix, LayerParams& p) {
    if (p.weight.empty() && p.bias.empty()) return;
    fn(prefix + ".weight", p.weight);
    fn(prefix + ".bias", p.bias);
  };
  for (std::size_t i = 0; i < encoder.size(); ++i) visit("encoder." + std::to_string(i), encoder[i]);
  visit("mean_head", mean_head);
  visit("logvar_head", logvar_head);
  for (std::size_t i = 0; i < decoder.size(); ++i) visit("decoder." + std::to_string(i), decoder[i]);
}

void VaeParameters::for_each(const std::function<void(const std::string&, const Tensor&)>& fn) const {
  const_cast<VaeParameters*>(this)->for_each([&](const std::string& name, Tensor& t) { fn(name, t); });
}

std::size_t VaeParameters::parameter_count() const {
  std::size_t n = 0;
  for_each([&](const std::string&, const Tensor& t) { n += t.size(); });
  return n;
}

void VaeParameters::fill(double v) {
  for_each([&](const std::string&, Tensor& t) { t.fill(v); });
}

void VaeParameters::add(const VaeParameters& other) {
  std::vector<const Tensor*> rhs;
  other.for_each([&](const std::string&, const Tensor& t) { rhs.push_back(&t); });
  std::size_t idx = 0;
  for_each([&](const std::string& name, Tensor& t) {
    if (idx >= rhs.size() || rhs[idx]->size() != t.size()) throw ShapeError("parameter layout mismatch at " + name);
    const double* src = rhs[idx++]->data();
    double* dst = t.data();
    for (std::size_t i = 0; i < t.size(); ++i) dst[i] += src[i];
  });
}

void VaeParameters::scale(double factor) {
  for_each([&](const std::string&, Tensor& t) {
    for (double& v : t.values()) v *= factor;
  });
}

// ---------------------------------------------------------------------------

VaeNetwork::VaeNetwork(NetworkConfig config) : config_(std::move(config)) {
  config_.validate();
  const auto& c = config_;

  // encoder trunk
  Shape shape = input_shape();
  auto push_enc = [&](LayerSpec spec) {
    encoder_shapes_.push_back(shape);
    shape = infer_output_shape(spec, shape);
    encoder_.push_back(std::move(spec));
  };
  for (std::size_t i = 0; i < c.conv.size(); ++i) {
    const auto& s = c.conv[i];
    push_enc(LayerSpec::conv2d("encoder.conv" + std::to_string(i + 1), s.kernels, s.kernel_h, s.kernel_w, s.stride_h,
                               s.stride_w, Activation::relu));
  }
  const Shape conv_out = shape;
  push_enc(LayerSpec::flatten("encoder.flatten"));
  for (std::size_t i = 0; i < c.dense_units.size(); ++i) {
    push_enc(LayerSpec::dense("encoder.dense" + std::to_string(i + 1), c.dense_units[i], Activation::relu));
    if (i == 0 && c.dropout_rate > 0.0) push_enc(LayerSpec::dropout("encoder.dropout", c.dropout_rate));
  }
  encoder_shapes_.push_back(shape);
  mean_head_ = LayerSpec::dense("encoder.mean", c.n_z, Activation::linear);
  logvar_head_ = LayerSpec::dense("encoder.logvar", c.n_z, Activation::linear);
  infer_output_shape(mean_head_, shape);

  // mirrored decoder
  shape = {static_cast<std::size_t>(c.n_z)};
  auto push_dec = [&](LayerSpec spec) {
    decoder_shapes_.push_back(shape);
    shape = infer_output_shape(spec, shape);
    decoder_.push_back(std::move(spec));
  };
  for (std::size_t i = 0; i < c.dense_units.size(); ++i) {
    const int units = c.dense_units[c.dense_units.size() - 1 - i];
    push_dec(LayerSpec::dense("decoder.dense" + std::to_string(i + 1), units, Activation::relu));
    if (i == 0 && c.dropout_rate > 0.0) push_dec(LayerSpec::dropout("decoder.dropout", c.dropout_rate));
  }
  if (c.conv.empty()) {
    push_dec(LayerSpec::dense("decoder.dense_out", static_cast<int>(shape_size(input_shape())), Activation::relu));
    push_dec(LayerSpec::reshape("decoder.reshape", input_shape()));
  } else {
    push_dec(LayerSpec::dense("decoder.dense" + std::to_string(c.dense_units.size() + 1),
                              static_cast<int>(shape_size(conv_out)), Activation::relu));
    push_dec(LayerSpec::reshape("decoder.reshape", conv_out));
    for (std::size_t i = 0; i < c.conv.size(); ++i) {
      const auto& s = c.conv[c.conv.size() - 1 - i];
      push_dec(LayerSpec::transposed_conv2d("decoder.tconv" + std::to_string(i + 1), s.kernels, s.kernel_h,
                                            s.kernel_w, s.stride_h, s.stride_w, Activation::relu));
    }
  }
  const auto f = static_cast<std::size_t>(c.output_kernel);
  push_dec(LayerSpec::bilinear_upsample("decoder.upsample", c.ny + f - 1, c.nx + f - 1));
  push_dec(LayerSpec::conv2d("decoder.output", c.k, c.output_kernel, c.output_kernel, 1, 1, Activation::sigmoid));
  decoder_shapes_.push_back(shape);

  if (shape != input_shape()) {
    throw ShapeError("decoder output " + shape_to_string(shape) + " does not reproduce input " +
                     shape_to_string(input_shape()));
  }
  params_ = zero_parameters();
}

Shape VaeNetwork::input_shape() const {
  return {static_cast<std::size_t>(config_.k), static_cast<std::size_t>(config_.ny),
          static_cast<std::size_t>(config_.nx)};
}

VaeParameters VaeNetwork::zero_parameters() const {
  VaeParameters p;
  for (std::size_t i = 0; i < encoder_.size(); ++i) p.encoder.push_back(make_params(encoder_[i], encoder_shapes_[i]));
  p.mean_head = make_params(mean_head_, encoder_shapes_.back());
  p.logvar_head = make_params(logvar_head_, encoder_shapes_.back());
  for (std::size_t i = 0; i < decoder_.size(); ++i) p.decoder.push_back(make_params(decoder_[i], decoder_shapes_[i]));
  return p;
}

VaeNetwork VaeNetwork::initialized(NetworkConfig config, std::uint64_t seed) {
  VaeNetwork net(std::move(config));
  Rng rng(seed);
  auto& p = net.params_;
  for (std::size_t i = 0; i < net.encoder_.size(); ++i) init_params(net.encoder_[i], net.encoder_shapes_[i], p.encoder[i], rng);
  init_params(net.mean_head_, net.encoder_shapes_.back(), p.mean_head, rng);
  init_params(net.logvar_head_, net.encoder_shapes_.back(), p.logvar_head, rng);
  for (std::size_t i = 0; i < net.decoder_.size(); ++i) init_params(net.decoder_[i], net.decoder_shapes_[i], p.decoder[i], rng);
  return net;
}

// ---------------------------------------------------------------------------

Tensor image_to_tensor(const geomodel::OneHotImage& image) {
  return Tensor({static_cast<std::size_t>(image.k), static_cast<std::size_t>(image.ny),
                 static_cast<std::size_t>(image.nx)},
                image.values);
}

geomodel::OneHotImage tensor_to_image(const Tensor& t) {
  if (t.rank() != 3) throw ShapeError("image tensor must be [k, ny, nx], got " + shape_to_string(t.shape()));
  return {static_cast<int>(t.extent(2)), static_cast<int>(t.extent(1)), static_cast<int>(t.extent(0)),
          std::vector<double>(t.values().begin(), t.values().end())};
}

namespace {

constexpr std::uint64_t kDecoderSeedOffset = 1000;

void require_input(const VaeNetwork& net, const Tensor& x) {
  if (x.shape() != net.input_shape()) {
    throw ShapeError("network expects input " + shape_to_string(net.input_shape()) + ", got " +
                     shape_to_string(x.shape()));
  }
}

void require_latent(const VaeNetwork& net, const Tensor& z) {
  if (z.rank() != 1 || z.size() != static_cast<std::size_t>(net.n_z())) {
    throw ShapeError("latent vector must have shape [" + std::to_string(net.n_z()) + "], got " +
                     shape_to_string(z.shape()));
  }
}

struct SampleTrace {
  std::vector<Tensor> enc;  // enc[0] = x, enc[i + 1] = output of encoder layer i
  Tensor mu, logvar, z;
  std::vector<Tensor> dec;  // dec[0] = z, dec.back() = reconstruction
};

std::vector<Tensor> run_stack(const std::vector<LayerSpec>& layers, const std::vector<LayerParams>& params, Tensor input,
                              Mode mode, std::uint64_t seed, std::uint64_t seed_offset) {
  std::vector<Tensor> acts;
  acts.reserve(layers.size() + 1);
  acts.push_back(std::move(input));
  for (std::size_t i = 0; i < layers.size(); ++i) {
    acts.push_back(forward_layer(layers[i], acts.back(), params[i], mode, derive_seed(seed, seed_offset + i)));
  }
  return acts;
}

SampleTrace forward_sample(const VaeNetwork& net, const Tensor& x, const SampleNoise& noise, Mode mode) {
  const auto& p = net.params();
  SampleTrace t;
  t.enc = run_stack(net.encoder_layers(), p.encoder, x, mode, noise.dropout_seed, 0);
  t.mu = forward_layer(net.mean_head(), t.enc.back(), p.mean_head, mode);
  t.logvar = forward_layer(net.logvar_head(), t.enc.back(), p.logvar_head, mode);
  t.z = reparameterize(t.mu, t.logvar, noise.eps);
  t.dec = run_stack(net.decoder_layers(), p.decoder, t.z, mode, noise.dropout_seed, kDecoderSeedOffset);
  return t;
}

LossParts sample_loss(const SampleTrace& t, const Tensor& x, const GradientOptions& opt) {
  LossParts parts;
  parts.reconstruction = opt.include_reconstruction ? bce_loss(x.values(), t.dec.back().values()) : 0.0;
  parts.kl = kl_divergence(t.mu.values(), t.logvar.values());
  parts.total = parts.reconstruction + opt.lambda * parts.kl;
  return parts;
}

void check_finite(const LayerSpec& spec, const Tensor& grad_in, const LayerParams& grads) {
  if (!grad_in.all_finite() || !grads.weight.all_finite() || !grads.bias.all_finite()) {
    throw NumericalError("non-finite gradient in layer '" + spec.name + "'");
  }
}

Tensor backward_stack(const std::vector<LayerSpec>& layers, const std::vector<LayerParams>& params,
                      std::vector<LayerParams>& grads, const std::vector<Tensor>& acts, Tensor grad, Mode mode,
                      std::uint64_t seed, std::uint64_t seed_offset, bool last_is_preactivation) {
  for (std::size_t n = layers.size(); n-- > 0;) {
    const bool pre = last_is_preactivation && n + 1 == layers.size();
    grad = backward_layer(layers[n], acts[n], acts[n + 1], grad, params[n], grads[n], mode,
                          derive_seed(seed, seed_offset + n), pre);
    check_finite(layers[n], grad, grads[n]);
  }
  return grad;
}

LossParts backward_sample(const VaeNetwork& net, const Tensor& x, const SampleNoise& noise,
                          const GradientOptions& opt, VaeParameters& g) {
  const auto& p = net.params();
  const SampleTrace t = forward_sample(net, x, noise, opt.mode);
  const LossParts loss = sample_loss(t, x, opt);

  // d(mean BCE)/d(pre-sigmoid), evaluated at the clamped prediction
  const Tensor& xhat = t.dec.back();
  Tensor grad_out(xhat.shape(), 0.0);
  if (opt.include_reconstruction) {
    const double inv_n = 1.0 / static_cast<double>(xhat.size());
    for (std::size_t i = 0; i < xhat.size(); ++i) {
      grad_out[i] = (std::clamp(xhat[i], kBceClamp, 1.0 - kBceClamp) - x[i]) * inv_n;
    }
  }
  const Tensor grad_z = backward_stack(net.decoder_layers(), p.decoder, g.decoder, t.dec, std::move(grad_out), opt.mode,
                                       noise.dropout_seed, kDecoderSeedOffset, true);

  const std::size_t nz = t.mu.size();
  Tensor grad_mu({nz}), grad_logvar({nz});
  for (std::size_t i = 0; i < nz; ++i) {
    const double sigma = std::exp(0.5 * t.logvar[i]);
    grad_mu[i] = grad_z[i] + opt.lambda * t.mu[i];
    grad_logvar[i] = grad_z[i] * 0.5 * sigma * noise.eps[i] + opt.lambda * 0.5 * (sigma * sigma - 1.0);
  }
  Tensor grad_trunk = backward_layer(net.mean_head(), t.enc.back(), t.mu, grad_mu, p.mean_head, g.mean_head, opt.mode);
  check_finite(net.mean_head(), grad_trunk, g.mean_head);
  const Tensor grad_lv =
      backward_layer(net.logvar_head(), t.enc.back(), t.logvar, grad_logvar, p.logvar_head, g.logvar_head, opt.mode);
  check_finite(net.logvar_head(), grad_lv, g.logvar_head);
  for (std::size_t i = 0; i < grad_trunk.size(); ++i) grad_trunk[i] += grad_lv[i];

  backward_stack(net.encoder_layers(), p.encoder, g.encoder, t.enc, std::move(grad_trunk), opt.mode,
                 noise.dropout_seed, 0, false);
  return loss;
}

void check_batch(const VaeNetwork& net, std::span<const Tensor> batch, std::span<const SampleNoise> noise) {
  if (batch.empty()) throw ValidationError("batch must be nonempty");
  if (noise.size() != batch.size()) throw ValidationError("one SampleNoise entry is required per batch item");
  for (const auto& x : batch) require_input(net, x);
  for (const auto& n : noise) require_latent(net, n.eps);
}

}  // namespace

Encoding encode(const VaeNetwork& net, const Tensor& x) {
  require_input(net, x);
  const auto& p = net.params();
  const auto acts = run_stack(net.encoder_layers(), p.encoder, x, Mode::eval, 0, 0);
  Encoding e{forward_layer(net.mean_head(), acts.back(), p.mean_head, Mode::eval),
             forward_layer(net.logvar_head(), acts.back(), p.logvar_head, Mode::eval)};
  if (!e.mu.all_finite() || !e.logvar.all_finite()) throw NumericalError("encoder produced non-finite values");
  return e;
}

Encoding encode(const VaeNetwork& net, const geomodel::OneHotImage& x) { return encode(net, image_to_tensor(x)); }

Encoding encode_batch(const VaeNetwork& net, std::span<const geomodel::OneHotImage> batch, int threads) {
  const auto nz = static_cast<std::size_t>(net.n_z());
  Encoding out{Tensor({batch.size(), nz}), Tensor({batch.size(), nz})};
  parallel_for(batch.size(), threads, [&](std::size_t b) {
    const Encoding e = encode(net, batch[b]);
    std::copy(e.mu.values().begin(), e.mu.values().end(), out.mu.data() + b * nz);
    std::copy(e.logvar.values().begin(), e.logvar.values().end(), out.logvar.data() + b * nz);
  });
  return out;
}

Tensor reparameterize(const Tensor& mu, const Tensor& logvar, const Tensor& eps) {
  if (mu.size() != logvar.size() || mu.size() != eps.size()) {
    throw ShapeError("reparameterize: mu, logvar and eps lengths differ");
  }
  Tensor z(mu.shape());
  for (std::size_t i = 0; i < mu.size(); ++i) z[i] = mu[i] + std::exp(0.5 * logvar[i]) * eps[i];
  return z;
}

Tensor decode_tensor(const VaeNetwork& net, const Tensor& z) {
  require_latent(net, z);
  Tensor x = z;
  const auto& p = net.params();
  for (std::size_t i = 0; i < net.decoder_layers().size(); ++i) {
    x = forward_layer(net.decoder_layers()[i], x, p.decoder[i], Mode::eval);
  }
  if (!x.all_finite()) throw NumericalError("decoder produced non-finite values");
  return x;
}

geomodel::OneHotImage decode(const VaeNetwork& net, const Tensor& z) { return tensor_to_image(decode_tensor(net, z)); }

geomodel::FaciesGrid decode_facies(const VaeNetwork& net, const Tensor& z) { return geomodel::from_soft(decode(net, z)); }

LossParts batch_loss(const VaeNetwork& net, std::span<const Tensor> batch, std::span<const SampleNoise> noise,
                     const GradientOptions& options) {
  check_batch(net, batch, noise);
  std::vector<LossParts> parts(batch.size());
  parallel_for(batch.size(), options.threads, [&](std::size_t b) {
    parts[b] = sample_loss(forward_sample(net, batch[b], noise[b], options.mode), batch[b], options);
  });
  LossParts mean;
  for (const auto& p : parts) {
    mean.total += p.total;
    mean.reconstruction += p.reconstruction;
    mean.kl += p.kl;
  }
  const double inv = 1.0 / static_cast<double>(batch.size());
  mean.total *= inv;
  mean.reconstruction *= inv;
  mean.kl *= inv;
  return mean;
}

BatchGradient backward(const VaeNetwork& net, std::span<const Tensor> batch, std::span<const SampleNoise> noise,
                       const GradientOptions& options) {
  check_batch(net, batch, noise);
  BatchGradient out{{}, net.zero_parameters()};
  const std::size_t n = batch.size();
  const auto workers = static_cast<std::size_t>(std::clamp<std::size_t>(options.threads, 1, n));

  // Per-sample gradients are reduced in sample order, in rounds of `workers`.
  std::vector<VaeParameters> slots(workers, net.zero_parameters());
  std::vector<LossParts> parts(n);
  for (std::size_t start = 0; start < n; start += workers) {
    const std::size_t count = std::min(workers, n - start);
    parallel_for(count, options.threads, [&](std::size_t s) {
      slots[s].fill(0.0);
      parts[start + s] = backward_sample(net, batch[start + s], noise[start + s], options, slots[s]);
    });
    for (std::size_t s = 0; s < count; ++s) out.grads.add(slots[s]);
  }
  for (const auto& p : parts) {
    out.loss.total += p.total;
    out.loss.reconstruction += p.reconstruction;
    out.loss.kl += p.kl;
  }
  const double inv = 1.0 / static_cast<double>(n);
  out.loss.total *= inv;
  out.loss.reconstruction *= inv;
  out.loss.kl *= inv;
  out.grads.scale(inv);
  return out;
}

}  // namespace fhm::nn
