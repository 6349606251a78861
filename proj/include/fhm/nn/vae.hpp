#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "fhm/geomodel/facies_grid.hpp"
#include "fhm/nn/layers.hpp"
#include "fhm/nn/tensor.hpp"

namespace fhm::nn {

/// One encoder convolution; the decoder mirrors it with a transposed
/// convolution of the same kernel count, size and stride.
struct ConvStage {
  int kernels = 16;
  int kernel_h = 3;
  int kernel_w = 3;
  int stride_h = 1;
  int stride_w = 1;

  friend bool operator==(const ConvStage&, const ConvStage&) = default;
};

/// Architecture of the convolutional VAE.
///
/// Encoder: conv stages (ReLU) -> flatten -> dense_units (ReLU, dropout after
/// the first) -> parallel linear mean / log-variance heads of size n_z.
/// Decoder: dense_units reversed (ReLU, dropout after the first) -> dense to
/// the flattened conv shape -> reshape -> mirrored transposed convs (ReLU)
/// -> bilinear up-sampling to (ny + f - 1, nx + f - 1) -> f x f conv with k
/// sigmoid kernels, which lands exactly on the input grid.
struct NetworkConfig {
  int nx = 32;
  int ny = 32;
  int k = 2;
  int n_z = 50;
  std::vector<ConvStage> conv{{16, 2, 2, 2, 2}, {16, 3, 3, 2, 2}, {8, 3, 3, 1, 1}};
  std::vector<int> dense_units{256};
  double dropout_rate = 0.1;
  int output_kernel = 3;

  /// Reduced-width layout used for CPU runs.
  static NetworkConfig table1_desk(int nx, int ny, int k = 2);
  /// Full-width layout: conv 32/32/16, dense 1024, n_z = 100.
  static NetworkConfig table1(int nx, int ny, int k = 2);

  void validate() const;

  friend bool operator==(const NetworkConfig&, const NetworkConfig&) = default;
};

/// Weights and biases of every layer. Gradients share this layout.
struct VaeParameters {
  std::vector<LayerParams> encoder;
  LayerParams mean_head;
  LayerParams logvar_head;
  std::vector<LayerParams> decoder;

  /// Visits every tensor in a fixed order with a stable name such as
  /// "encoder.0.weight" or "mean_head.bias".
  void for_each(const std::function<void(const std::string&, Tensor&)>& fn);
  void for_each(const std::function<void(const std::string&, const Tensor&)>& fn) const;

  std::size_t parameter_count() const;
  void fill(double v);
  /// this += other (same layout).
  void add(const VaeParameters& other);
  void scale(double factor);
};

class VaeNetwork {
 public:
  /// Builds the topology with zero parameters. Checks the full shape algebra
  /// (decoder output == input shape) here, not at the first batch.
  explicit VaeNetwork(NetworkConfig config);

  /// Same topology with He/Glorot-uniform weights drawn from `seed`.
  static VaeNetwork initialized(NetworkConfig config, std::uint64_t seed);

  const NetworkConfig& config() const { return config_; }
  int n_z() const { return config_.n_z; }
  /// {k, ny, nx}
  Shape input_shape() const;

  const std::vector<LayerSpec>& encoder_layers() const { return encoder_; }
  const std::vector<LayerSpec>& decoder_layers() const { return decoder_; }
  const LayerSpec& mean_head() const { return mean_head_; }
  const LayerSpec& logvar_head() const { return logvar_head_; }
  /// encoder_shapes()[i] is the input of encoder layer i; the last entry is
  /// the trunk output feeding both heads. Same convention for the decoder.
  const std::vector<Shape>& encoder_shapes() const { return encoder_shapes_; }
  const std::vector<Shape>& decoder_shapes() const { return decoder_shapes_; }

  VaeParameters& params() { return params_; }
  const VaeParameters& params() const { return params_; }
  /// Zero-filled parameter set with this network's layout.
  VaeParameters zero_parameters() const;

 private:
  NetworkConfig config_;
  std::vector<LayerSpec> encoder_;
  LayerSpec mean_head_;
  LayerSpec logvar_head_;
  std::vector<LayerSpec> decoder_;
  std::vector<Shape> encoder_shapes_;
  std::vector<Shape> decoder_shapes_;
  VaeParameters params_;
};

Tensor image_to_tensor(const geomodel::OneHotImage& image);
geomodel::OneHotImage tensor_to_image(const Tensor& t);

struct Encoding {
  Tensor mu;
  Tensor logvar;
};

/// Eval-mode encoder pass.
Encoding encode(const VaeNetwork& net, const geomodel::OneHotImage& x);
Encoding encode(const VaeNetwork& net, const Tensor& x);

/// Batched eval-mode encode; results are [batch, n_z].
Encoding encode_batch(const VaeNetwork& net, std::span<const geomodel::OneHotImage> batch, int threads = 1);

/// z_i = mu_i + exp(logvar_i / 2) * eps_i
Tensor reparameterize(const Tensor& mu, const Tensor& logvar, const Tensor& eps);

/// Eval-mode decoder pass; values in (0, 1).
geomodel::OneHotImage decode(const VaeNetwork& net, const Tensor& z);
Tensor decode_tensor(const VaeNetwork& net, const Tensor& z);

/// from_soft(decode(net, z))
geomodel::FaciesGrid decode_facies(const VaeNetwork& net, const Tensor& z);

/// Per-sample randomness for one training step: the reparameterization draw
/// and the seed from which the sample's dropout masks are derived.
struct SampleNoise {
  Tensor eps;
  std::uint64_t dropout_seed = 0;
};

struct GradientOptions {
  double lambda = 1.0;
  /// Drop the reconstruction term (isolates the KL path).
  bool include_reconstruction = true;
  Mode mode = Mode::train;
  int threads = 1;
};

struct LossParts {
  double total = 0.0;
  double reconstruction = 0.0;
  double kl = 0.0;
};

struct BatchGradient {
  LossParts loss;  // batch means
  VaeParameters grads;
};

/// Mean loss over the batch with the noise held fixed.
LossParts batch_loss(const VaeNetwork& net, std::span<const Tensor> batch, std::span<const SampleNoise> noise,
                     const GradientOptions& options);

/// Exact reverse-mode gradient of batch_loss with respect to every
/// parameter. Per-sample gradients are reduced in sample order, so the result
/// does not depend on the thread count. Throws NumericalError naming the
/// layer when a non-finite gradient appears.
BatchGradient backward(const VaeNetwork& net, std::span<const Tensor> batch, std::span<const SampleNoise> noise,
                       const GradientOptions& options);

}  // namespace fhm::nn
