#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <utility>

#include "fhm/common/rng.hpp"
#include "fhm/nn/tensor.hpp"

namespace fhm::nn {

enum class LayerKind { conv2d, transposed_conv2d, dense, flatten, reshape, dropout, bilinear_upsample };
enum class Activation { linear, relu, sigmoid };
enum class Mode { train, eval };

std::string_view to_string(LayerKind kind);
std::string_view to_string(Activation act);

/// One layer of the fixed VAE topology.
///
/// Feature maps are [channels, height, width]; dense layers take rank-1
/// inputs. Convolutions use valid padding, so a conv2d maps extent n to
/// floor((n - k) / s) + 1 and a transposed conv maps n to (n - 1) * s + k.
/// Bilinear up-sampling uses corner-aligned interpolation.
struct LayerSpec {
  LayerKind kind = LayerKind::dense;
  std::string name;
  int kernels = 0;  // conv output channels / dense units
  int kernel_h = 1;
  int kernel_w = 1;
  int stride_h = 1;
  int stride_w = 1;
  Activation activation = Activation::linear;
  double dropout_rate = 0.0;
  Shape output_shape;  // reshape target, or {h, w} for up-sampling

  static LayerSpec conv2d(std::string name, int kernels, int kh, int kw, int sh, int sw, Activation act);
  static LayerSpec transposed_conv2d(std::string name, int kernels, int kh, int kw, int sh, int sw, Activation act);
  static LayerSpec dense(std::string name, int units, Activation act);
  static LayerSpec flatten(std::string name);
  static LayerSpec reshape(std::string name, Shape target);
  static LayerSpec dropout(std::string name, double rate);
  static LayerSpec bilinear_upsample(std::string name, std::size_t out_h, std::size_t out_w);

  bool has_parameters() const;
  void validate() const;

  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

/// Weight and bias of one layer; both empty for parameter-free kinds.
/// conv2d weight: [out, in, kh, kw]; transposed_conv2d: [in, out, kh, kw];
/// dense: [out, in].
struct LayerParams {
  Tensor weight;
  Tensor bias;

  void fill(double v) {
    weight.fill(v);
    bias.fill(v);
  }
};

/// Output extents for a given input shape; throws ShapeError when they are
/// incompatible.
Shape infer_output_shape(const LayerSpec& spec, const Shape& input);

/// Weight and bias extents for `input`; empty shapes for parameter-free kinds.
std::pair<Shape, Shape> param_shapes(const LayerSpec& spec, const Shape& input);

/// Zero-filled parameters shaped for `input`.
LayerParams make_params(const LayerSpec& spec, const Shape& input);

/// He-uniform weights for ReLU layers, Glorot-uniform otherwise; zero bias.
void init_params(const LayerSpec& spec, const Shape& input, LayerParams& params, Rng& rng);

/// Keep-mask for a dropout layer: entries are 0 or 1/(1 - rate), drawn from
/// `seed`. Identical seeds give identical masks.
Tensor dropout_mask(const LayerSpec& spec, const Shape& shape, std::uint64_t seed);

/// Applies one layer. Dropout is the identity in eval mode; in train mode it
/// uses dropout_mask(spec, input.shape(), dropout_seed).
Tensor forward_layer(const LayerSpec& spec, const Tensor& input, const LayerParams& params, Mode mode,
                     std::uint64_t dropout_seed = 0);

/// Reverse-mode step through one layer. `output` is the value forward_layer
/// returned. Parameter gradients are accumulated into `grads`; the gradient
/// with respect to `input` is returned. When `grad_is_preactivation` is set,
/// `grad_output` is already taken with respect to the pre-activation.
Tensor backward_layer(const LayerSpec& spec, const Tensor& input, const Tensor& output, const Tensor& grad_output,
                      const LayerParams& params, LayerParams& grads, Mode mode, std::uint64_t dropout_seed = 0,
                      bool grad_is_preactivation = false);

}  // namespace fhm::nn
