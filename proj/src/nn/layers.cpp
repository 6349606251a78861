#include "fhm/nn/layers.hpp"

#include <algorithm>
#include <cmath>

#include "fhm/common/error.hpp"

namespace fhm::nn {

std::string_view to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::conv2d: return "conv2d";
    case LayerKind::transposed_conv2d: return "transposed_conv2d";
    case LayerKind::dense: return "dense";
    case LayerKind::flatten: return "flatten";
    case LayerKind::reshape: return "reshape";
    case LayerKind::dropout: return "dropout";
    case LayerKind::bilinear_upsample: return "bilinear_upsample";
  }
  return "?";
}

std::string_view to_string(Activation act) {
  switch (act) {
    case Activation::linear: return "linear";
    case Activation::relu: return "relu";
    case Activation::sigmoid: return "sigmoid";
  }
  return "?";
}

LayerSpec LayerSpec::conv2d(std::string name, int kernels, int kh, int kw, int sh, int sw, Activation act) {
  LayerSpec s;
  s.kind = LayerKind::conv2d;
  s.name = std::move(name);
  s.kernels = kernels;
  s.kernel_h = kh;
  s.kernel_w = kw;
  s.stride_h = sh;
  s.stride_w = sw;
  s.activation = act;
  return s;
}

LayerSpec LayerSpec::transposed_conv2d(std::string name, int kernels, int kh, int kw, int sh, int sw,
                                       Activation act) {
  LayerSpec s = conv2d(std::move(name), kernels, kh, kw, sh, sw, act);
  s.kind = LayerKind::transposed_conv2d;
  return s;
}

LayerSpec LayerSpec::dense(std::string name, int units, Activation act) {
  LayerSpec s;
  s.kind = LayerKind::dense;
  s.name = std::move(name);
  s.kernels = units;
  s.activation = act;
  return s;
}

LayerSpec LayerSpec::flatten(std::string name) {
  LayerSpec s;
  s.kind = LayerKind::flatten;
  s.name = std::move(name);
  return s;
}

LayerSpec LayerSpec::reshape(std::string name, Shape target) {
  LayerSpec s;
  s.kind = LayerKind::reshape;
  s.name = std::move(name);
  s.output_shape = std::move(target);
  return s;
}

LayerSpec LayerSpec::dropout(std::string name, double rate) {
  LayerSpec s;
  s.kind = LayerKind::dropout;
  s.name = std::move(name);
  s.dropout_rate = rate;
  return s;
}

LayerSpec LayerSpec::bilinear_upsample(std::string name, std::size_t out_h, std::size_t out_w) {
  LayerSpec s;
  s.kind = LayerKind::bilinear_upsample;
  s.name = std::move(name);
  s.output_shape = {out_h, out_w};
  return s;
}

bool LayerSpec::has_parameters() const {
  return kind == LayerKind::conv2d || kind == LayerKind::transposed_conv2d || kind == LayerKind::dense;
}

void LayerSpec::validate() const {
  const std::string who = "layer '" + name + "': ";
  if (has_parameters() && kernels < 1) throw ValidationError(who + "kernel/unit count must be >= 1");
  if (kind == LayerKind::conv2d || kind == LayerKind::transposed_conv2d) {
    if (kernel_h < 1 || kernel_w < 1) throw ValidationError(who + "kernel sizes must be >= 1");
    if (stride_h < 1 || stride_w < 1) throw ValidationError(who + "strides must be >= 1");
  }
  if (kind == LayerKind::dropout && !(dropout_rate >= 0.0 && dropout_rate < 1.0)) {
    throw ValidationError(who + "dropout rate must lie in [0, 1)");
  }
  if (kind == LayerKind::bilinear_upsample &&
      (output_shape.size() != 2 || output_shape[0] < 1 || output_shape[1] < 1)) {
    throw ValidationError(who + "up-sampling needs a positive {height, width} target");
  }
  if (kind == LayerKind::reshape && (output_shape.empty() || shape_size(output_shape) == 0)) {
    throw ValidationError(who + "reshape needs a non-empty target shape");
  }
}

namespace {

ShapeError shape_mismatch(const LayerSpec& spec, const std::string& expected, const Shape& got) {
  return ShapeError("layer '" + spec.name + "' (" + std::string(to_string(spec.kind)) + ") expects " + expected +
                    ", got input shape " + shape_to_string(got));
}

void require_rank(const LayerSpec& spec, const Shape& in, std::size_t rank) {
  if (in.size() != rank) {
    throw shape_mismatch(spec, rank == 1 ? "a rank-1 input" : "a [channels, height, width] input", in);
  }
}

double activate(Activation act, double v) {
  switch (act) {
    case Activation::relu: return v > 0.0 ? v : 0.0;
    case Activation::sigmoid:
      if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
      else {
        const double e = std::exp(v);
        return e / (1.0 + e);
      }
    case Activation::linear: return v;
  }
  return v;
}

// d(activation)/d(pre) expressed through the activated value.
double activation_slope(Activation act, double out) {
  switch (act) {
    case Activation::relu: return out > 0.0 ? 1.0 : 0.0;
    case Activation::sigmoid: return out * (1.0 - out);
    case Activation::linear: return 1.0;
  }
  return 1.0;
}

void apply_activation(Activation act, Tensor& t) {
  if (act == Activation::linear) return;
  for (double& v : t.values()) v = activate(act, v);
}

struct UpsampleAxis {
  std::vector<std::size_t> lo, hi;
  std::vector<double> frac;
};

UpsampleAxis upsample_axis(std::size_t in, std::size_t out) {
  UpsampleAxis a;
  a.lo.resize(out);
  a.hi.resize(out);
  a.frac.resize(out);
  for (std::size_t o = 0; o < out; ++o) {
    const double src =
        out > 1 ? static_cast<double>(o) * static_cast<double>(in - 1) / static_cast<double>(out - 1) : 0.0;
    auto lo = static_cast<std::size_t>(std::floor(src));
    lo = std::min(lo, in - 1);
    a.lo[o] = lo;
    a.hi[o] = std::min(lo + 1, in - 1);
    a.frac[o] = src - static_cast<double>(lo);
  }
  return a;
}

}  // namespace

Shape infer_output_shape(const LayerSpec& spec, const Shape& in) {
  spec.validate();
  switch (spec.kind) {
    case LayerKind::conv2d: {
      require_rank(spec, in, 3);
      if (in[1] < static_cast<std::size_t>(spec.kernel_h) || in[2] < static_cast<std::size_t>(spec.kernel_w)) {
        throw shape_mismatch(spec, "spatial extents of at least the kernel size", in);
      }
      return {static_cast<std::size_t>(spec.kernels), (in[1] - spec.kernel_h) / spec.stride_h + 1,
              (in[2] - spec.kernel_w) / spec.stride_w + 1};
    }
    case LayerKind::transposed_conv2d:
      require_rank(spec, in, 3);
      return {static_cast<std::size_t>(spec.kernels), (in[1] - 1) * spec.stride_h + spec.kernel_h,
              (in[2] - 1) * spec.stride_w + spec.kernel_w};
    case LayerKind::dense:
      require_rank(spec, in, 1);
      return {static_cast<std::size_t>(spec.kernels)};
    case LayerKind::flatten: return {shape_size(in)};
    case LayerKind::reshape:
      if (shape_size(in) != shape_size(spec.output_shape)) {
        throw shape_mismatch(spec, shape_to_string(spec.output_shape) + "-compatible element count", in);
      }
      return spec.output_shape;
    case LayerKind::dropout: return in;
    case LayerKind::bilinear_upsample:
      require_rank(spec, in, 3);
      return {in[0], spec.output_shape[0], spec.output_shape[1]};
  }
  return in;
}

std::pair<Shape, Shape> param_shapes(const LayerSpec& spec, const Shape& in) {
  infer_output_shape(spec, in);
  const auto k = static_cast<std::size_t>(spec.kernels);
  const auto kh = static_cast<std::size_t>(spec.kernel_h);
  const auto kw = static_cast<std::size_t>(spec.kernel_w);
  switch (spec.kind) {
    case LayerKind::conv2d: return {{k, in[0], kh, kw}, {k}};
    case LayerKind::transposed_conv2d: return {{in[0], k, kh, kw}, {k}};
    case LayerKind::dense: return {{k, in[0]}, {k}};
    default: return {};
  }
}

LayerParams make_params(const LayerSpec& spec, const Shape& in) {
  if (!spec.has_parameters()) {
    infer_output_shape(spec, in);
    return {};
  }
  auto [w, b] = param_shapes(spec, in);
  return {Tensor(std::move(w)), Tensor(std::move(b))};
}

void init_params(const LayerSpec& spec, const Shape& in, LayerParams& params, Rng& rng) {
  params = make_params(spec, in);
  if (!spec.has_parameters()) return;
  double fan_in = 0.0, fan_out = 0.0;
  const double area = static_cast<double>(spec.kernel_h) * spec.kernel_w;
  if (spec.kind == LayerKind::dense) {
    fan_in = static_cast<double>(in[0]);
    fan_out = spec.kernels;
  } else {
    fan_in = static_cast<double>(in[0]) * area;
    fan_out = spec.kernels * area;
  }
  const double limit = spec.activation == Activation::relu ? std::sqrt(6.0 / fan_in) : std::sqrt(6.0 / (fan_in + fan_out));
  for (double& w : params.weight.values()) w = rng.uniform(-limit, limit);
}

Tensor dropout_mask(const LayerSpec& spec, const Shape& shape, std::uint64_t seed) {
  Tensor mask(shape, 0.0);
  const double keep = 1.0 - spec.dropout_rate;
  Rng rng(seed);
  for (double& m : mask.values()) m = rng.uniform() < keep ? 1.0 / keep : 0.0;
  return mask;
}

Tensor forward_layer(const LayerSpec& spec, const Tensor& input, const LayerParams& params, Mode mode,
                     std::uint64_t dropout_seed) {
  const Shape out_shape = infer_output_shape(spec, input.shape());
  if (spec.has_parameters()) {
    const auto [wshape, bshape] = param_shapes(spec, input.shape());
    if (params.weight.shape() != wshape || params.bias.shape() != bshape) {
      throw ShapeError("layer '" + spec.name + "' parameters " + shape_to_string(params.weight.shape()) +
                       " do not fit input " + shape_to_string(input.shape()) + " (expected weight " +
                       shape_to_string(wshape) + ")");
    }
  }
  Tensor out(out_shape, 0.0);
  const double* x = input.data();
  double* y = out.data();

  switch (spec.kind) {
    case LayerKind::conv2d: {
      const std::size_t C = input.extent(0), H = input.extent(1), W = input.extent(2);
      const std::size_t O = out_shape[0], OH = out_shape[1], OW = out_shape[2];
      const std::size_t KH = spec.kernel_h, KW = spec.kernel_w, SH = spec.stride_h, SW = spec.stride_w;
      const double* w = params.weight.data();
      for (std::size_t o = 0; o < O; ++o) {
        double* yo = y + o * OH * OW;
        std::fill(yo, yo + OH * OW, params.bias[o]);
        for (std::size_t c = 0; c < C; ++c) {
          const double* xc = x + c * H * W;
          for (std::size_t ky = 0; ky < KH; ++ky) {
            for (std::size_t kx = 0; kx < KW; ++kx) {
              const double wv = w[((o * C + c) * KH + ky) * KW + kx];
              for (std::size_t oy = 0; oy < OH; ++oy) {
                const double* row = xc + (oy * SH + ky) * W + kx;
                double* yrow = yo + oy * OW;
                for (std::size_t ox = 0; ox < OW; ++ox) yrow[ox] += wv * row[ox * SW];
              }
            }
          }
        }
      }
      break;
    }
    case LayerKind::transposed_conv2d: {
      const std::size_t C = input.extent(0), H = input.extent(1), W = input.extent(2);
      const std::size_t O = out_shape[0], OH = out_shape[1], OW = out_shape[2];
      const std::size_t KH = spec.kernel_h, KW = spec.kernel_w, SH = spec.stride_h, SW = spec.stride_w;
      const double* w = params.weight.data();
      for (std::size_t o = 0; o < O; ++o) std::fill(y + o * OH * OW, y + (o + 1) * OH * OW, params.bias[o]);
      for (std::size_t c = 0; c < C; ++c) {
        const double* xc = x + c * H * W;
        for (std::size_t o = 0; o < O; ++o) {
          double* yo = y + o * OH * OW;
          for (std::size_t ky = 0; ky < KH; ++ky) {
            for (std::size_t kx = 0; kx < KW; ++kx) {
              const double wv = w[((c * O + o) * KH + ky) * KW + kx];
              for (std::size_t iy = 0; iy < H; ++iy) {
                const double* xrow = xc + iy * W;
                double* yrow = yo + (iy * SH + ky) * OW + kx;
                for (std::size_t ix = 0; ix < W; ++ix) yrow[ix * SW] += wv * xrow[ix];
              }
            }
          }
        }
      }
      break;
    }
    case LayerKind::dense: {
      const std::size_t N = input.size(), M = out_shape[0];
      const double* w = params.weight.data();
      for (std::size_t m = 0; m < M; ++m) {
        const double* wr = w + m * N;
        double acc = params.bias[m];
        for (std::size_t n = 0; n < N; ++n) acc += wr[n] * x[n];
        y[m] = acc;
      }
      break;
    }
    case LayerKind::flatten:
    case LayerKind::reshape: std::copy(x, x + input.size(), y); break;
    case LayerKind::dropout:
      if (mode == Mode::eval || spec.dropout_rate == 0.0) {
        std::copy(x, x + input.size(), y);
      } else {
        const Tensor mask = dropout_mask(spec, input.shape(), dropout_seed);
        for (std::size_t i = 0; i < input.size(); ++i) y[i] = x[i] * mask[i];
      }
      break;
    case LayerKind::bilinear_upsample: {
      const std::size_t C = input.extent(0), H = input.extent(1), W = input.extent(2);
      const std::size_t OH = out_shape[1], OW = out_shape[2];
      const auto ay = upsample_axis(H, OH);
      const auto ax = upsample_axis(W, OW);
      for (std::size_t c = 0; c < C; ++c) {
        const double* xc = x + c * H * W;
        double* yc = y + c * OH * OW;
        for (std::size_t oy = 0; oy < OH; ++oy) {
          const double fy = ay.frac[oy];
          const double* r0 = xc + ay.lo[oy] * W;
          const double* r1 = xc + ay.hi[oy] * W;
          for (std::size_t ox = 0; ox < OW; ++ox) {
            const double fx = ax.frac[ox];
            const double top = (1.0 - fx) * r0[ax.lo[ox]] + fx * r0[ax.hi[ox]];
            const double bot = (1.0 - fx) * r1[ax.lo[ox]] + fx * r1[ax.hi[ox]];
            yc[oy * OW + ox] = (1.0 - fy) * top + fy * bot;
          }
        }
      }
      break;
    }
  }
  apply_activation(spec.activation, out);
  return out;
}

Tensor backward_layer(const LayerSpec& spec, const Tensor& input, const Tensor& output, const Tensor& grad_output,
                      const LayerParams& params, LayerParams& grads, Mode mode, std::uint64_t dropout_seed,
                      bool grad_is_preactivation) {
  if (grad_output.shape() != output.shape()) {
    throw ShapeError("layer '" + spec.name + "' gradient shape " + shape_to_string(grad_output.shape()) +
                     " does not match output " + shape_to_string(output.shape()));
  }
  if (spec.has_parameters() && grads.weight.shape() != params.weight.shape()) {
    grads = make_params(spec, input.shape());
  }
  // gradient with respect to the pre-activation
  Tensor g = grad_output;
  if (!grad_is_preactivation && spec.activation != Activation::linear) {
    for (std::size_t i = 0; i < g.size(); ++i) g[i] *= activation_slope(spec.activation, output[i]);
  }

  Tensor grad_in(input.shape(), 0.0);
  const double* x = input.data();
  const double* gy = g.data();
  double* gx = grad_in.data();

  switch (spec.kind) {
    case LayerKind::conv2d: {
      const std::size_t C = input.extent(0), H = input.extent(1), W = input.extent(2);
      const std::size_t O = output.extent(0), OH = output.extent(1), OW = output.extent(2);
      const std::size_t KH = spec.kernel_h, KW = spec.kernel_w, SH = spec.stride_h, SW = spec.stride_w;
      const double* w = params.weight.data();
      double* dw = grads.weight.data();
      for (std::size_t o = 0; o < O; ++o) {
        const double* go = gy + o * OH * OW;
        double bsum = 0.0;
        for (std::size_t i = 0; i < OH * OW; ++i) bsum += go[i];
        grads.bias[o] += bsum;
        for (std::size_t c = 0; c < C; ++c) {
          const double* xc = x + c * H * W;
          double* gxc = gx + c * H * W;
          for (std::size_t ky = 0; ky < KH; ++ky) {
            for (std::size_t kx = 0; kx < KW; ++kx) {
              const std::size_t widx = ((o * C + c) * KH + ky) * KW + kx;
              const double wv = w[widx];
              double acc = 0.0;
              for (std::size_t oy = 0; oy < OH; ++oy) {
                const std::size_t base = (oy * SH + ky) * W + kx;
                const double* grow = go + oy * OW;
                const double* xrow = xc + base;
                double* gxrow = gxc + base;
                for (std::size_t ox = 0; ox < OW; ++ox) {
                  acc += grow[ox] * xrow[ox * SW];
                  gxrow[ox * SW] += wv * grow[ox];
                }
              }
              dw[widx] += acc;
            }
          }
        }
      }
      break;
    }
    case LayerKind::transposed_conv2d: {
      const std::size_t C = input.extent(0), H = input.extent(1), W = input.extent(2);
      const std::size_t O = output.extent(0), OH = output.extent(1), OW = output.extent(2);
      const std::size_t KH = spec.kernel_h, KW = spec.kernel_w, SH = spec.stride_h, SW = spec.stride_w;
      const double* w = params.weight.data();
      double* dw = grads.weight.data();
      for (std::size_t o = 0; o < O; ++o) {
        const double* go = gy + o * OH * OW;
        double bsum = 0.0;
        for (std::size_t i = 0; i < OH * OW; ++i) bsum += go[i];
        grads.bias[o] += bsum;
      }
      for (std::size_t c = 0; c < C; ++c) {
        const double* xc = x + c * H * W;
        double* gxc = gx + c * H * W;
        for (std::size_t o = 0; o < O; ++o) {
          const double* go = gy + o * OH * OW;
          for (std::size_t ky = 0; ky < KH; ++ky) {
            for (std::size_t kx = 0; kx < KW; ++kx) {
              const std::size_t widx = ((c * O + o) * KH + ky) * KW + kx;
              const double wv = w[widx];
              double acc = 0.0;
              for (std::size_t iy = 0; iy < H; ++iy) {
                const double* xrow = xc + iy * W;
                double* gxrow = gxc + iy * W;
                const double* grow = go + (iy * SH + ky) * OW + kx;
                for (std::size_t ix = 0; ix < W; ++ix) {
                  acc += xrow[ix] * grow[ix * SW];
                  gxrow[ix] += wv * grow[ix * SW];
                }
              }
              dw[widx] += acc;
            }
          }
        }
      }
      break;
    }
    case LayerKind::dense: {
      const std::size_t N = input.size(), M = output.size();
      const double* w = params.weight.data();
      double* dw = grads.weight.data();
      for (std::size_t m = 0; m < M; ++m) {
        const double gm = gy[m];
        grads.bias[m] += gm;
        if (gm == 0.0) continue;
        const double* wr = w + m * N;
        double* dwr = dw + m * N;
        for (std::size_t n = 0; n < N; ++n) {
          dwr[n] += gm * x[n];
          gx[n] += gm * wr[n];
        }
      }
      break;
    }
    case LayerKind::flatten:
    case LayerKind::reshape: std::copy(gy, gy + g.size(), gx); break;
    case LayerKind::dropout:
      if (mode == Mode::eval || spec.dropout_rate == 0.0) {
        std::copy(gy, gy + g.size(), gx);
      } else {
        const Tensor mask = dropout_mask(spec, input.shape(), dropout_seed);
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] = gy[i] * mask[i];
      }
      break;
    case LayerKind::bilinear_upsample: {
      const std::size_t C = input.extent(0), H = input.extent(1), W = input.extent(2);
      const std::size_t OH = output.extent(1), OW = output.extent(2);
      const auto ay = upsample_axis(H, OH);
      const auto ax = upsample_axis(W, OW);
      for (std::size_t c = 0; c < C; ++c) {
        double* gxc = gx + c * H * W;
        const double* gc = gy + c * OH * OW;
        for (std::size_t oy = 0; oy < OH; ++oy) {
          const double fy = ay.frac[oy];
          double* r0 = gxc + ay.lo[oy] * W;
          double* r1 = gxc + ay.hi[oy] * W;
          for (std::size_t ox = 0; ox < OW; ++ox) {
            const double fx = ax.frac[ox];
            const double v = gc[oy * OW + ox];
            r0[ax.lo[ox]] += (1.0 - fy) * (1.0 - fx) * v;
            r0[ax.hi[ox]] += (1.0 - fy) * fx * v;
            r1[ax.lo[ox]] += fy * (1.0 - fx) * v;
            r1[ax.hi[ox]] += fy * fx * v;
          }
        }
      }
      break;
    }
  }
  return grad_in;
}

}  // namespace fhm::nn
