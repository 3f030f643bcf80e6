// Copyright 2026 The Sideways Authors
// SPDX-License-Identifier: Apache-2.0

#include "sideways/layers.hpp"

#include <algorithm>
#include <cmath>

#include "sideways/errors.hpp"

namespace sideways {

namespace {

inline int64_t idx3(int64_t y, int64_t x, int64_t c, int64_t w, int64_t ch) {
  return (y * w + x) * ch + c;
}

void require_rank3(const Tensor& t, const char* op) {
  if (t.rank() != 3) {
    throw ShapeError(std::string(op) + ": expected rank-3 HWC input, got " +
                     shape_to_string(t.shape()));
  }
}

// Geometry of a zero-padded "same" convolution.  Output covers
// ceil(H / stride) positions; total padding is split with the smaller
// half leading, the larger trailing.
struct ConvGeom {
  int64_t h, w, c, kh, kw, cout, stride;
  int64_t hout, wout, pad_top, pad_left;
};

ConvGeom conv_geom(const LayerSpec& s, int64_t h, int64_t w) {
  ConvGeom g;
  g.h = h;
  g.w = w;
  g.c = s.in_channels;
  g.kh = s.kernel_h;
  g.kw = s.kernel_w;
  g.cout = s.out_channels;
  g.stride = s.stride;
  g.hout = (h + s.stride - 1) / s.stride;
  g.wout = (w + s.stride - 1) / s.stride;
  const int64_t pad_h = std::max<int64_t>((g.hout - 1) * s.stride + g.kh - h, 0);
  const int64_t pad_w = std::max<int64_t>((g.wout - 1) * s.stride + g.kw - w, 0);
  g.pad_top = pad_h / 2;
  g.pad_left = pad_w / 2;
  return g;
}

// Both kernels keep the output-channel index innermost: weights are laid
// out with oc contiguous, so the hot loops run unit-stride and vectorize.
void conv_forward(const ConvGeom& g, const double* x, const double* wgt,
                  const double* bias, double* y) {
  for (int64_t oy = 0; oy < g.hout; ++oy) {
    for (int64_t ox = 0; ox < g.wout; ++ox) {
      double* yrow = y + idx3(oy, ox, 0, g.wout, g.cout);
      for (int64_t oc = 0; oc < g.cout; ++oc) yrow[oc] = bias[oc];
      for (int64_t ky = 0; ky < g.kh; ++ky) {
        const int64_t iy = oy * g.stride + ky - g.pad_top;
        if (iy < 0 || iy >= g.h) continue;
        for (int64_t kx = 0; kx < g.kw; ++kx) {
          const int64_t ix = ox * g.stride + kx - g.pad_left;
          if (ix < 0 || ix >= g.w) continue;
          const double* xrow = x + idx3(iy, ix, 0, g.w, g.c);
          const double* wrow = wgt + (ky * g.kw + kx) * g.c * g.cout;
          for (int64_t ic = 0; ic < g.c; ++ic) {
            const double xv = xrow[ic];
            const double* wv = wrow + ic * g.cout;
            for (int64_t oc = 0; oc < g.cout; ++oc) yrow[oc] += xv * wv[oc];
          }
        }
      }
    }
  }
}

void conv_backward(const ConvGeom& g, const double* x, const double* wgt,
                   const double* cot, double* dx, double* dw, double* db) {
  for (int64_t oy = 0; oy < g.hout; ++oy) {
    for (int64_t ox = 0; ox < g.wout; ++ox) {
      const double* crow = cot + idx3(oy, ox, 0, g.wout, g.cout);
      for (int64_t oc = 0; oc < g.cout; ++oc) db[oc] += crow[oc];
      for (int64_t ky = 0; ky < g.kh; ++ky) {
        const int64_t iy = oy * g.stride + ky - g.pad_top;
        if (iy < 0 || iy >= g.h) continue;
        for (int64_t kx = 0; kx < g.kw; ++kx) {
          const int64_t ix = ox * g.stride + kx - g.pad_left;
          if (ix < 0 || ix >= g.w) continue;
          const double* xrow = x + idx3(iy, ix, 0, g.w, g.c);
          double* dxrow = dx + idx3(iy, ix, 0, g.w, g.c);
          const int64_t base = (ky * g.kw + kx) * g.c * g.cout;
          for (int64_t ic = 0; ic < g.c; ++ic) {
            const double xv = xrow[ic];
            const double* wv = wgt + base + ic * g.cout;
            double* dwv = dw + base + ic * g.cout;
            double acc = 0.0;
            for (int64_t oc = 0; oc < g.cout; ++oc) {
              acc += wv[oc] * crow[oc];
              dwv[oc] += xv * crow[oc];
            }
            dxrow[ic] += acc;
          }
        }
      }
    }
  }
}

LayerOutput maxpool_hwc(const Tensor& input, int64_t window, int64_t stride) {
  require_rank3(input, "maxpool2d");
  if (window <= 0 || stride <= 0) throw ConfigError("maxpool2d: window and stride must be positive");
  const int64_t h = input.dim(0), w = input.dim(1), c = input.dim(2);
  if (window > h || window > w) {
    throw ShapeError("maxpool2d: window " + std::to_string(window) +
                     " exceeds input " + shape_to_string(input.shape()));
  }
  const int64_t hout = (h - window) / stride + 1;
  const int64_t wout = (w - window) / stride + 1;
  Tensor out({hout, wout, c}, input.precision());
  // One winner index per output cell; ties resolve to the lowest flat
  // input index because the scan uses strict greater-than.
  std::vector<int64_t> argmax(static_cast<size_t>(hout * wout * c));
  for (int64_t oy = 0; oy < hout; ++oy) {
    for (int64_t ox = 0; ox < wout; ++ox) {
      for (int64_t ch = 0; ch < c; ++ch) {
        int64_t best = idx3(oy * stride, ox * stride, ch, w, c);
        double best_v = input.at(best);
        for (int64_t dy = 0; dy < window; ++dy) {
          for (int64_t dx = 0; dx < window; ++dx) {
            const int64_t i = idx3(oy * stride + dy, ox * stride + dx, ch, w, c);
            if (input.at(i) > best_v) {
              best_v = input.at(i);
              best = i;
            }
          }
        }
        out.at(idx3(oy, ox, ch, wout, c)) = best_v;
        argmax[static_cast<size_t>(idx3(oy, ox, ch, wout, c))] = best;
      }
    }
  }
  out.quantize();
  const auto in_shape = input.shape();
  const auto out_shape = out.shape();
  const Precision prec = input.precision();
  LayerOutput res;
  res.output = std::move(out);
  res.cached_scalars = static_cast<int64_t>(argmax.size());
  res.pullback = [argmax = std::move(argmax), in_shape, out_shape,
                  prec](const Tensor& cot) -> VjpResult {
    if (cot.shape() != out_shape) {
      throw ShapeError("maxpool2d pullback: cotangent shape " +
                       shape_to_string(cot.shape()) + " vs output " +
                       shape_to_string(out_shape));
    }
    Tensor dx(in_shape, prec);
    for (size_t i = 0; i < argmax.size(); ++i) {
      dx.at(argmax[i]) += cot.at(static_cast<int64_t>(i));
    }
    dx.quantize();
    return {std::move(dx), {}};
  };
  return res;
}

LayerOutput tile_hwc(const Tensor& input, int64_t factor) {
  require_rank3(input, "tile_upsample");
  if (factor <= 0) throw ConfigError("tile_upsample: factor must be positive");
  const int64_t h = input.dim(0), w = input.dim(1), c = input.dim(2);
  const int64_t hout = h * factor, wout = w * factor;
  Tensor out({hout, wout, c}, input.precision());
  for (int64_t oy = 0; oy < hout; ++oy) {
    for (int64_t ox = 0; ox < wout; ++ox) {
      for (int64_t ch = 0; ch < c; ++ch) {
        out.at(idx3(oy, ox, ch, wout, c)) =
            input.at(idx3(oy / factor, ox / factor, ch, w, c));
      }
    }
  }
  out.quantize();
  const auto in_shape = input.shape();
  const auto out_shape = out.shape();
  const Precision prec = input.precision();
  LayerOutput res;
  res.output = std::move(out);
  res.cached_scalars = 0;  // adjoint needs only the geometry
  res.pullback = [factor, in_shape, out_shape, prec](const Tensor& cot) -> VjpResult {
    if (cot.shape() != out_shape) {
      throw ShapeError("tile_upsample pullback: cotangent shape " +
                       shape_to_string(cot.shape()) + " vs output " +
                       shape_to_string(out_shape));
    }
    Tensor dx(in_shape, prec);
    const int64_t h = in_shape[0], w = in_shape[1], c = in_shape[2];
    const int64_t wout = w * factor;
    // Each input cell absorbs its factor^2 replicas in scan order.
    for (int64_t oy = 0; oy < h * factor; ++oy) {
      for (int64_t ox = 0; ox < wout; ++ox) {
        for (int64_t ch = 0; ch < c; ++ch) {
          dx.at(idx3(oy / factor, ox / factor, ch, w, c)) +=
              cot.at(idx3(oy, ox, ch, wout, c));
        }
      }
    }
    dx.quantize();
    return {std::move(dx), {}};
  };
  return res;
}

LayerOutput conv_apply(const LayerSpec& spec, const ParamSet& params,
                       const Tensor& input) {
  if (params.size() != 2) throw Error("conv2d: expected weight and bias parameters");
  const Tensor& weight = params[0];
  const Tensor& bias = params[1];
  const std::vector<int64_t> wshape = {spec.kernel_h, spec.kernel_w,
                                       spec.in_channels, spec.out_channels};
  if (weight.shape() != wshape) {
    throw ShapeError("conv2d: weight shape " + shape_to_string(weight.shape()) +
                     " does not match spec " + shape_to_string(wshape));
  }
  if (bias.shape() != std::vector<int64_t>{spec.out_channels}) {
    throw ShapeError("conv2d: bias shape " + shape_to_string(bias.shape()));
  }

  const bool batched = input.rank() == 4;
  if (!batched) require_rank3(input, "conv2d");
  const int64_t n = batched ? input.dim(0) : 1;
  const int64_t h = input.dim(batched ? 1 : 0);
  const int64_t w = input.dim(batched ? 2 : 1);
  const int64_t cin = input.dim(batched ? 3 : 2);
  if (cin != spec.in_channels) {
    throw ShapeError("conv2d: input has " + std::to_string(cin) +
                     " channels, spec expects " + std::to_string(spec.in_channels));
  }
  const ConvGeom g = conv_geom(spec, h, w);
  const int64_t in_sz = h * w * cin;
  const int64_t out_sz = g.hout * g.wout * g.cout;

  std::vector<int64_t> out_shape = batched
      ? std::vector<int64_t>{n, g.hout, g.wout, g.cout}
      : std::vector<int64_t>{g.hout, g.wout, g.cout};
  Tensor out(out_shape, input.precision());
  for (int64_t f = 0; f < n; ++f) {
    conv_forward(g, input.data() + f * in_sz, weight.data(), bias.data(),
                 out.data() + f * out_sz);
  }
  out.quantize();

  LayerOutput res;
  res.output = std::move(out);
  res.cached_scalars = input.numel() + weight.numel();
  res.pullback = [g, n, in_sz, out_sz, input, weight, out_shape,
                  batched](const Tensor& cot) -> VjpResult {
    if (cot.shape() != out_shape) {
      throw ShapeError("conv2d pullback: cotangent shape " +
                       shape_to_string(cot.shape()) + " vs output " +
                       shape_to_string(out_shape));
    }
    Tensor dx(input.shape(), input.precision());
    Tensor dw(weight.shape(), weight.precision());
    Tensor db({g.cout}, weight.precision());
    for (int64_t f = 0; f < n; ++f) {
      conv_backward(g, input.data() + f * in_sz, weight.data(),
                    cot.data() + f * out_sz, dx.data() + f * in_sz, dw.data(),
                    db.data());
    }
    dx.quantize();
    dw.quantize();
    db.quantize();
    VjpResult r;
    r.input_grad = std::move(dx);
    r.param_grads.names = {"weight", "bias"};
    r.param_grads.tensors = {std::move(dw), std::move(db)};
    return r;
  };
  return res;
}

LayerOutput affine_apply(const LayerSpec& spec, const ParamSet& params,
                         const Tensor& input) {
  if (params.size() != 2) throw Error("affine: expected weight and bias parameters");
  const Tensor& weight = params[0];
  const Tensor& bias = params[1];
  if (weight.shape() != std::vector<int64_t>{spec.out_features, spec.in_features}) {
    throw ShapeError("affine: weight shape " + shape_to_string(weight.shape()));
  }
  if (input.numel() != spec.in_features) {
    throw ShapeError("affine: input " + shape_to_string(input.shape()) + " has " +
                     std::to_string(input.numel()) + " elements, spec expects " +
                     std::to_string(spec.in_features));
  }
  const int64_t in = spec.in_features, outn = spec.out_features;
  Tensor out({outn}, input.precision());
  for (int64_t o = 0; o < outn; ++o) {
    double acc = bias.at(o);
    for (int64_t i = 0; i < in; ++i) acc += weight.at(o * in + i) * input.at(i);
    out.at(o) = acc;
  }
  out.quantize();

  LayerOutput res;
  res.output = std::move(out);
  res.cached_scalars = input.numel() + weight.numel();
  res.pullback = [input, weight, in, outn](const Tensor& cot) -> VjpResult {
    if (cot.numel() != outn) {
      throw ShapeError("affine pullback: cotangent " + shape_to_string(cot.shape()));
    }
    Tensor dx(input.shape(), input.precision());
    Tensor dw(weight.shape(), weight.precision());
    Tensor db({outn}, weight.precision());
    for (int64_t o = 0; o < outn; ++o) {
      const double go = cot.at(o);
      db.at(o) = go;
      for (int64_t i = 0; i < in; ++i) {
        dx.at(i) += weight.at(o * in + i) * go;
        dw.at(o * in + i) = input.at(i) * go;
      }
    }
    dx.quantize();
    dw.quantize();
    db.quantize();
    VjpResult r;
    r.input_grad = std::move(dx);
    r.param_grads.names = {"weight", "bias"};
    r.param_grads.tensors = {std::move(dw), std::move(db)};
    return r;
  };
  return res;
}

LayerOutput relu_apply(const Tensor& input) {
  Tensor out = input;
  for (int64_t i = 0; i < out.numel(); ++i) {
    if (out.at(i) < 0.0) out.at(i) = 0.0;
  }
  out.quantize();
  LayerOutput res;
  res.output = std::move(out);
  res.cached_scalars = input.numel();
  res.pullback = [input](const Tensor& cot) -> VjpResult {
    if (cot.shape() != input.shape()) {
      throw ShapeError("relu pullback: cotangent " + shape_to_string(cot.shape()) +
                       " vs input " + shape_to_string(input.shape()));
    }
    Tensor dx(input.shape(), input.precision());
    for (int64_t i = 0; i < input.numel(); ++i) {
      dx.at(i) = input.at(i) > 0.0 ? cot.at(i) : 0.0;
    }
    dx.quantize();
    return {std::move(dx), {}};
  };
  return res;
}

LayerOutput space_to_depth_apply(const LayerSpec& spec, const Tensor& input) {
  require_rank3(input, "space_to_depth");
  const int64_t b = spec.block;
  if (b <= 0) throw ConfigError("space_to_depth: block must be positive");
  const int64_t h = input.dim(0), w = input.dim(1), c = input.dim(2);
  if (h % b != 0 || w % b != 0) {
    throw ShapeError("space_to_depth: input " + shape_to_string(input.shape()) +
                     " not divisible by block " + std::to_string(b));
  }
  const int64_t hout = h / b, wout = w / b, cout = b * b * c;
  Tensor out({hout, wout, cout}, input.precision());
  for (int64_t oy = 0; oy < hout; ++oy) {
    for (int64_t ox = 0; ox < wout; ++ox) {
      for (int64_t dy = 0; dy < b; ++dy) {
        for (int64_t dx = 0; dx < b; ++dx) {
          for (int64_t ch = 0; ch < c; ++ch) {
            out.at(idx3(oy, ox, (dy * b + dx) * c + ch, wout, cout)) =
                input.at(idx3(oy * b + dy, ox * b + dx, ch, w, c));
          }
        }
      }
    }
  }
  out.quantize();
  const auto in_shape = input.shape();
  const auto out_shape = out.shape();
  const Precision prec = input.precision();
  LayerOutput res;
  res.output = std::move(out);
  res.cached_scalars = 0;  // pure permutation
  res.pullback = [b, in_shape, out_shape, prec](const Tensor& cot) -> VjpResult {
    if (cot.shape() != out_shape) {
      throw ShapeError("space_to_depth pullback: cotangent " +
                       shape_to_string(cot.shape()));
    }
    Tensor dx(in_shape, prec);
    const int64_t h = in_shape[0], w = in_shape[1], c = in_shape[2];
    const int64_t hout = h / b, wout = w / b, cout = b * b * c;
    for (int64_t oy = 0; oy < hout; ++oy) {
      for (int64_t ox = 0; ox < wout; ++ox) {
        for (int64_t dy = 0; dy < b; ++dy) {
          for (int64_t dxp = 0; dxp < b; ++dxp) {
            for (int64_t ch = 0; ch < c; ++ch) {
              dx.at(idx3(oy * b + dy, ox * b + dxp, ch, w, c)) =
                  cot.at(idx3(oy, ox, (dy * b + dxp) * c + ch, wout, cout));
            }
          }
        }
      }
    }
    dx.quantize();
    return {std::move(dx), {}};
  };
  return res;
}

LayerOutput scale_shift_apply(const LayerSpec& spec, const ParamSet& params,
                              const Tensor& input) {
  if (params.size() != 2) throw Error("scale_shift: expected gamma and beta parameters");
  const Tensor& gamma = params[0];
  const Tensor& beta = params[1];
  const int64_t c = spec.channels;
  if (gamma.shape() != std::vector<int64_t>{c} || beta.shape() != std::vector<int64_t>{c}) {
    throw ShapeError("scale_shift: parameter shapes " + shape_to_string(gamma.shape()) +
                     ", " + shape_to_string(beta.shape()));
  }
  if (input.rank() < 1 || input.shape().back() != c) {
    throw ShapeError("scale_shift: input " + shape_to_string(input.shape()) +
                     " last axis must be " + std::to_string(c));
  }
  Tensor out(input.shape(), input.precision());
  const int64_t rows = input.numel() / c;
  for (int64_t r = 0; r < rows; ++r) {
    for (int64_t ch = 0; ch < c; ++ch) {
      out.at(r * c + ch) = gamma.at(ch) * input.at(r * c + ch) + beta.at(ch);
    }
  }
  out.quantize();
  LayerOutput res;
  res.output = std::move(out);
  res.cached_scalars = input.numel() + gamma.numel();
  res.pullback = [input, gamma, c, rows](const Tensor& cot) -> VjpResult {
    if (cot.shape() != input.shape()) {
      throw ShapeError("scale_shift pullback: cotangent " +
                       shape_to_string(cot.shape()));
    }
    Tensor dx(input.shape(), input.precision());
    Tensor dg({c}, gamma.precision());
    Tensor db({c}, gamma.precision());
    for (int64_t r = 0; r < rows; ++r) {
      for (int64_t ch = 0; ch < c; ++ch) {
        const double g = cot.at(r * c + ch);
        dx.at(r * c + ch) = gamma.at(ch) * g;
        dg.at(ch) += input.at(r * c + ch) * g;
        db.at(ch) += g;
      }
    }
    dx.quantize();
    dg.quantize();
    db.quantize();
    VjpResult res2;
    res2.input_grad = std::move(dx);
    res2.param_grads.names = {"gamma", "beta"};
    res2.param_grads.tensors = {std::move(dg), std::move(db)};
    return res2;
  };
  return res;
}

}  // namespace

LayerSpec LayerSpec::affine(int64_t in, int64_t out) {
  LayerSpec s;
  s.kind = LayerKind::kAffine;
  s.in_features = in;
  s.out_features = out;
  return s;
}

LayerSpec LayerSpec::conv2d(int64_t kh, int64_t kw, int64_t cin, int64_t cout,
                            int64_t stride) {
  LayerSpec s;
  s.kind = LayerKind::kConv2d;
  s.kernel_h = kh;
  s.kernel_w = kw;
  s.in_channels = cin;
  s.out_channels = cout;
  s.stride = stride;
  return s;
}

LayerSpec LayerSpec::relu() {
  LayerSpec s;
  s.kind = LayerKind::kRelu;
  return s;
}

LayerSpec LayerSpec::maxpool2d(int64_t window, int64_t stride) {
  LayerSpec s;
  s.kind = LayerKind::kMaxPool2d;
  s.window = window;
  s.stride = stride;
  return s;
}

LayerSpec LayerSpec::tile_upsample(int64_t factor) {
  LayerSpec s;
  s.kind = LayerKind::kTileUpsample;
  s.factor = factor;
  return s;
}

LayerSpec LayerSpec::space_to_depth(int64_t block) {
  LayerSpec s;
  s.kind = LayerKind::kSpaceToDepth;
  s.block = block;
  return s;
}

LayerSpec LayerSpec::scale_shift(int64_t channels) {
  LayerSpec s;
  s.kind = LayerKind::kScaleShift;
  s.channels = channels;
  return s;
}

void ParamSet::add_(const ParamSet& other) {
  if (tensors.size() != other.tensors.size()) {
    throw ShapeError("ParamSet::add_: arity mismatch");
  }
  for (size_t i = 0; i < tensors.size(); ++i) tensors[i].add_(other.tensors[i]);
}

void ParamSet::scale_(double factor) {
  for (Tensor& t : tensors) t.scale_(factor);
}

void ParamSet::set_precision(Precision prec) {
  for (Tensor& t : tensors) t.set_precision(prec);
}

int64_t ParamSet::total_scalars() const {
  int64_t n = 0;
  for (const Tensor& t : tensors) n += t.numel();
  return n;
}

ParamSet ParamSet::zeros_like(const ParamSet& other) {
  ParamSet p;
  p.names = other.names;
  p.tensors.reserve(other.tensors.size());
  for (const Tensor& t : other.tensors) p.tensors.push_back(Tensor::zeros_like(t));
  return p;
}

ParamSet init_params(const LayerSpec& spec, RandomSource& rng) {
  ParamSet p;
  auto fill_uniform = [&rng](Tensor& t, double limit) {
    for (int64_t i = 0; i < t.numel(); ++i) t.at(i) = rng.uniform(-limit, limit);
    t.quantize();
  };
  switch (spec.kind) {
    case LayerKind::kAffine: {
      Tensor w({spec.out_features, spec.in_features});
      fill_uniform(w, std::sqrt(6.0 / static_cast<double>(spec.in_features)));
      p.names = {"weight", "bias"};
      p.tensors = {std::move(w), Tensor({spec.out_features})};
      break;
    }
    case LayerKind::kConv2d: {
      Tensor w({spec.kernel_h, spec.kernel_w, spec.in_channels, spec.out_channels});
      const double fan_in =
          static_cast<double>(spec.kernel_h * spec.kernel_w * spec.in_channels);
      fill_uniform(w, std::sqrt(6.0 / fan_in));
      p.names = {"weight", "bias"};
      p.tensors = {std::move(w), Tensor({spec.out_channels})};
      break;
    }
    case LayerKind::kScaleShift: {
      p.names = {"gamma", "beta"};
      p.tensors = {Tensor::full({spec.channels}, 1.0), Tensor({spec.channels})};
      break;
    }
    default:
      break;  // parameter-free layers
  }
  return p;
}

std::vector<int64_t> layer_out_shape(const LayerSpec& spec,
                                     const std::vector<int64_t>& in_shape) {
  switch (spec.kind) {
    case LayerKind::kAffine:
      if (numel_of(in_shape) != spec.in_features) {
        throw ShapeError("affine: input " + shape_to_string(in_shape) + " has " +
                         std::to_string(numel_of(in_shape)) +
                         " elements, spec expects " + std::to_string(spec.in_features));
      }
      return {spec.out_features};
    case LayerKind::kRelu:
      return in_shape;
    case LayerKind::kScaleShift:
      if (in_shape.empty() || in_shape.back() != spec.channels) {
        throw ShapeError("scale_shift: input " + shape_to_string(in_shape) +
                         " last axis must be " + std::to_string(spec.channels));
      }
      return in_shape;
    case LayerKind::kConv2d: {
      if (in_shape.size() != 3) {
        throw ShapeError("conv2d shape inference expects rank-3, got " +
                         shape_to_string(in_shape));
      }
      if (in_shape[2] != spec.in_channels) {
        throw ShapeError("conv2d: input has " + std::to_string(in_shape[2]) +
                         " channels, spec expects " + std::to_string(spec.in_channels));
      }
      const ConvGeom g = conv_geom(spec, in_shape[0], in_shape[1]);
      return {g.hout, g.wout, g.cout};
    }
    case LayerKind::kMaxPool2d: {
      if (in_shape.size() != 3) {
        throw ShapeError("maxpool2d shape inference expects rank-3, got " +
                         shape_to_string(in_shape));
      }
      if (spec.window > in_shape[0] || spec.window > in_shape[1]) {
        throw ShapeError("maxpool2d: window " + std::to_string(spec.window) +
                         " exceeds input " + shape_to_string(in_shape));
      }
      return {(in_shape[0] - spec.window) / spec.stride + 1,
              (in_shape[1] - spec.window) / spec.stride + 1, in_shape[2]};
    }
    case LayerKind::kTileUpsample:
      if (in_shape.size() != 3) {
        throw ShapeError("tile_upsample shape inference expects rank-3, got " +
                         shape_to_string(in_shape));
      }
      return {in_shape[0] * spec.factor, in_shape[1] * spec.factor, in_shape[2]};
    case LayerKind::kSpaceToDepth: {
      if (in_shape.size() != 3) {
        throw ShapeError("space_to_depth shape inference expects rank-3, got " +
                         shape_to_string(in_shape));
      }
      if (in_shape[0] % spec.block != 0 || in_shape[1] % spec.block != 0) {
        throw ShapeError("space_to_depth: input " + shape_to_string(in_shape) +
                         " not divisible by block " + std::to_string(spec.block));
      }
      return {in_shape[0] / spec.block, in_shape[1] / spec.block,
              in_shape[2] * spec.block * spec.block};
    }
  }
  throw Error("layer_out_shape: unknown layer kind");
}

LayerOutput layer_apply(const LayerSpec& spec, const ParamSet& params,
                        const Tensor& input) {
  if (input.absent()) throw ShapeError("layer_apply: absent input tensor");
  switch (spec.kind) {
    case LayerKind::kAffine:
      return affine_apply(spec, params, input);
    case LayerKind::kConv2d:
      return conv_apply(spec, params, input);
    case LayerKind::kRelu:
      return relu_apply(input);
    case LayerKind::kMaxPool2d:
      return maxpool_hwc(input, spec.window, spec.stride);
    case LayerKind::kTileUpsample:
      return tile_hwc(input, spec.factor);
    case LayerKind::kSpaceToDepth:
      return space_to_depth_apply(spec, input);
    case LayerKind::kScaleShift:
      return scale_shift_apply(spec, params, input);
  }
  throw Error("layer_apply: unknown layer kind");
}

LayerOutput tau_apply(const TauSpec& tau, const Tensor& input) {
  switch (tau.kind) {
    case TauKind::kIdentity: {
      LayerOutput res;
      res.output = input;
      res.cached_scalars = 0;
      const auto shape = input.shape();
      res.pullback = [shape](const Tensor& cot) -> VjpResult {
        if (cot.shape() != shape) {
          throw ShapeError("tau identity pullback: cotangent " +
                           shape_to_string(cot.shape()));
        }
        return {cot, {}};
      };
      return res;
    }
    case TauKind::kMaxPool:
      return maxpool_hwc(input, tau.factor, tau.factor);
    case TauKind::kTile:
      return tile_hwc(input, tau.factor);
  }
  throw Error("tau_apply: unknown resampler kind");
}

FuseResult fuse_apply(FusionKind kind, const Tensor& direct, const Tensor& shortcut) {
  if (direct.absent()) throw ShapeError("fuse_apply: absent direct input");
  FuseResult res;
  switch (kind) {
    case FusionKind::kAdd: {
      if (direct.shape() != shortcut.shape()) {
        throw ShapeError("fuse_apply(add): shape mismatch " +
                         shape_to_string(direct.shape()) + " vs " +
                         shape_to_string(shortcut.shape()));
      }
      Tensor fused = direct;
      fused.add_(shortcut);
      res.fused = std::move(fused);
      const auto shape = direct.shape();
      res.pullback = [shape](const Tensor& cot) {
        if (cot.shape() != shape) {
          throw ShapeError("fuse(add) pullback: cotangent " +
                           shape_to_string(cot.shape()));
        }
        return std::make_pair(cot, cot);
      };
      return res;
    }
    case FusionKind::kConcat: {
      if (direct.rank() != shortcut.rank() || direct.rank() == 0) {
        throw ShapeError("fuse_apply(concat): rank mismatch " +
                         shape_to_string(direct.shape()) + " vs " +
                         shape_to_string(shortcut.shape()));
      }
      for (size_t i = 0; i + 1 < direct.rank(); ++i) {
        if (direct.shape()[i] != shortcut.shape()[i]) {
          throw ShapeError("fuse_apply(concat): leading dims differ " +
                           shape_to_string(direct.shape()) + " vs " +
                           shape_to_string(shortcut.shape()));
        }
      }
      const int64_t cd = direct.shape().back();
      const int64_t cs = shortcut.shape().back();
      std::vector<int64_t> out_shape = direct.shape();
      out_shape.back() = cd + cs;
      Tensor fused(out_shape, direct.precision());
      const int64_t rows = direct.numel() / cd;
      for (int64_t r = 0; r < rows; ++r) {
        for (int64_t i = 0; i < cd; ++i) {
          fused.at(r * (cd + cs) + i) = direct.at(r * cd + i);
        }
        for (int64_t i = 0; i < cs; ++i) {
          fused.at(r * (cd + cs) + cd + i) = shortcut.at(r * cs + i);
        }
      }
      fused.quantize();
      res.fused = std::move(fused);
      const auto dshape = direct.shape();
      const auto sshape = shortcut.shape();
      const Precision prec = direct.precision();
      res.pullback = [dshape, sshape, cd, cs, rows, out_shape,
                      prec](const Tensor& cot) {
        if (cot.shape() != out_shape) {
          throw ShapeError("fuse(concat) pullback: cotangent " +
                           shape_to_string(cot.shape()));
        }
        Tensor gd(dshape, prec);
        Tensor gs(sshape, prec);
        for (int64_t r = 0; r < rows; ++r) {
          for (int64_t i = 0; i < cd; ++i) {
            gd.at(r * cd + i) = cot.at(r * (cd + cs) + i);
          }
          for (int64_t i = 0; i < cs; ++i) {
            gs.at(r * cs + i) = cot.at(r * (cd + cs) + cd + i);
          }
        }
        gd.quantize();
        gs.quantize();
        return std::make_pair(std::move(gd), std::move(gs));
      };
      return res;
    }
    case FusionKind::kDropShortcut: {
      res.fused = direct;
      const auto shape = direct.shape();
      res.pullback = [shape](const Tensor& cot) {
        if (cot.shape() != shape) {
          throw ShapeError("fuse(drop) pullback: cotangent " +
                           shape_to_string(cot.shape()));
        }
        // The shortcut contributed nothing forward, so it receives no
        // gradient; absence (not zero) keeps downstream sums untouched.
        return std::make_pair(cot, Tensor());
      };
      return res;
    }
  }
  throw Error("fuse_apply: unknown fusion kind");
}

HeadResult softmax_xent(const Tensor& logits, int64_t label) {
  const int64_t n = logits.numel();
  if (n == 0) throw ShapeError("softmax_xent: empty logits");
  if (label < 0 || label >= n) {
    throw Error("softmax_xent: label " + std::to_string(label) + " outside [0, " +
                std::to_string(n) + ")");
  }
  double m = logits.at(0);
  for (int64_t i = 1; i < n; ++i) m = std::max(m, logits.at(i));
  double denom = 0.0;
  for (int64_t i = 0; i < n; ++i) denom += std::exp(logits.at(i) - m);
  HeadResult res;
  res.loss = std::log(denom) - (logits.at(label) - m);
  res.grad = Tensor(logits.shape(), logits.precision());
  for (int64_t i = 0; i < n; ++i) {
    res.grad.at(i) = std::exp(logits.at(i) - m) / denom - (i == label ? 1.0 : 0.0);
  }
  res.grad.quantize();
  if (logits.precision() == Precision::kSingle) {
    res.loss = static_cast<double>(static_cast<float>(res.loss));
  }
  return res;
}

HeadResult mse_loss(const Tensor& pred, const Tensor& target) {
  if (pred.shape() != target.shape()) {
    throw ShapeError("mse_loss: shape mismatch " + shape_to_string(pred.shape()) +
                     " vs " + shape_to_string(target.shape()));
  }
  const int64_t n = pred.numel();
  if (n == 0) throw ShapeError("mse_loss: empty tensors");
  const double scale = 1.0 / static_cast<double>(n);
  HeadResult res;
  res.grad = Tensor(pred.shape(), pred.precision());
  double acc = 0.0;
  for (int64_t i = 0; i < n; ++i) {
    const double d = pred.at(i) - target.at(i);
    acc += d * d;
    res.grad.at(i) = 2.0 * d * scale;
  }
  res.loss = acc * scale;
  res.grad.quantize();
  if (pred.precision() == Precision::kSingle) {
    res.loss = static_cast<double>(static_cast<float>(res.loss));
  }
  return res;
}

}  // namespace sideways
