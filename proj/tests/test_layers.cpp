// Copyright 2026 The Sideways Authors
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <vector>

#include "sideways/errors.hpp"
#include "sideways/gradcheck.hpp"
#include "sideways/layers.hpp"
#include "sideways/random.hpp"
#include "sideways/tensor.hpp"

using namespace sideways;

namespace {

ParamSet ones_conv_params(const LayerSpec& spec) {
  RandomSource rng(1);
  ParamSet p = init_params(spec, rng);
  for (int64_t i = 0; i < p[0].numel(); ++i) p[0].at(i) = 1.0;
  return p;
}

}  // namespace

TEST_CASE("layer_out_shape covers every layer kind") {
  CHECK(layer_out_shape(LayerSpec::affine(12, 4), {3, 4}) == std::vector<int64_t>{4});
  CHECK_THROWS_AS(layer_out_shape(LayerSpec::affine(5, 4), {3, 4}), ShapeError);

  // Same-padded conv keeps ceil(h / stride).
  CHECK(layer_out_shape(LayerSpec::conv2d(3, 3, 1, 4), {12, 12, 1}) ==
        std::vector<int64_t>({12, 12, 4}));
  CHECK(layer_out_shape(LayerSpec::conv2d(3, 3, 2, 4, 2), {7, 7, 2}) ==
        std::vector<int64_t>({4, 4, 4}));
  CHECK_THROWS_AS(layer_out_shape(LayerSpec::conv2d(3, 3, 2, 4), {7, 7, 1}), ShapeError);

  CHECK(layer_out_shape(LayerSpec::relu(), {5, 6, 7}) == std::vector<int64_t>({5, 6, 7}));

  // Pooling is valid-only: (h - window) / stride + 1.
  CHECK(layer_out_shape(LayerSpec::maxpool2d(2, 2), {6, 6, 3}) ==
        std::vector<int64_t>({3, 3, 3}));
  CHECK(layer_out_shape(LayerSpec::maxpool2d(3, 3), {12, 12, 4}) ==
        std::vector<int64_t>({4, 4, 4}));
  CHECK_THROWS_AS(layer_out_shape(LayerSpec::maxpool2d(8, 8), {6, 6, 1}), ShapeError);

  CHECK(layer_out_shape(LayerSpec::tile_upsample(2), {3, 3, 4}) ==
        std::vector<int64_t>({6, 6, 4}));
  CHECK(layer_out_shape(LayerSpec::space_to_depth(2), {6, 6, 3}) ==
        std::vector<int64_t>({3, 3, 12}));
  CHECK_THROWS_AS(layer_out_shape(LayerSpec::space_to_depth(2), {5, 6, 3}), ShapeError);
  CHECK(layer_out_shape(LayerSpec::scale_shift(3), {4, 4, 3}) ==
        std::vector<int64_t>({4, 4, 3}));
  CHECK_THROWS_AS(layer_out_shape(LayerSpec::scale_shift(3), {4, 4, 2}), ShapeError);
}

TEST_CASE("conv2d frozen values, stride one") {
  // 1x3 all-ones kernel over [1 2 3]: zero padding one column each side.
  LayerSpec spec = LayerSpec::conv2d(1, 3, 1, 1);
  ParamSet p = ones_conv_params(spec);
  Tensor x({1, 3, 1}, {1.0, 2.0, 3.0});
  LayerOutput lo = layer_apply(spec, p, x);
  CHECK(lo.output.shape() == std::vector<int64_t>({1, 3, 1}));
  CHECK(lo.output.at(0) == 3.0);
  CHECK(lo.output.at(1) == 6.0);
  CHECK(lo.output.at(2) == 5.0);
  CHECK(lo.cached_scalars == x.numel() + p[0].numel());
}

TEST_CASE("conv2d frozen values, stride two pads the smaller half first") {
  // [1 2 3 4], k=3, s=2: one pad column total, placed trailing.
  LayerSpec spec = LayerSpec::conv2d(1, 3, 1, 1, 2);
  ParamSet p = ones_conv_params(spec);
  Tensor x({1, 4, 1}, {1.0, 2.0, 3.0, 4.0});
  LayerOutput lo = layer_apply(spec, p, x);
  CHECK(lo.output.shape() == std::vector<int64_t>({1, 2, 1}));
  CHECK(lo.output.at(0) == 6.0);   // 1 + 2 + 3
  CHECK(lo.output.at(1) == 7.0);   // 3 + 4 + pad
}

TEST_CASE("conv2d bias broadcasts over positions") {
  LayerSpec spec = LayerSpec::conv2d(1, 1, 1, 2);
  RandomSource rng(3);
  ParamSet p = init_params(spec, rng);
  p[0] = Tensor({1, 1, 1, 2}, {2.0, -1.0});
  p[1] = Tensor({2}, {10.0, 20.0});
  Tensor x({1, 2, 1}, {1.0, 3.0});
  LayerOutput lo = layer_apply(spec, p, x);
  // HWC: position 0 -> [2*1+10, -1*1+20], position 1 -> [2*3+10, -1*3+20]
  CHECK(lo.output.values() == std::vector<double>({12.0, 19.0, 16.0, 17.0}));
}

TEST_CASE("conv2d gradient matches finite differences") {
  LayerSpec spec = LayerSpec::conv2d(3, 3, 2, 3);
  RandomSource rng(9);
  ParamSet p = init_params(spec, rng);
  Tensor x({4, 5, 2});
  for (int64_t i = 0; i < x.numel(); ++i) x.at(i) = rng.uniform(-1.0, 1.0);
  Tensor u({4, 5, 3});
  for (int64_t i = 0; i < u.numel(); ++i) u.at(i) = rng.uniform(-1.0, 1.0);

  LayerOutput lo = layer_apply(spec, p, x);
  VjpResult vjp = lo.pullback(u);

  auto f_input = [&](const Tensor& xx) { return layer_apply(spec, p, xx).output; };
  CHECK(finite_diff_vjp_check(f_input, x, u, vjp.input_grad) < 1e-6);

  for (size_t i = 0; i < p.size(); ++i) {
    auto f_param = [&, i](const Tensor& t) {
      ParamSet q = p;
      q[i] = t;
      return layer_apply(spec, q, x).output;
    };
    CHECK(finite_diff_vjp_check(f_param, p[i], u, vjp.param_grads[i]) < 1e-6);
  }
}

TEST_CASE("affine forward and gradient") {
  LayerSpec spec = LayerSpec::affine(3, 2);
  RandomSource rng(5);
  ParamSet p = init_params(spec, rng);
  p[0] = Tensor({2, 3}, {1.0, 0.0, -1.0, 2.0, 1.0, 0.5});
  p[1] = Tensor({2}, {0.25, -0.25});
  Tensor x({3}, {2.0, 4.0, 6.0});
  LayerOutput lo = layer_apply(spec, p, x);
  CHECK(lo.output.at(0) == doctest::Approx(2.0 - 6.0 + 0.25));
  CHECK(lo.output.at(1) == doctest::Approx(4.0 + 4.0 + 3.0 - 0.25));
  CHECK(lo.cached_scalars == x.numel() + p[0].numel());

  Tensor u({2}, {1.0, -2.0});
  VjpResult vjp = lo.pullback(u);
  // dx = W^T u, dW = u x^T, db = u.
  CHECK(vjp.input_grad.at(0) == doctest::Approx(1.0 - 4.0));
  CHECK(vjp.param_grads[1].at(1) == -2.0);
  CHECK(vjp.param_grads[0].at(3) == doctest::Approx(-2.0 * 2.0));

  // Flattens rank-3 input automatically.
  Tensor ximg({1, 3, 1}, {2.0, 4.0, 6.0});
  CHECK(bitwise_equal(layer_apply(spec, p, ximg).output, lo.output));
}

TEST_CASE("relu is strict at zero") {
  LayerSpec spec = LayerSpec::relu();
  ParamSet none;
  Tensor x({4}, {-1.0, 0.0, 0.5, 2.0});
  LayerOutput lo = layer_apply(spec, none, x);
  CHECK(lo.output.values() == std::vector<double>({0.0, 0.0, 0.5, 2.0}));
  Tensor u({4}, {1.0, 1.0, 1.0, 1.0});
  VjpResult vjp = lo.pullback(u);
  // Gradient at exactly zero is zero (x > 0 gate).
  CHECK(vjp.input_grad.values() == std::vector<double>({0.0, 0.0, 1.0, 1.0}));
  CHECK(lo.cached_scalars == x.numel());
}

TEST_CASE("maxpool takes window max and routes ties to the lowest index") {
  LayerSpec spec = LayerSpec::maxpool2d(2, 2);
  ParamSet none;
  Tensor x({2, 2, 1}, {5.0, 5.0, 5.0, 5.0});
  LayerOutput lo = layer_apply(spec, none, x);
  CHECK(lo.output.numel() == 1);
  CHECK(lo.output.at(0) == 5.0);
  VjpResult vjp = lo.pullback(Tensor({1, 1, 1}, {1.0}));
  CHECK(vjp.input_grad.values() == std::vector<double>({1.0, 0.0, 0.0, 0.0}));
  CHECK(lo.cached_scalars == lo.output.numel());

  // Distinct values route to the true argmax, per channel.
  Tensor y({2, 2, 2}, {1.0, 8.0, 2.0, 7.0, 9.0, 3.0, 4.0, 6.0});
  LayerOutput lo2 = layer_apply(spec, none, y);
  CHECK(lo2.output.values() == std::vector<double>({9.0, 8.0}));
  VjpResult v2 = lo2.pullback(Tensor({1, 1, 2}, {1.0, 2.0}));
  CHECK(v2.input_grad.values() ==
        std::vector<double>({0.0, 2.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0}));
}

TEST_CASE("tile upsample repeats and its pullback sums the replicas") {
  LayerSpec spec = LayerSpec::tile_upsample(2);
  ParamSet none;
  Tensor x({1, 2, 1}, {3.0, 4.0});
  LayerOutput lo = layer_apply(spec, none, x);
  CHECK(lo.output.shape() == std::vector<int64_t>({2, 4, 1}));
  CHECK(lo.output.values() ==
        std::vector<double>({3.0, 3.0, 4.0, 4.0, 3.0, 3.0, 4.0, 4.0}));
  Tensor u = Tensor::full({2, 4, 1}, 1.0);
  VjpResult vjp = lo.pullback(u);
  CHECK(vjp.input_grad.values() == std::vector<double>({4.0, 4.0}));
  CHECK(lo.cached_scalars == 0);  // pure data movement
}

TEST_CASE("space_to_depth folds blocks into channels") {
  LayerSpec spec = LayerSpec::space_to_depth(2);
  ParamSet none;
  Tensor x({2, 2, 1}, {1.0, 2.0, 3.0, 4.0});
  LayerOutput lo = layer_apply(spec, none, x);
  CHECK(lo.output.shape() == std::vector<int64_t>({1, 1, 4}));
  // Block scan order: (dy, dx) major, channel minor.
  CHECK(lo.output.values() == std::vector<double>({1.0, 2.0, 3.0, 4.0}));
  VjpResult vjp = lo.pullback(Tensor({1, 1, 4}, {10.0, 20.0, 30.0, 40.0}));
  CHECK(vjp.input_grad.values() == std::vector<double>({10.0, 20.0, 30.0, 40.0}));
  CHECK(lo.cached_scalars == 0);
}

TEST_CASE("scale_shift applies per-channel gamma and beta") {
  LayerSpec spec = LayerSpec::scale_shift(2);
  RandomSource rng(2);
  ParamSet p = init_params(spec, rng);
  CHECK(p[0].values() == std::vector<double>({1.0, 1.0}));  // gamma starts at one
  CHECK(p[1].values() == std::vector<double>({0.0, 0.0}));
  p[0] = Tensor({2}, {2.0, 3.0});
  p[1] = Tensor({2}, {0.5, -1.0});
  Tensor x({1, 2, 2}, {1.0, 1.0, 2.0, 2.0});
  LayerOutput lo = layer_apply(spec, p, x);
  CHECK(lo.output.values() == std::vector<double>({2.5, 2.0, 4.5, 5.0}));

  Tensor u = Tensor::full({1, 2, 2}, 1.0);
  VjpResult vjp = lo.pullback(u);
  CHECK(vjp.input_grad.values() == std::vector<double>({2.0, 3.0, 2.0, 3.0}));
  CHECK(vjp.param_grads[0].values() == std::vector<double>({3.0, 3.0}));  // sum x per ch
  CHECK(vjp.param_grads[1].values() == std::vector<double>({2.0, 2.0}));
}

TEST_CASE("layer_apply rejects an absent input") {
  ParamSet none;
  CHECK_THROWS_AS(layer_apply(LayerSpec::relu(), none, Tensor()), ShapeError);
}

TEST_CASE("init_params respects fan-in bounds") {
  RandomSource rng(21);
  ParamSet aff = init_params(LayerSpec::affine(50, 20), rng);
  const double alim = std::sqrt(6.0 / 50.0);
  for (int64_t i = 0; i < aff[0].numel(); ++i) {
    CHECK(std::abs(aff[0].at(i)) <= alim);
  }
  for (int64_t i = 0; i < aff[1].numel(); ++i) CHECK(aff[1].at(i) == 0.0);

  ParamSet conv = init_params(LayerSpec::conv2d(3, 3, 4, 8), rng);
  const double clim = std::sqrt(6.0 / 36.0);
  double maxabs = 0.0;
  for (int64_t i = 0; i < conv[0].numel(); ++i) {
    maxabs = std::max(maxabs, std::abs(conv[0].at(i)));
    CHECK(std::abs(conv[0].at(i)) <= clim);
  }
  CHECK(maxabs > 0.5 * clim);  // actually spans the range

  // Deterministic given the stream.
  RandomSource r1(33), r2(33);
  ParamSet a = init_params(LayerSpec::conv2d(3, 3, 2, 2), r1);
  ParamSet b = init_params(LayerSpec::conv2d(3, 3, 2, 2), r2);
  CHECK(bitwise_equal(a[0], b[0]));
}

TEST_CASE("paramset helpers") {
  RandomSource rng(4);
  ParamSet p = init_params(LayerSpec::affine(3, 2), rng);
  ParamSet z = ParamSet::zeros_like(p);
  CHECK(z.size() == p.size());
  CHECK(z.names == p.names);
  CHECK(z[0].shape() == p[0].shape());
  CHECK(z.total_scalars() == p.total_scalars());
  CHECK(p.total_scalars() == 8);  // 2x3 weight + 2 bias

  ParamSet q = p;
  q.add_(p);
  q.scale_(0.5);
  for (int64_t i = 0; i < p[0].numel(); ++i) {
    CHECK(q[0].at(i) == doctest::Approx(p[0].at(i)));
  }
}

TEST_CASE("tau resamplers") {
  Tensor x({2, 2, 1}, {1.0, 2.0, 3.0, 8.0});

  LayerOutput ident = tau_apply(TauSpec{TauKind::kIdentity, 1}, x);
  CHECK(bitwise_equal(ident.output, x));
  VjpResult vi = ident.pullback(Tensor({2, 2, 1}, {1.0, 1.0, 1.0, 1.0}));
  CHECK(vi.input_grad.values() == std::vector<double>({1.0, 1.0, 1.0, 1.0}));

  LayerOutput pooled = tau_apply(TauSpec{TauKind::kMaxPool, 2}, x);
  CHECK(pooled.output.shape() == std::vector<int64_t>({1, 1, 1}));
  CHECK(pooled.output.at(0) == 8.0);

  Tensor small({1, 1, 1}, {5.0});
  LayerOutput tiled = tau_apply(TauSpec{TauKind::kTile, 2}, small);
  CHECK(tiled.output.shape() == std::vector<int64_t>({2, 2, 1}));
  CHECK(tiled.output.at(3) == 5.0);
}

TEST_CASE("fusion arithmetic and pullback splitting") {
  Tensor d({1, 1, 2}, {1.0, 2.0});
  Tensor s({1, 1, 1}, {10.0});

  FuseResult cat = fuse_apply(FusionKind::kConcat, d, s);
  CHECK(cat.fused.shape() == std::vector<int64_t>({1, 1, 3}));
  CHECK(cat.fused.values() == std::vector<double>({1.0, 2.0, 10.0}));
  auto [gd, gs] = cat.pullback(Tensor({1, 1, 3}, {5.0, 6.0, 7.0}));
  CHECK(gd.values() == std::vector<double>({5.0, 6.0}));
  CHECK(gs.values() == std::vector<double>({7.0}));

  // Concat interleaves per position, channel-last.
  Tensor d2({1, 2, 1}, {1.0, 2.0});
  Tensor s2({1, 2, 1}, {3.0, 4.0});
  FuseResult cat2 = fuse_apply(FusionKind::kConcat, d2, s2);
  CHECK(cat2.fused.shape() == std::vector<int64_t>({1, 2, 2}));
  CHECK(cat2.fused.values() == std::vector<double>({1.0, 3.0, 2.0, 4.0}));

  Tensor a({2}, {1.0, 2.0});
  Tensor b({2}, {3.0, 5.0});
  FuseResult add = fuse_apply(FusionKind::kAdd, a, b);
  CHECK(add.fused.values() == std::vector<double>({4.0, 7.0}));
  auto [ad, as] = add.pullback(Tensor({2}, {1.0, -1.0}));
  CHECK(ad.values() == std::vector<double>({1.0, -1.0}));
  CHECK(as.values() == std::vector<double>({1.0, -1.0}));
  CHECK_THROWS_AS(fuse_apply(FusionKind::kAdd, a, Tensor({3})), ShapeError);

  FuseResult drop = fuse_apply(FusionKind::kDropShortcut, a, b);
  CHECK(bitwise_equal(drop.fused, a));
  auto [dd, ds] = drop.pullback(Tensor({2}, {1.0, 1.0}));
  CHECK(dd.values() == std::vector<double>({1.0, 1.0}));
  CHECK(ds.absent());  // no gradient crosses a dropped shortcut
}

TEST_CASE("softmax cross entropy frozen values") {
  HeadResult h = softmax_xent(Tensor({2}, {0.0, 0.0}), 0);
  CHECK(h.loss == doctest::Approx(std::log(2.0)).epsilon(1e-15));
  CHECK(h.grad.at(0) == doctest::Approx(-0.5));
  CHECK(h.grad.at(1) == doctest::Approx(0.5));

  // Max subtraction keeps large logits finite.
  HeadResult big = softmax_xent(Tensor({2}, {1000.0, 0.0}), 0);
  CHECK(std::isfinite(big.loss));
  CHECK(big.loss == doctest::Approx(0.0));

  // Gradient sums to zero.
  HeadResult g = softmax_xent(Tensor({3}, {0.3, -1.2, 0.8}), 2);
  CHECK(g.grad.at(0) + g.grad.at(1) + g.grad.at(2) == doctest::Approx(0.0));

  auto f = [](const Tensor& x) {
    HeadResult r = softmax_xent(x, 1);
    return Tensor({1}, {r.loss});
  };
  Tensor x({3}, {0.3, -1.2, 0.8});
  HeadResult hr = softmax_xent(x, 1);
  CHECK(finite_diff_vjp_check(f, x, Tensor({1}, {1.0}), hr.grad) < 1e-7);
}

TEST_CASE("mse loss frozen values") {
  HeadResult h = mse_loss(Tensor({2}, {1.0, 2.0}), Tensor({2}, {0.0, 0.0}));
  CHECK(h.loss == 2.5);  // (1 + 4) / 2
  CHECK(h.grad.values() == std::vector<double>({1.0, 2.0}));  // 2 d / n

  HeadResult zero = mse_loss(Tensor({3}, {1.0, 2.0, 3.0}), Tensor({3}, {1.0, 2.0, 3.0}));
  CHECK(zero.loss == 0.0);
  CHECK_THROWS_AS(mse_loss(Tensor({2}), Tensor({3})), ShapeError);
}
