// Copyright 2026 The Sideways Authors
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <limits>
#include <set>
#include <vector>

#include "sideways/errors.hpp"
#include "sideways/gradcheck.hpp"
#include "sideways/random.hpp"
#include "sideways/tensor.hpp"

using namespace sideways;

TEST_CASE("tensor construction and basic queries") {
  Tensor absent;
  CHECK(absent.absent());
  CHECK(absent.numel() == 0);
  CHECK(absent.rank() == 0);

  Tensor z({2, 3});
  CHECK_FALSE(z.absent());
  CHECK(z.numel() == 6);
  CHECK(z.dim(0) == 2);
  CHECK(z.dim(1) == 3);
  for (int64_t i = 0; i < z.numel(); ++i) CHECK(z.at(i) == 0.0);

  Tensor v({2, 2}, {1.0, 2.0, 3.0, 4.0});
  CHECK(v.at(3) == 4.0);
  CHECK(numel_of({2, 3, 4}) == 24);
  CHECK(shape_to_string({2, 3}) == "[2,3]");

  CHECK_THROWS_AS(Tensor({2, 2}, {1.0, 2.0, 3.0}), ShapeError);
  CHECK_THROWS_AS(numel_of({2, -1}), ShapeError);
}

TEST_CASE("zeros_like and full preserve precision") {
  Tensor a({3}, {1.0, 2.0, 3.0}, Precision::kSingle);
  Tensor z = Tensor::zeros_like(a);
  CHECK(z.precision() == Precision::kSingle);
  CHECK(z.shape() == a.shape());
  CHECK(z.at(1) == 0.0);

  Tensor f = Tensor::full({2}, 0.1, Precision::kSingle);
  CHECK(f.at(0) == static_cast<double>(0.1f));
  CHECK(f.at(0) != 0.1);  // storage rounds through float
}

TEST_CASE("quantize rounds every element through float") {
  Tensor t({2}, {0.1, 1.0 / 3.0});
  CHECK(t.at(0) == 0.1);  // double storage untouched
  t.set_precision(Precision::kSingle);
  CHECK(t.at(0) == static_cast<double>(0.1f));
  CHECK(t.at(1) == static_cast<double>(static_cast<float>(1.0 / 3.0)));
  // Quantizing twice is a no-op.
  Tensor u = t;
  u.quantize();
  CHECK(bitwise_equal(t, u));
}

TEST_CASE("arithmetic helpers accumulate in flat order") {
  Tensor a({3}, {1.0, 2.0, 3.0});
  Tensor b({3}, {4.0, 5.0, 6.0});
  CHECK(inner_product(a, b) == 32.0);

  Tensor c = a;
  c.add_(b);
  CHECK(c.at(0) == 5.0);
  CHECK(c.at(2) == 9.0);
  c.scale_(0.5);
  CHECK(c.at(1) == 3.5);

  Tensor wrong({2}, {1.0, 2.0});
  CHECK_THROWS_AS(c.add_(wrong), ShapeError);
}

TEST_CASE("single precision accumulate quantizes the sum") {
  Tensor a({1}, {0.1}, Precision::kSingle);
  Tensor b({1}, {0.2}, Precision::kSingle);
  a.add_(b);
  const double expect = static_cast<double>(
      static_cast<float>(static_cast<double>(0.1f) + static_cast<double>(0.2f)));
  CHECK(a.at(0) == expect);
}

TEST_CASE("bitwise_equal distinguishes bit patterns, not values") {
  Tensor pz({1}, {0.0});
  Tensor nz({1}, {-0.0});
  CHECK(pz.at(0) == nz.at(0));       // numerically equal
  CHECK_FALSE(bitwise_equal(pz, nz));  // different bits

  Tensor a({2}, {1.0, 2.0});
  Tensor b({2}, {1.0, 2.0});
  CHECK(bitwise_equal(a, b));
  b.at(1) = std::nextafter(2.0, 3.0);
  CHECK_FALSE(bitwise_equal(a, b));

  CHECK(bitwise_equal(Tensor(), Tensor()));  // both absent
  CHECK_FALSE(bitwise_equal(a, Tensor({2})));
  CHECK_FALSE(bitwise_equal(a, Tensor({2, 1}, {1.0, 2.0})));
}

TEST_CASE("all_finite flags nan and inf") {
  Tensor a({2}, {1.0, 2.0});
  CHECK(a.all_finite());
  a.at(0) = std::numeric_limits<double>::quiet_NaN();
  CHECK_FALSE(a.all_finite());
  a.at(0) = std::numeric_limits<double>::infinity();
  CHECK_FALSE(a.all_finite());
}

TEST_CASE("relative_l2 and cosine_similarity conventions") {
  Tensor a({2}, {3.0, 4.0});
  Tensor b({2}, {0.0, 3.0});
  // diff = {3, 1}, ||diff|| = sqrt(10), ||b|| = 3
  CHECK(relative_l2(a, b) == doctest::Approx(std::sqrt(10.0) / 3.0).epsilon(1e-14));
  CHECK(relative_l2(a, a) == 0.0);

  Tensor x({2}, {1.0, 0.0});
  Tensor y({2}, {0.0, 1.0});
  CHECK(cosine_similarity(x, y) == doctest::Approx(0.0));
  CHECK(cosine_similarity(x, x) == doctest::Approx(1.0));
  Tensor zero({2});
  CHECK(cosine_similarity(zero, zero) == 1.0);  // both-zero convention
  CHECK(cosine_similarity(x, zero) == 0.0);
  Tensor negx({2}, {-2.0, 0.0});
  CHECK(cosine_similarity(x, negx) == doctest::Approx(-1.0));
}

TEST_CASE("random source is deterministic and seed-sensitive") {
  RandomSource a(42), b(42), c(43);
  std::vector<uint64_t> va, vb, vc;
  for (int i = 0; i < 16; ++i) {
    va.push_back(a.next_u64());
    vb.push_back(b.next_u64());
    vc.push_back(c.next_u64());
  }
  CHECK(va == vb);
  CHECK(va != vc);
}

TEST_CASE("split streams are independent of parent draws") {
  RandomSource parent(7);
  RandomSource child_before = parent.split(3);
  for (int i = 0; i < 100; ++i) parent.next_u64();
  RandomSource child_after = parent.split(3);
  // Splitting is a pure function of the key, not of how many draws the
  // parent has made.
  for (int i = 0; i < 8; ++i) {
    CHECK(child_before.next_u64() == child_after.next_u64());
  }

  RandomSource s1 = RandomSource(7).split(1);
  RandomSource s2 = RandomSource(7).split(2);
  CHECK(s1.next_u64() != s2.next_u64());

  RandomSource la = RandomSource(7).split("init");
  RandomSource lb = RandomSource(7).split("init");
  RandomSource lc = RandomSource(7).split("data");
  uint64_t xa = la.next_u64();
  CHECK(xa == lb.next_u64());
  CHECK(xa != lc.next_u64());
}

TEST_CASE("uniform stays in range and fills it") {
  RandomSource rng(11);
  double lo = 1.0, hi = 0.0;
  for (int i = 0; i < 4096; ++i) {
    double u = rng.uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    lo = std::min(lo, u);
    hi = std::max(hi, u);
  }
  CHECK(lo < 0.01);
  CHECK(hi > 0.99);

  double v = rng.uniform(-2.0, 5.0);
  CHECK(v >= -2.0);
  CHECK(v < 5.0);
}

TEST_CASE("uniform_int covers the half-open range") {
  RandomSource rng(13);
  std::set<int64_t> seen;
  for (int i = 0; i < 2000; ++i) {
    int64_t v = rng.uniform_int(-3, 4);
    CHECK(v >= -3);
    CHECK(v < 4);
    seen.insert(v);
  }
  CHECK(seen.size() == 7);  // all of -3..3 appear
}

TEST_CASE("normal draws have sane moments") {
  RandomSource rng(17);
  const int n = 20000;
  double sum = 0.0, sq = 0.0;
  for (int i = 0; i < n; ++i) {
    double x = rng.normal();
    sum += x;
    sq += x * x;
  }
  const double mean = sum / n;
  const double var = sq / n - mean * mean;
  CHECK(std::abs(mean) < 0.05);
  CHECK(std::abs(var - 1.0) < 0.1);
}

TEST_CASE("finite difference checker accepts the true gradient") {
  // f(x) = {x0 * x1, x0 + x1};  J^T u = {x1 u0 + u1, x0 u0 + u1}.
  auto f = [](const Tensor& x) {
    return Tensor({2}, {x.at(0) * x.at(1), x.at(0) + x.at(1)});
  };
  Tensor x({2}, {1.3, -0.7});
  Tensor u({2}, {0.5, 2.0});
  Tensor grad({2}, {x.at(1) * u.at(0) + u.at(1), x.at(0) * u.at(0) + u.at(1)});
  CHECK(finite_diff_vjp_check(f, x, u, grad) < 1e-9);

  Tensor ref = finite_diff_vjp(f, x, u);
  CHECK(relative_l2(ref, grad) < 1e-9);
}

TEST_CASE("finite difference checker rejects wrong and non-finite gradients") {
  auto f = [](const Tensor& x) {
    return Tensor({1}, {x.at(0) * x.at(0)});
  };
  Tensor x({1}, {0.9});
  Tensor u({1}, {1.0});
  Tensor wrong({1}, {2.0 * x.at(0) + 0.1});
  CHECK(finite_diff_vjp_check(f, x, u, wrong) > 1e-3);

  Tensor nan_grad({1}, {1.8});
  nan_grad.at(0) = std::numeric_limits<double>::quiet_NaN();
  CHECK(std::isinf(finite_diff_vjp_check(f, x, u, nan_grad)));
}
