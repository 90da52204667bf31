#include <cmath>

#include "doctest.h"
#include "mf/gradcheck.hpp"
#include "mf/ops.hpp"

using namespace mf;
using Td = Tensor<double>;

TEST_CASE("softmax of equal logits is uniform") {
  Td x = Td::zeros({3});
  Td y = softmax(x, 0);
  for (double v : y.values()) CHECK(v == doctest::Approx(1.0 / 3).epsilon(1e-12));
}

TEST_CASE("softmax rows are non-negative and sum to one") {
  Rng rng(3);
  Td x = Td::randn({4, 7}, rng, 3.0);
  Td y = softmax(x, -1);
  for (size_t r = 0; r < 4; ++r) {
    double sum = 0;
    for (size_t c = 0; c < 7; ++c) {
      CHECK(y.at({r, c}) >= 0.0);
      sum += y.at({r, c});
    }
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-6));
  }
}

TEST_CASE("layer_norm slices have mean 0 and variance 1") {
  Rng rng(4);
  Td x = Td::randn({2, 5, 8}, rng, 2.5);
  Td y = layer_norm(x, -1, 1e-10);
  for (size_t b = 0; b < 2; ++b)
    for (size_t t = 0; t < 5; ++t) {
      double mean = 0, var = 0;
      for (size_t c = 0; c < 8; ++c) mean += y.at({b, t, c});
      mean /= 8;
      for (size_t c = 0; c < 8; ++c) {
        const double d = y.at({b, t, c}) - mean;
        var += d * d;
      }
      var /= 8;
      CHECK(mean == doctest::Approx(0.0).epsilon(1e-9));
      CHECK(var == doctest::Approx(1.0).epsilon(1e-6));
    }
  CHECK_THROWS_AS(layer_norm(x, -1, 0.0), ValueError);
  CHECK_THROWS_AS(layer_norm(x, 5, 1e-5), ShapeError);
}

TEST_CASE("nearest_upsample_2x replicates 2x2 blocks") {
  Td x = Td::from({1, 1, 2, 2}, {1, 2, 3, 4});
  Td y = nearest_upsample_2x(x);
  const std::vector<double> want{1, 1, 2, 2, 1, 1, 2, 2,
                                 3, 3, 4, 4, 3, 3, 4, 4};
  CHECK(y.values() == want);
}

TEST_CASE("conv2d rejects non-4D input") {
  Td x = Td::zeros({3, 5, 5});
  Td w = Td::zeros({2, 3, 3, 3});
  CHECK_THROWS_AS(conv2d(x, w, Td(), 1, 1), ShapeError);
}

TEST_CASE("conv2d gradient vs finite differences (1x2x5x5, 3x3 kernel)") {
  Rng rng(11);
  Td x = Td::randn({1, 2, 5, 5}, rng);
  Td w = Td::randn({2, 2, 3, 3}, rng, 0.5);
  Td b = Td::randn({2}, rng, 0.2);
  x.set_requires_grad(true);
  w.set_requires_grad(true);
  b.set_requires_grad(true);
  auto fn = [](const std::vector<Td>& in) {
    Td y = conv2d(in[0], in[1], in[2], 1, 1);
    Rng wrng(77);
    return reduce_sum(mul(y, Td::randn(y.shape(), wrng)));
  };
  auto res = gradcheck::check(fn, {x, w, b});
  CHECK_MESSAGE(res.ok, res.worst);
}

TEST_CASE("grid_sample with zero flow is the identity") {
  Rng rng(5);
  Td f = Td::randn({2, 3, 4, 5}, rng);
  Td flow = Td::zeros({2, 2, 4, 5});
  Td out = grid_sample_bilinear(f, flow);
  for (size_t i = 0; i < f.numel(); ++i)
    CHECK(out.values()[i] == doctest::Approx(f.values()[i]).epsilon(1e-12));
}

TEST_CASE("grid_sample constant (+1,0) flow shifts a ramp left") {
  // feature[y][x] = x; sampling at x+1 pulls the value one pixel to the
  // right of each location, clamping at the border column
  const size_t H = 3, W = 5;
  Td f = Td::zeros({1, 1, H, W});
  for (size_t y = 0; y < H; ++y)
    for (size_t x = 0; x < W; ++x) f.at({0, 0, y, x}) = double(x);
  Td flow = Td::zeros({1, 2, H, W});
  for (size_t i = 0; i < H * W; ++i) flow.values()[i] = 1.0;  // dx channel
  Td out = grid_sample_bilinear(f, flow);

  // manual bilinear oracle at every pixel
  for (size_t y = 0; y < H; ++y)
    for (size_t x = 0; x < W; ++x) {
      const double xs = std::min(double(W - 1), double(x) + 1.0);
      CHECK(out.at({0, 0, y, x}) == doctest::Approx(xs).epsilon(1e-12));
    }
}

TEST_CASE("grid_sample flow/feature shape mismatch is a dimension error") {
  Td f = Td::zeros({1, 1, 4, 4});
  CHECK_THROWS_AS(grid_sample_bilinear(f, Td::zeros({1, 2, 4, 5})), ShapeError);
  CHECK_THROWS_AS(grid_sample_bilinear(f, Td::zeros({1, 1, 4, 4})), ShapeError);
}

TEST_CASE("grid_sample gradient wrt flow on a 1x1x4x4 feature") {
  Rng rng(21);
  Td f = Td::randn({1, 1, 4, 4}, rng);
  Td flow = Td::zeros({1, 2, 4, 4});
  for (double& v : flow.values())
    v = (rng.uniform() < 0.5 ? 1.0 : -1.0) * rng.uniform(0.1, 0.4);
  f.set_requires_grad(true);
  flow.set_requires_grad(true);
  auto fn = [](const std::vector<Td>& in) {
    Td y = grid_sample_bilinear(in[0], in[1]);
    Rng wrng(31);
    return reduce_sum(mul(y, Td::randn(y.shape(), wrng)));
  };
  auto res = gradcheck::check(fn, {f, flow});
  CHECK_MESSAGE(res.ok, res.worst);
  CHECK(res.max_rel_err < 1e-4);
}

TEST_CASE("sigmoid and tanh stay in range; gelu fixed points") {
  Rng rng(8);
  Td x = Td::randn({64}, rng, 4.0);
  Td s = sigmoid(x);
  Td t = tanh_op(x);
  for (size_t i = 0; i < 64; ++i) {
    CHECK(s.values()[i] > 0.0);
    CHECK(s.values()[i] < 1.0);
    CHECK(t.values()[i] > -1.0);
    CHECK(t.values()[i] < 1.0);
  }
  CHECK(gelu(Td::zeros({1})).item() == doctest::Approx(0.0));
  // gelu(x) -> x for large positive x
  CHECK(gelu(Td::from({1}, {20.0})).item() == doctest::Approx(20.0));
}

TEST_CASE("split sizes must cover the axis") {
  Td x = Td::zeros({2, 6});
  CHECK_THROWS_AS(split(x, 1, {2, 2}), ShapeError);
  auto parts = split(x, 1, {2, 4});
  CHECK(parts[0].shape() == Shape{2, 2});
  CHECK(parts[1].shape() == Shape{2, 4});
}

TEST_CASE("permute round-trip restores the layout") {
  Rng rng(14);
  Td x = Td::randn({2, 3, 4}, rng);
  Td y = permute(permute(x, {2, 0, 1}), {1, 2, 0});
  CHECK(y.values() == x.values());
}
