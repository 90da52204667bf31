#include <cmath>

#include "doctest.h"
#include "mf/gradcheck.hpp"
#include "mf/losses.hpp"

using namespace mf;
using Td = Tensor<double>;

namespace {

// hard-argmax version of the mutual loss: for identical branches this is
// exactly 0 (each row is its own best cosine match)
double hard_mutual_oracle(const Td& ow, const Td& og, size_t h, size_t w) {
  const size_t hw = h * w;
  const size_t C = ow.size(2);
  double loss = 0;
  for (size_t i = 0; i < hw; ++i) {
    double best = -2.0;
    size_t best_j = 0;
    for (size_t j = 0; j < hw; ++j) {
      double dot = 0, ni = 0, nj = 0;
      for (size_t c = 0; c < C; ++c) {
        dot += ow.at({0, i, c}) * og.at({0, j, c});
        ni += ow.at({0, i, c}) * ow.at({0, i, c});
        nj += og.at({0, j, c}) * og.at({0, j, c});
      }
      const double cos = dot / (std::sqrt(ni) * std::sqrt(nj) + 1e-30);
      if (cos > best) {
        best = cos;
        best_j = j;
      }
    }
    loss += std::abs(double(best_j / w) - double(i / w)) / double(h - 1) +
            std::abs(double(best_j % w) - double(i % w)) / double(w - 1);
  }
  return loss;
}

Td reverse_tokens(const Td& t) {
  Td out = t.detach();
  const size_t hw = t.size(1), C = t.size(2);
  for (size_t i = 0; i < hw; ++i)
    for (size_t c = 0; c < C; ++c)
      out.at({0, i, c}) = t.at({0, hw - 1 - i, c});
  return out;
}

}  // namespace

TEST_CASE("soft_argmax_2d: delta, centroid and hard-argmax agreement") {
  SUBCASE("one-hot score at flat index 5 of a 3x3 grid") {
    for (double temp : {200.0, 500.0}) {
      Td scores = Td::zeros({9});
      scores.values()[5] = 1.0;
      Td yx = soft_argmax_2d(scores, 3, 3, temp);
      CHECK(yx.values()[0] == doctest::Approx(1.0).epsilon(1e-9));
      CHECK(yx.values()[1] == doctest::Approx(2.0).epsilon(1e-9));
    }
  }
  SUBCASE("uniform scores give the grid centroid") {
    Td scores = Td::full({9}, 0.42);
    Td yx = soft_argmax_2d(scores, 3, 3, 200.0);
    CHECK(yx.values()[0] == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(yx.values()[1] == doctest::Approx(1.0).epsilon(1e-9));
  }
  SUBCASE("temperature 200 lands within 0.05 of the hard argmax") {
    Rng rng(70);
    for (int trial = 0; trial < 20; ++trial) {
      Td scores = Td::randn({48}, rng);
      Td yx = soft_argmax_2d(scores, 6, 8, 200.0);
      size_t best = 0;
      for (size_t i = 1; i < 48; ++i)
        if (scores.values()[i] > scores.values()[best]) best = i;
      CHECK(std::abs(yx.values()[0] - double(best / 8)) < 0.05);
      CHECK(std::abs(yx.values()[1] - double(best % 8)) < 0.05);
    }
  }
  SUBCASE("temperature must be positive") {
    CHECK_THROWS_AS(soft_argmax_2d(Td::zeros({9}), 3, 3, 0.0), ValueError);
    CHECK_THROWS_AS(soft_argmax_2d(Td::zeros({9}), 3, 3, -5.0), ValueError);
  }
  SUBCASE("score count must match the grid") {
    CHECK_THROWS_AS(soft_argmax_2d(Td::zeros({8}), 3, 3, 200.0), ShapeError);
  }
}

TEST_CASE("mutual learning loss: identical branches have near-zero loss") {
  Rng rng(71);
  const size_t h = 8, w = 8, C = 8;
  Td ow = Td::randn({1, h * w, C}, rng);
  std::vector<StagePair<double>> pairs{{ow, ow.detach(), h, w}};

  CHECK(hard_mutual_oracle(ow, ow, h, w) == 0.0);  // oracle: exactly 0

  const double soft = mutual_learning_loss(pairs, 200.0).item();
  CHECK(soft >= 0.0);
  CHECK(soft < 0.01 * double(h * w));
}

TEST_CASE("mutual learning loss: reversed branch scores strictly worse") {
  Rng rng(72);
  const size_t h = 4, w = 4, C = 8;
  Td ow = Td::randn({1, h * w, C}, rng);
  Td og_rev = reverse_tokens(ow);
  std::vector<StagePair<double>> aligned{{ow, ow.detach(), h, w}};
  std::vector<StagePair<double>> reversed{{ow, og_rev, h, w}};
  const double a = mutual_learning_loss(aligned, 200.0).item();
  const double r = mutual_learning_loss(reversed, 200.0).item();
  CHECK(r > a);
  CHECK(hard_mutual_oracle(ow, og_rev, h, w) >
        hard_mutual_oracle(ow, ow, h, w));
}

TEST_CASE("mutual learning loss is invariant to positive scaling of a branch") {
  Rng rng(73);
  const size_t h = 4, w = 4, C = 6;
  Td ow = Td::randn({1, h * w, C}, rng);
  Td og = Td::randn({1, h * w, C}, rng);
  const double base =
      mutual_learning_loss({{ow, og, h, w}}, 200.0).item();
  for (double alpha : {0.5, 2.0, 10.0}) {
    Td scaled = ow.detach();
    for (double& v : scaled.values()) v *= alpha;
    const double got =
        mutual_learning_loss({{scaled, og, h, w}}, 200.0).item();
    CHECK(got == doctest::Approx(base).epsilon(1e-6));
  }
}

TEST_CASE("mutual learning loss: shape mismatch and gradient") {
  Rng rng(74);
  Td ow = Td::randn({1, 16, 4}, rng);
  Td og = Td::randn({1, 16, 8}, rng);
  CHECK_THROWS_AS(mutual_learning_loss({{ow, og, 4, 4}}, 200.0), ShapeError);

  Td og2 = Td::randn({1, 16, 4}, rng);
  ow.set_requires_grad(true);
  og2.set_requires_grad(true);
  auto fn = [&](const std::vector<Td>&) {
    // moderate temperature keeps the softmax away from saturation, where
    // gradients vanish below finite-difference resolution
    return mutual_learning_loss({{ow, og2, 4, 4}}, 8.0);
  };
  auto res = gradcheck::check(fn, {ow, og2});
  CHECK_MESSAGE(res.ok, res.worst);
}

TEST_CASE("reconstruction loss: zero at identity, symmetric, matches taps") {
  Rng rng(75);
  FeatureExtractor<double> fx(123);
  Td a = Td::randn({1, 3, 16, 16}, rng, 0.5);
  Td b = Td::randn({1, 3, 16, 16}, rng, 0.5);

  CHECK(reconstruction_loss(a, a.detach(), fx).item() == 0.0);

  const double ab = reconstruction_loss(a, b, fx).item();
  const double ba = reconstruction_loss(b, a, fx).item();
  CHECK(ab == doctest::Approx(ba).epsilon(1e-12));

  // manual evaluation from the tap outputs
  auto ta = fx.taps(a);
  auto tb = fx.taps(b);
  double want = 0;
  for (size_t t = 0; t < ta.size(); ++t) {
    double acc = 0;
    for (size_t i = 0; i < ta[t].numel(); ++i)
      acc += std::abs(ta[t].values()[i] - tb[t].values()[i]);
    want += acc / double(ta[t].numel());
  }
  CHECK(ab == doctest::Approx(want).epsilon(1e-9));
}

TEST_CASE("feature extractor: deterministic, frozen, taps shrink") {
  FeatureExtractor<double> fx1(99);
  FeatureExtractor<double> fx2(99);
  Rng rng(76);
  Td img = Td::randn({1, 3, 16, 16}, rng);
  auto t1 = fx1.taps(img);
  auto t2 = fx2.taps(img);
  REQUIRE(t1.size() == 5);
  for (size_t i = 0; i < 5; ++i) CHECK(t1[i].values() == t2[i].values());
  size_t prev = 1 << 20;
  for (const auto& t : t1) {
    CHECK(t.size(2) < prev);  // strictly decreasing resolution
    prev = t.size(2);
  }

  // weights never receive gradients
  Tape<double> tape;
  {
    TapeScope<double> scope(tape);
    Td x = img.detach();
    x.set_requires_grad(true);
    Td loss = reduce_sum(fx1.taps(x)[4]);
    tape.backward(loss);
    CHECK(x.has_grad());  // input grads still flow
  }
}

TEST_CASE("feature matching loss: zero at identity, matches the tap sum") {
  Rng rng(77);
  DiscriminatorConfig dcfg{{8, 12, 16, 20}, 0.2};
  Discriminator<double> disc("t.disc", 3, 26, dcfg, rng);
  Td img = Td::randn({1, 3, 32, 32}, rng, 0.4);
  Td img2 = Td::randn({1, 3, 32, 32}, rng, 0.4);
  Td pose = Td::rand_uniform({1, 26, 32, 32}, rng, 0.0, 1.0);

  CHECK(feature_matching_loss(disc, img, img.detach(), pose).item() ==
        doctest::Approx(0.0));

  const double got = feature_matching_loss(disc, img, img2, pose).item();
  CHECK(got >= 0.0);
  auto fake = disc.forward(img, pose);
  auto real = disc.forward(img2, pose);
  double want = 0;
  for (size_t t = 0; t < fake.taps.size(); ++t) {
    double acc = 0;
    for (size_t i = 0; i < fake.taps[t].numel(); ++i)
      acc += std::abs(fake.taps[t].values()[i] - real.taps[t].values()[i]);
    want += acc / double(fake.taps[t].numel());
  }
  CHECK(got == doctest::Approx(want).epsilon(1e-9));
}

TEST_CASE("discriminator exposes >= 3 taps and a patch logit map") {
  Rng rng(78);
  DiscriminatorConfig dcfg{{8, 12, 16, 20}, 0.2};
  Discriminator<double> disc("t.disc", 3, 26, dcfg, rng);
  Td img = Td::randn({2, 3, 64, 64}, rng);
  Td pose = Td::zeros({2, 26, 64, 64});
  auto out = disc.forward(img, pose);
  CHECK(out.taps.size() >= 3);
  CHECK(out.logits.shape() == Shape{2, 1, 4, 4});
}

TEST_CASE("gram matrix: constant-one feature and the double-loop oracle") {
  // one channel, 2x2 spatial grid of ones: G = [[4]]
  Td f = Td::ones({1, 4});
  Td g = matmul(f, f, /*transpose_b=*/true);
  CHECK(g.numel() == 1);
  CHECK(g.item() == doctest::Approx(4.0));

  Rng rng(79);
  const size_t C = 5, hw = 12;
  Td feat = Td::randn({C, hw}, rng);
  Td gm = matmul(feat, feat, true);
  for (size_t i = 0; i < C; ++i)
    for (size_t j = 0; j < C; ++j) {
      double want = 0;
      for (size_t k = 0; k < hw; ++k)
        want += feat.at({i, k}) * feat.at({j, k});
      CHECK(gm.at({i, j}) == doctest::Approx(want).epsilon(1e-6));
      CHECK(gm.at({i, j}) == doctest::Approx(gm.at({j, i})));  // symmetry
    }

  // Gram discards spatial position: permuting columns leaves it unchanged
  Td shuffled = Td::zeros({C, hw});
  std::vector<size_t> perm(hw);
  for (size_t i = 0; i < hw; ++i) perm[i] = (i * 7 + 3) % hw;
  for (size_t c = 0; c < C; ++c)
    for (size_t i = 0; i < hw; ++i)
      shuffled.at({c, i}) = feat.at({c, perm[i]});
  Td gs = matmul(shuffled, shuffled, true);
  for (size_t i = 0; i < C * C; ++i)
    CHECK(gs.values()[i] == doctest::Approx(gm.values()[i]).epsilon(1e-9));
}

TEST_CASE("style loss: zero at identity and non-negative") {
  Rng rng(80);
  FeatureExtractor<double> fx(55);
  Td a = Td::randn({2, 3, 16, 16}, rng, 0.5);
  Td b = Td::randn({2, 3, 16, 16}, rng, 0.5);
  CHECK(style_loss(a, a.detach(), fx).item() == 0.0);
  CHECK(style_loss(a, b, fx).item() > 0.0);
}

TEST_CASE("hinge adversarial closed forms") {
  SUBCASE("saturated: D(real)=+1, D(fake)=-1 gives loss_d = 0") {
    Td real = Td::ones({2, 1, 3, 3});
    Td fake = Td::full({2, 1, 3, 3}, -1.0);
    auto h = hinge_adversarial(real, fake);
    CHECK(h.loss_d.item() == doctest::Approx(0.0));
  }
  SUBCASE("at the boundary: D(real)=0, D(fake)=0 gives loss_d = 2") {
    Td z = Td::zeros({1, 1, 4, 4});
    auto h = hinge_adversarial(z, z.detach());
    CHECK(h.loss_d.item() == doctest::Approx(2.0));
  }
  SUBCASE("generator loss is exactly -mean(fake logits)") {
    Rng rng(81);
    Td real = Td::randn({1, 1, 4, 4}, rng);
    Td fake = Td::randn({1, 1, 4, 4}, rng);
    auto h = hinge_adversarial(real, fake);
    double mean = 0;
    for (double v : fake.values()) mean += v;
    mean /= double(fake.numel());
    CHECK(h.loss_g.item() == doctest::Approx(-mean).epsilon(1e-12));
  }
}

TEST_CASE("tv loss: constant flow, ramp flow, non-negative") {
  SUBCASE("constant flow has zero total variation") {
    Td f = Td::full({1, 2, 5, 7}, 3.25);
    CHECK(tv_loss(f).item() == doctest::Approx(0.0));
  }
  SUBCASE("column-index ramp in the x channel") {
    const size_t H = 3, W = 4;
    Td f = Td::zeros({1, 2, H, W});
    for (size_t y = 0; y < H; ++y)
      for (size_t x = 0; x < W; ++x) f.at({0, 0, y, x}) = double(x);
    // horizontal diffs: H*(W-1) ones; vertical: 0; scaled by 1/(HW)
    CHECK(tv_loss(f).item() ==
          doctest::Approx(double(H * (W - 1)) / double(H * W)));
  }
  SUBCASE("random flow is non-negative and differentiable") {
    Rng rng(82);
    Td f = Td::randn({2, 2, 4, 4}, rng);
    CHECK(tv_loss(f).item() >= 0.0);
    f.set_requires_grad(true);
    auto fn = [&](const std::vector<Td>&) { return tv_loss(f); };
    auto res = gradcheck::check(fn, {f});
    CHECK_MESSAGE(res.ok, res.worst);
  }
}

TEST_CASE("mask loss") {
  Td a = Td::ones({1, 1, 4, 4});
  Td b = Td::zeros({1, 1, 4, 4});
  CHECK(mask_loss(a, a.detach()).item() == doctest::Approx(0.0));
  CHECK(mask_loss(a, b).item() == doctest::Approx(1.0));

  Rng rng(83);
  Td x = Td::rand_uniform({1, 1, 5, 5}, rng, 0.0, 1.0);
  Td y = Td::rand_uniform({1, 1, 5, 5}, rng, 0.0, 1.0);
  double want = 0;
  for (size_t i = 0; i < x.numel(); ++i)
    want += std::abs(x.values()[i] - y.values()[i]);
  want /= double(x.numel());
  CHECK(mask_loss(x, y).item() == doctest::Approx(want).epsilon(1e-12));
}

TEST_CASE("total loss applies the objective weights") {
  auto scalar_terms = [](double v) {
    LossTerms<double> t;
    t.rec = Td::scalar(v);
    t.fm = Td::scalar(v);
    t.style = Td::scalar(v);
    t.adv_g = Td::scalar(v);
    t.mutual = Td::scalar(v);
    t.tv = Td::scalar(v);
    t.mask = Td::scalar(v);
    return t;
  };
  LossWeights w;
  SUBCASE("all components zero") {
    CHECK(total_loss(scalar_terms(0.0), w).total.item() == 0.0);
  }
  SUBCASE("unit components sum to 33.5 under the default weights") {
    auto out = total_loss(scalar_terms(1.0), w);
    CHECK(out.total.item() == doctest::Approx(33.5));
    CHECK(out.bundle.total == doctest::Approx(33.5));
  }
  SUBCASE("a zero-weight component drops out") {
    LossWeights w2;
    w2.tv = 0.0;
    auto a = total_loss(scalar_terms(1.0), w2);
    LossTerms<double> t = scalar_terms(1.0);
    t.tv = Td::scalar(123.0);
    auto b = total_loss(t, w2);
    CHECK(a.total.item() == doctest::Approx(b.total.item()));
  }
}

TEST_CASE("image-facing losses pass sampled gradient checks") {
  Rng rng(84);
  FeatureExtractor<double> fx(321);
  Td a = Td::randn({1, 3, 16, 16}, rng, 0.4);
  Td b = Td::randn({1, 3, 16, 16}, rng, 0.4);
  a.set_requires_grad(true);
  gradcheck::Options opt;
  opt.max_elems_per_input = 24;

  SUBCASE("reconstruction") {
    auto fn = [&](const std::vector<Td>&) {
      return reconstruction_loss(a, b, fx);
    };
    auto res = gradcheck::check(fn, {a}, opt);
    CHECK_MESSAGE(res.ok, res.worst);
  }
  SUBCASE("style") {
    auto fn = [&](const std::vector<Td>&) { return style_loss(a, b, fx); };
    auto res = gradcheck::check(fn, {a}, opt);
    CHECK_MESSAGE(res.ok, res.worst);
  }
}
