#include <cmath>
#include <vector>

#include "doctest.h"
#include "mf/attention.hpp"
#include "mf/gradcheck.hpp"

using namespace mf;
using Td = Tensor<double>;

namespace {

// Independent dense multi-head attention oracle: plain loops over the module
// weights, every head attending over the whole map, full-map depthwise LePE.
std::vector<double> dense_attention_oracle(const CSWinAttention<double>& attn,
                                           const Td& q_src, const Td& kv_src,
                                           size_t h, size_t w) {
  const size_t hw = h * w;
  const size_t C = q_src.size(2);
  const auto& cfg = attn.config();
  const size_t N = cfg.num_heads;
  const size_t d = C / N;

  auto linear = [&](const Td& x, const Linear<double>& l) {
    const auto& wv = l.weight->value;
    const auto& bv = l.bias->value;
    std::vector<double> y(hw * C, 0.0);
    for (size_t t = 0; t < hw; ++t)
      for (size_t o = 0; o < C; ++o) {
        double acc = bv.values()[o];
        for (size_t i = 0; i < C; ++i)
          acc += x.at({0, t, i}) * wv.at({i, o});
        y[t * C + o] = acc;
      }
    return y;
  };

  const std::vector<double> q = linear(q_src, attn.wq);
  const std::vector<double> k = linear(kv_src, attn.wk);
  const std::vector<double> v = linear(kv_src, attn.wv);

  // per-head dense attention
  std::vector<double> heads(hw * C, 0.0);
  const double inv_sqrt_d = 1.0 / std::sqrt(double(d));
  for (size_t n = 0; n < N; ++n) {
    for (size_t i = 0; i < hw; ++i) {
      std::vector<double> logits(hw);
      double mx = -1e300;
      for (size_t j = 0; j < hw; ++j) {
        double dot = 0;
        for (size_t c = 0; c < d; ++c)
          dot += q[i * C + n * d + c] * k[j * C + n * d + c];
        logits[j] = dot * inv_sqrt_d;
        mx = std::max(mx, logits[j]);
      }
      double denom = 0;
      for (size_t j = 0; j < hw; ++j) {
        logits[j] = std::exp(logits[j] - mx);
        denom += logits[j];
      }
      for (size_t c = 0; c < d; ++c) {
        double acc = 0;
        for (size_t j = 0; j < hw; ++j)
          acc += logits[j] / denom * v[j * C + n * d + c];
        heads[i * C + n * d + c] = acc;
      }
    }
  }

  // full-map depthwise 3x3 positional term on V
  if (cfg.lepe) {
    const auto& lw = attn.lepe.weight->value;
    const auto& lb = attn.lepe.bias->value;
    for (size_t c = 0; c < C; ++c)
      for (size_t y = 0; y < h; ++y)
        for (size_t x = 0; x < w; ++x) {
          double acc = lb.values()[c];
          for (int ky = 0; ky < 3; ++ky)
            for (int kx = 0; kx < 3; ++kx) {
              const int iy = int(y) + ky - 1, ix = int(x) + kx - 1;
              if (iy < 0 || iy >= int(h) || ix < 0 || ix >= int(w)) continue;
              acc += v[(iy * int(w) + ix) * C + c] *
                     lw.at({c, 0, size_t(ky), size_t(kx)});
            }
          heads[(y * w + x) * C + c] += acc;
        }
  }

  // output projection
  std::vector<double> out(hw * C, 0.0);
  const auto& ow = attn.wo.weight->value;
  const auto& ob = attn.wo.bias->value;
  for (size_t t = 0; t < hw; ++t)
    for (size_t o = 0; o < C; ++o) {
      double acc = ob.values()[o];
      for (size_t i = 0; i < C; ++i) acc += heads[t * C + i] * ow.at({i, o});
      out[t * C + o] = acc;
    }
  return out;
}

}  // namespace

TEST_CASE("single-stripe cswin equals the dense oracle (heads 2 and 4)") {
  for (size_t heads : {size_t(2), size_t(4)}) {
    Rng rng(40 + heads);
    AttentionConfig cfg{16, heads, 8, true, false};  // sw == h == w == 8
    CSWinAttention<double> attn("t.attn", cfg, rng);
    Td q = Td::randn({1, 64, 16}, rng);
    Td kv = Td::randn({1, 64, 16}, rng);

    SUBCASE("") {}
    Td self_out = attn.forward(q, q, 8, 8);
    std::vector<double> want_self = dense_attention_oracle(attn, q, q, 8, 8);
    double max_err = 0;
    for (size_t i = 0; i < want_self.size(); ++i)
      max_err = std::max(max_err,
                         std::abs(self_out.values()[i] - want_self[i]));
    CHECK(max_err < 1e-6);

    Td cross_out = attn.forward(q, kv, 8, 8);
    std::vector<double> want_cross = dense_attention_oracle(attn, q, kv, 8, 8);
    max_err = 0;
    for (size_t i = 0; i < want_cross.size(); ++i)
      max_err = std::max(max_err,
                         std::abs(cross_out.values()[i] - want_cross[i]));
    CHECK(max_err < 1e-6);
  }
}

TEST_CASE("dense-attention ablation switch matches the oracle with stripes configured") {
  Rng rng(77);
  AttentionConfig cfg{16, 2, 2, true, true};  // dense overrides stripe_width 2
  CSWinAttention<double> attn("t.dense", cfg, rng);
  Td x = Td::randn({1, 64, 16}, rng);
  Td out = attn.forward(x, x, 8, 8);
  std::vector<double> want = dense_attention_oracle(attn, x, x, 8, 8);
  for (size_t i = 0; i < want.size(); ++i)
    CHECK(out.values()[i] == doctest::Approx(want[i]).epsilon(1e-9));
}

TEST_CASE("cross-attention with kv == q equals self-attention") {
  Rng rng(41);
  AttentionConfig cfg{8, 2, 2, true, false};
  CSWinAttention<double> attn("t.attn", cfg, rng);
  Td x = Td::randn({2, 16, 8}, rng);
  Td a = attn.forward(x, x, 4, 4);
  Td b = attn.forward(x, x.detach(), 4, 4);
  for (size_t i = 0; i < a.numel(); ++i)
    CHECK(a.values()[i] == doctest::Approx(b.values()[i]).epsilon(1e-12));
}

TEST_CASE("identical tokens give uniform attention weights per stripe") {
  Rng rng(42);
  AttentionConfig cfg{8, 2, 2, true, false};
  CSWinAttention<double> attn("t.attn", cfg, rng);
  Td x = Td::zeros({1, 16, 8});
  for (size_t t = 0; t < 16; ++t)
    for (size_t c = 0; c < 8; ++c) x.at({0, t, c}) = 0.3 * double(c) - 0.7;
  attn.capture_probs = true;
  attn.forward(x, x, 4, 4);
  REQUIRE(attn.captured_probs.size() == 2);
  for (const auto& probs : attn.captured_probs) {
    const size_t L = probs.size(1);
    for (size_t g = 0; g < probs.size(0); ++g)
      for (size_t i = 0; i < L; ++i)
        for (size_t j = 0; j < L; ++j)
          CHECK(probs.at({g, i, j}) ==
                doctest::Approx(1.0 / double(L)).epsilon(1e-9));
  }
}

TEST_CASE("attention rows sum to 1 on a random 8x8 map with sw=2") {
  Rng rng(43);
  AttentionConfig cfg{16, 4, 2, true, false};
  CSWinAttention<double> attn("t.attn", cfg, rng);
  Td x = Td::randn({1, 64, 16}, rng);
  attn.capture_probs = true;
  attn.forward(x, x, 8, 8);
  for (const auto& probs : attn.captured_probs) {
    for (size_t g = 0; g < probs.size(0); ++g)
      for (size_t i = 0; i < probs.size(1); ++i) {
        double sum = 0;
        for (size_t j = 0; j < probs.size(2); ++j) sum += probs.at({g, i, j});
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-6));
      }
  }
}

TEST_CASE("attention never crosses stripe boundaries (LePE disabled)") {
  // swapping two whole rows inside one horizontal stripe permutes the output
  // rows identically: both stripe partitions see only an intra-stripe
  // permutation, and attention is permutation-equivariant within a stripe
  Rng rng(44);
  AttentionConfig cfg{8, 2, 2, /*lepe=*/false, false};
  CSWinAttention<double> attn("t.attn", cfg, rng);
  const size_t h = 4, w = 4, C = 8;
  Td x = Td::randn({1, h * w, C}, rng);

  Td x_swapped = x.detach();
  for (size_t col = 0; col < w; ++col)
    for (size_t c = 0; c < C; ++c)
      std::swap(x_swapped.at({0, 0 * w + col, c}),
                x_swapped.at({0, 1 * w + col, c}));

  Td out = attn.forward(x, x, h, w);
  Td out_swapped = attn.forward(x_swapped, x_swapped, h, w);
  for (size_t col = 0; col < w; ++col)
    for (size_t c = 0; c < C; ++c) {
      CHECK(out_swapped.at({0, 0 * w + col, c}) ==
            doctest::Approx(out.at({0, 1 * w + col, c})).epsilon(1e-9));
      CHECK(out_swapped.at({0, 1 * w + col, c}) ==
            doctest::Approx(out.at({0, 0 * w + col, c})).epsilon(1e-9));
      // rows outside the permuted stripe are untouched
      CHECK(out_swapped.at({0, 3 * w + col, c}) ==
            doctest::Approx(out.at({0, 3 * w + col, c})).epsilon(1e-9));
    }
}

TEST_CASE("output shape equals query shape; config errors") {
  Rng rng(45);
  AttentionConfig odd{8, 3, 2, true, false};
  CHECK_THROWS_AS(CSWinAttention<double>("t.bad", odd, rng), ConfigError);
  AttentionConfig nondiv{10, 4, 2, true, false};
  CHECK_THROWS_AS(CSWinAttention<double>("t.bad2", nondiv, rng), ConfigError);

  AttentionConfig cfg{8, 2, 8, true, false};
  CSWinAttention<double> attn("t.attn", cfg, rng);
  Td x = Td::randn({2, 16, 8}, rng);
  CHECK_THROWS_AS(attn.forward(x, x, 4, 4), ConfigError);  // sw 8 > 4 and > 4

  AttentionConfig ok{8, 2, 2, true, false};
  CSWinAttention<double> a2("t.attn2", ok, rng);
  Td y = a2.forward(x, x, 4, 4);
  CHECK(y.shape() == x.shape());
  CHECK_THROWS_AS(a2.forward(x, Td::randn({2, 16, 4}, rng), 4, 4), ShapeError);
}

TEST_CASE("non-divisible extents: padded keys are masked, rows still sum to 1") {
  Rng rng(46);
  AttentionConfig cfg{8, 2, 2, true, false};
  CSWinAttention<double> attn("t.attn", cfg, rng);
  // 3x5 grid with sw=2 pads to 4 rows / 6 cols
  Td x = Td::randn({1, 15, 8}, rng);
  attn.capture_probs = true;
  Td y = attn.forward(x, x, 3, 5);
  CHECK(y.shape() == x.shape());
  for (const auto& probs : attn.captured_probs)
    for (size_t g = 0; g < probs.size(0); ++g)
      for (size_t i = 0; i < probs.size(1); ++i) {
        double sum = 0;
        for (size_t j = 0; j < probs.size(2); ++j) sum += probs.at({g, i, j});
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-6));
      }
}

TEST_CASE("cross-attention gradient check on a 1x16x8 input (sampled)") {
  Rng rng(47);
  AttentionConfig cfg{8, 2, 2, true, false};
  CSWinAttention<double> attn("t.attn", cfg, rng);
  ParamList<double> params;
  attn.collect(params);
  Td q = Td::randn({1, 16, 8}, rng);
  Td kv = Td::randn({1, 16, 8}, rng);
  q.set_requires_grad(true);
  kv.set_requires_grad(true);
  std::vector<Td> inputs{q, kv};
  for (auto& p : params) inputs.push_back(p->value);
  auto fn = [&](const std::vector<Td>&) {
    Td y = attn.forward(q, kv, 4, 4);
    Rng wrng(90);
    return reduce_sum(mul(y, Td::randn(y.shape(), wrng)));
  };
  gradcheck::Options opt;
  opt.max_elems_per_input = 40;
  auto res = gradcheck::check(fn, inputs, opt);
  CHECK_MESSAGE(res.ok, res.worst);
}
