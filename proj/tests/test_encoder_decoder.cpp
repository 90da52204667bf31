#include <set>

#include "doctest.h"
#include "mf/gradcheck.hpp"
#include "mf/model.hpp"

using namespace mf;
using Td = Tensor<double>;
using Tf = Tensor<float>;

namespace {

ModelConfig tiny_model_config() {
  ModelConfig cfg;
  cfg.widths = {8, 16, 32};
  cfg.enc_depths = {1, 1, 1};
  cfg.dec_depths = {1, 1, 1};
  cfg.heads = {2, 2, 4};
  cfg.stripe_widths = {1, 2, 2};
  cfg.mlp_ratio = 2;
  return cfg;
}

}  // namespace

TEST_CASE("encoder block: zeroed parameters map zero input to zero") {
  Rng rng(50);
  AttentionConfig acfg{8, 2, 2, true, false};
  EncoderBlock<double> blk("t.blk", acfg, 2, rng);
  ParamList<double> params;
  blk.collect(params);
  for (auto& p : params)
    std::fill(p->value.values().begin(), p->value.values().end(), 0.0);
  Td x = Td::zeros({1, 16, 8});
  Td y = blk.forward(x, 4, 4);
  for (double v : y.values()) CHECK(v == 0.0);
}

TEST_CASE("encoder block preserves the token shape") {
  Rng rng(51);
  AttentionConfig acfg{16, 2, 2, true, false};
  EncoderBlock<double> blk("t.blk", acfg, 2, rng);
  Td x = Td::randn({1, 64, 16}, rng);
  CHECK(blk.forward(x, 8, 8).shape() == x.shape());
}

TEST_CASE("stage transition: 8x8 -> 4x4, constant away from padding") {
  Rng rng(52);
  Conv2dLayer<double> tr("t.tr", 4, 8, 3, 2, 1, rng);
  // averaging kernel
  for (auto& v : tr.weight->value.values()) v = 1.0 / (9.0 * 4.0);
  std::fill(tr.bias->value.values().begin(), tr.bias->value.values().end(), 0.0);
  Td x = Td::full({1, 4, 8, 8}, 2.5);
  Td y = tr.forward(x);
  CHECK(y.shape() == Shape{1, 8, 4, 4});
  // rows/cols >= 1 see no zero padding
  for (size_t c = 0; c < 8; ++c)
    for (size_t i = 1; i < 4; ++i)
      for (size_t j = 1; j < 4; ++j)
        CHECK(y.at({0, c, i, j}) == doctest::Approx(2.5).epsilon(1e-12));
}

TEST_CASE("encode pyramid resolutions are H/4, H/8, H/16") {
  Rng rng(53);
  EncoderConfig cfg;
  cfg.in_channels = 3;
  cfg.stages = {EncoderStage{1, 8, 2, 1}, EncoderStage{1, 16, 2, 2},
                EncoderStage{1, 32, 4, 2}};
  cfg.mlp_ratio = 2;
  Encoder<float> enc("t.enc", cfg, rng);

  SUBCASE("64x64 input") {
    Tf img = Tf::randn({1, 3, 64, 64}, rng);
    FeaturePyramid<float> pyr = enc.forward(img);
    CHECK(pyr.h1 == 16);
    CHECK(pyr.w1 == 16);
    CHECK(pyr.h2 == 8);
    CHECK(pyr.h3 == 4);
    CHECK(pyr.f1.shape() == Shape{1, 256, 8});
    CHECK(pyr.f2.shape() == Shape{1, 64, 16});
    CHECK(pyr.f3.shape() == Shape{1, 16, 32});
  }
  SUBCASE("256x256 input") {
    Tf img = Tf::randn({1, 3, 256, 256}, rng);
    FeaturePyramid<float> pyr = enc.forward(img);
    CHECK(pyr.h1 == 64);
    CHECK(pyr.h2 == 32);
    CHECK(pyr.h3 == 16);
  }
  SUBCASE("indivisible input is rejected with the required divisibility") {
    Tf img = Tf::zeros({1, 3, 60, 64});
    CHECK_THROWS_WITH_AS(enc.forward(img), doctest::Contains("16"), ShapeError);
  }
  SUBCASE("deterministic: same weights and input give bit-identical pyramids") {
    Tf img = Tf::randn({1, 3, 64, 64}, rng);
    FeaturePyramid<float> a = enc.forward(img);
    FeaturePyramid<float> b = enc.forward(img);
    CHECK(a.f1.values() == b.f1.values());
    CHECK(a.f3.values() == b.f3.values());
  }
}

TEST_CASE("source and pose encoders never share parameter names") {
  Rng rng(54);
  MotionFormer<float> model(tiny_model_config(), rng);
  ParamList<float> params = model.parameters();
  std::set<std::string> names;
  for (const auto& p : params) {
    CHECK(names.insert(p->name).second);  // globally unique
  }
  size_t src = 0, pose = 0;
  for (const auto& n : names) {
    if (n.rfind("enc_src.", 0) == 0) ++src;
    if (n.rfind("enc_pose.", 0) == 0) ++pose;
  }
  CHECK(src > 0);
  CHECK(src == pose);
}

TEST_CASE("end-to-end encoder gradient check at toy width (sampled)") {
  Rng rng(55);
  EncoderConfig cfg;
  cfg.in_channels = 3;
  cfg.stages = {EncoderStage{1, 16, 2, 1}, EncoderStage{1, 32, 2, 2},
                EncoderStage{2, 64, 8, 2}};
  cfg.mlp_ratio = 2;
  Encoder<double> enc("t.enc", cfg, rng);
  ParamList<double> params;
  enc.collect(params);

  Td img = Td::randn({1, 3, 32, 32}, rng);
  img.set_requires_grad(true);
  std::vector<Td> inputs{img};
  for (auto& p : params) inputs.push_back(p->value);
  auto fn = [&](const std::vector<Td>&) {
    FeaturePyramid<double> pyr = enc.forward(img);
    Rng wrng(91);
    Td y = reduce_sum(mul(pyr.f1, Td::randn(pyr.f1.shape(), wrng)));
    y = add(y, reduce_sum(mul(pyr.f2, Td::randn(pyr.f2.shape(), wrng))));
    y = add(y, reduce_sum(mul(pyr.f3, Td::randn(pyr.f3.shape(), wrng))));
    return y;
  };
  gradcheck::Options opt;
  opt.max_elems_per_input = 6;
  auto res = gradcheck::check(fn, inputs, opt);
  CHECK_MESSAGE(res.ok, res.worst);
}

TEST_CASE("decoder block: zero flow head and zero flow-in give o_w == s_feat") {
  Rng rng(56);
  AttentionConfig acfg{16, 2, 2, true, false};
  DecoderBlock<double> blk("t.dblk", acfg, 2, rng);
  Td x = Td::randn({2, 16, 16}, rng);
  Td sf = Td::randn({2, 16, 16}, rng);
  Td flow = Td::zeros({2, 2, 4, 4});
  auto out = blk.forward(x, sf, flow, 4, 4);
  for (size_t i = 0; i < sf.numel(); ++i)
    CHECK(out.o_w.values()[i] == sf.values()[i]);  // exact
  CHECK(out.o_w.shape() == out.o_g.shape());
  CHECK(out.o_w.shape() == out.x.shape());
  for (double v : out.flow.values()) CHECK(v == 0.0);
}

TEST_CASE("decoder block rejects mismatched resolutions") {
  Rng rng(57);
  AttentionConfig acfg{16, 2, 2, true, false};
  DecoderBlock<double> blk("t.dblk", acfg, 2, rng);
  Td x = Td::randn({1, 16, 16}, rng);
  Td sf = Td::randn({1, 64, 16}, rng);
  CHECK_THROWS_AS(blk.forward(x, sf, Td::zeros({1, 2, 4, 4}), 4, 4), ShapeError);
}

TEST_CASE("flow upsampling doubles constant flows exactly") {
  Tf f = Tf::zeros({1, 2, 3, 3});
  for (size_t i = 0; i < 9; ++i) {
    f.values()[i] = 1.25f;       // dx
    f.values()[9 + i] = -0.5f;   // dy
  }
  Tf up = upsample_flow_2x(f);
  CHECK(up.shape() == Shape{1, 2, 6, 6});
  for (size_t i = 0; i < 36; ++i) {
    CHECK(up.values()[i] == 2.5f);
    CHECK(up.values()[36 + i] == -1.0f);
  }
}

TEST_CASE("full decode: stage pair shapes and the zero-flow composition") {
  Rng rng(58);
  ModelConfig mcfg = tiny_model_config();
  MotionFormer<float> model(mcfg, rng);
  Tf i_s = Tf::rand_uniform({1, 3, 64, 64}, rng, -1.0f, 1.0f);
  Tf p_t = Tf::rand_uniform({1, 26, 64, 64}, rng, 0.0f, 1.0f);
  ModelOutput<float> out = model.forward(i_s, p_t);

  REQUIRE(out.decode.pairs.size() == 3);
  CHECK(out.decode.pairs[0].h == 4);
  CHECK(out.decode.pairs[1].h == 8);
  CHECK(out.decode.pairs[2].h == 16);
  for (const auto& p : out.decode.pairs) {
    CHECK(p.o_w.shape() == p.o_g.shape());
    CHECK(p.o_w.size(1) == p.h * p.w);
  }
  CHECK(out.decode.o_de.shape() == Shape{1, 256, 8});
  CHECK(out.decode.f3.shape() == Shape{1, 2, 16, 16});

  // zero-initialized flow heads: every stage flow is exactly zero and the
  // final fusion flow is too (residual telescoping from zero)
  for (float v : out.decode.f3.values()) CHECK(v == 0.0f);
  for (float v : out.fusion.f_f.values()) CHECK(v == 0.0f);

  // output ranges
  CHECK(out.fusion.i_out.shape() == Shape{1, 3, 64, 64});
  for (float v : out.fusion.m_f.values()) {
    CHECK(v > 0.0f);
    CHECK(v < 1.0f);
  }
  for (float v : out.fusion.m_out.values()) {
    CHECK(v > 0.0f);
    CHECK(v < 1.0f);
  }
  for (float v : out.fusion.i_f.values()) {
    CHECK(v > -1.0f);
    CHECK(v < 1.0f);
  }
  for (float v : out.fusion.i_out.values()) {
    CHECK(v >= -1.0f);
    CHECK(v <= 1.0f);
  }
}

TEST_CASE("one backward reaches every generator parameter") {
  Rng rng(59);
  ModelConfig mcfg = tiny_model_config();
  MotionFormer<float> model(mcfg, rng);
  ParamList<float> params = model.parameters();
  Tf i_s = Tf::randn({1, 3, 32, 32}, rng, 0.5f);
  Tf p_t = Tf::rand_uniform({1, 26, 32, 32}, rng, 0.0f, 1.0f);

  Tape<float> tape;
  {
    TapeScope<float> scope(tape);
    ModelOutput<float> out = model.forward(i_s, p_t);
    Tf loss = reduce_sum(out.fusion.i_out);
    loss = add(loss, reduce_sum(out.fusion.m_out));
    loss = add(loss, reduce_sum(out.fusion.m_f));
    loss = add(loss, reduce_sum(out.fusion.i_f));
    loss = add(loss, reduce_sum(out.fusion.f_f));
    for (const auto& p : out.decode.pairs) {
      loss = add(loss, reduce_sum(p.o_w));
      loss = add(loss, reduce_sum(p.o_g));
    }
    tape.backward(loss);
  }
  size_t missing = 0;
  for (const auto& p : params)
    if (!p->value.has_grad()) ++missing;
  CHECK(missing == 0);
}

TEST_CASE("fusion composite identities") {
  Rng rng(60);
  Tf i_s = Tf::randn({1, 3, 8, 8}, rng, 0.4f);
  Tf i_f = Tf::randn({1, 3, 8, 8}, rng, 0.4f);
  Tf zero_flow = Tf::zeros({1, 2, 8, 8});

  SUBCASE("m_f == 1 and zero flow reproduce the source exactly") {
    Tf ones = Tf::ones({1, 1, 8, 8});
    Tf out = fusion_composite(ones, i_s, zero_flow, i_f);
    for (size_t i = 0; i < out.numel(); ++i)
      CHECK(out.values()[i] == i_s.values()[i]);
  }
  SUBCASE("m_f == 0 gives the generated image") {
    Tf zeros = Tf::zeros({1, 1, 8, 8});
    Tf out = fusion_composite(zeros, i_s, zero_flow, i_f);
    for (size_t i = 0; i < out.numel(); ++i)
      CHECK(out.values()[i] == i_f.values()[i]);
  }
}

TEST_CASE("composite_background blends by the mask") {
  Tf img = Tf::full({1, 3, 4, 4}, 1.0f);
  Tf bg = Tf::full({1, 3, 4, 4}, 0.0f);
  SUBCASE("mask 1 keeps the image") {
    Tf m = Tf::ones({1, 1, 4, 4});
    Tf out = composite_background(img, m, bg);
    for (float v : out.values()) CHECK(v == 1.0f);
  }
  SUBCASE("mask 0 keeps the background") {
    Tf m = Tf::zeros({1, 1, 4, 4});
    Tf out = composite_background(img, m, bg);
    for (float v : out.values()) CHECK(v == 0.0f);
  }
  SUBCASE("mask 0.5 blends linearly") {
    Tf m = Tf::full({1, 1, 4, 4}, 0.5f);
    Tf out = composite_background(img, m, bg);
    for (float v : out.values()) CHECK(v == doctest::Approx(0.5f));
  }
  SUBCASE("shape mismatch raises a dimension error") {
    CHECK_THROWS_AS(
        composite_background(img, Tf::zeros({1, 1, 4, 5}), bg), ShapeError);
  }
}
