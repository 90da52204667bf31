#include "mf/decoder.hpp"

namespace mf {

template <typename T>
DecoderBlock<T>::DecoderBlock(const std::string& name,
                              const AttentionConfig& acfg, size_t mlp_ratio,
                              Rng& rng)
    : ln_self(name + ".ln_self", acfg.channels),
      self_attn(name + ".self_attn", acfg, rng),
      cross_warp(name + ".cross_warp", acfg, rng),
      cross_gen(name + ".cross_gen", acfg, rng),
      flow_head(name + ".flow_head", acfg.channels, 2, 3, 1, 1, rng,
                /*zero_init=*/true),
      gen_conv(name + ".gen_conv", acfg.channels, acfg.channels, 3, 1, 1, rng),
      combine(name + ".combine", 2 * acfg.channels, acfg.channels, 3, 1, 1, rng),
      ln_mlp(name + ".ln_mlp", acfg.channels),
      mlp(name + ".mlp", acfg.channels, acfg.channels * mlp_ratio, rng) {}

template <typename T>
DecoderBlockOutput<T> DecoderBlock<T>::forward(const Tensor<T>& x_prev,
                                               const Tensor<T>& s_feat,
                                               const Tensor<T>& flow_in,
                                               size_t h, size_t w) const {
  if (x_prev.shape() != s_feat.shape())
    throw ShapeError(str_cat("decoder block: x ", shape_str(x_prev.shape()),
                             " vs source feature ", shape_str(s_feat.shape())));
  Tensor<T> n = ln_self.forward(x_prev);
  Tensor<T> x_hat = add(self_attn.forward(n, n, h, w), x_prev);

  // warping branch
  Tensor<T> ca_w = cross_warp.forward(x_hat, s_feat, h, w);
  Tensor<T> flow_res = flow_head.forward(tokens_to_spatial(ca_w, h, w));
  Tensor<T> flow = add(flow_in, flow_res);
  Tensor<T> s_spatial = tokens_to_spatial(s_feat, h, w);
  Tensor<T> o_w_sp = grid_sample_bilinear(s_spatial, flow);

  // generation branch
  Tensor<T> ca_g = cross_gen.forward(x_hat, s_feat, h, w);
  Tensor<T> o_g_sp = gen_conv.forward(tokens_to_spatial(ca_g, h, w));

  Tensor<T> merged =
      combine.forward(concat(std::vector<Tensor<T>>{o_w_sp, o_g_sp}, 1));
  Tensor<T> x =
      add(mlp.forward(ln_mlp.forward(x_hat)), spatial_to_tokens(merged));

  DecoderBlockOutput<T> out;
  out.x = x;
  out.flow = flow;
  out.o_w = spatial_to_tokens(o_w_sp);
  out.o_g = spatial_to_tokens(o_g_sp);
  return out;
}

template <typename T>
void DecoderBlock<T>::collect(ParamList<T>& out) const {
  ln_self.collect(out);
  self_attn.collect(out);
  cross_warp.collect(out);
  cross_gen.collect(out);
  flow_head.collect(out);
  gen_conv.collect(out);
  combine.collect(out);
  ln_mlp.collect(out);
  mlp.collect(out);
}

template <typename T>
Decoder<T>::Decoder(const std::string& name, const DecoderConfig& cfg, Rng& rng)
    : cfg_(cfg) {
  for (size_t s = 0; s < 3; ++s) {
    const DecoderStage& st = cfg.stages[s];
    if (st.channels % st.heads != 0)
      throw ConfigError(str_cat("decoder '", name, "' stage ", s + 1,
                                ": heads ", st.heads, " do not divide channels ",
                                st.channels));
    AttentionConfig acfg{st.channels, st.heads, st.stripe_width, cfg.lepe,
                         cfg.dense_attention};
    for (size_t b = 0; b < st.depth; ++b)
      stages_[s].emplace_back(str_cat(name, ".stage", s + 1, ".blk", b), acfg,
                              cfg.mlp_ratio, rng);
    if (s < 2) {
      upsample_convs_[s] =
          Conv2dLayer<T>(str_cat(name, ".up", s + 1), st.channels,
                         cfg.stages[s + 1].channels, 3, 1, 1, rng);
      skip_reduce_[s] =
          Conv2dLayer<T>(str_cat(name, ".skip", s + 1),
                         2 * cfg.stages[s + 1].channels,
                         cfg.stages[s + 1].channels, 1, 1, 0, rng);
    }
  }
}

template <typename T>
DecodeResult<T> Decoder<T>::forward(const FeaturePyramid<T>& src,
                                    const FeaturePyramid<T>& pose) const {
  if (src.h3 != pose.h3 || src.w3 != pose.w3 || src.h1 != pose.h1 ||
      src.w1 != pose.w1)
    throw ShapeError("decode: source and pose pyramids disagree on resolution");

  const Tensor<T>* s_feats[3] = {&src.f3, &src.f2, &src.f1};
  const Tensor<T>* skips[2] = {&pose.f2, &pose.f1};
  size_t hs[3] = {src.h3, src.h2, src.h1};
  size_t ws[3] = {src.w3, src.w2, src.w1};

  DecodeResult<T> res;
  Tensor<T> x = pose.f3;
  Tensor<T> flow =
      Tensor<T>::zeros({x.size(0), 2, hs[0], ws[0]});

  for (size_t s = 0; s < 3; ++s) {
    const size_t h = hs[s], w = ws[s];
    DecoderBlockOutput<T> blk_out;
    for (const auto& blk : stages_[s]) {
      blk_out = blk.forward(x, *s_feats[s], flow, h, w);
      x = blk_out.x;
      flow = blk_out.flow;
    }
    res.pairs.push_back(StagePair<T>{blk_out.o_w, blk_out.o_g, h, w});

    if (s < 2) {
      Tensor<T> sp = tokens_to_spatial(x, h, w);
      sp = upsample_convs_[s].forward(nearest_upsample_2x(sp));
      Tensor<T> skip = tokens_to_spatial(*skips[s], hs[s + 1], ws[s + 1]);
      sp = skip_reduce_[s].forward(
          concat(std::vector<Tensor<T>>{sp, skip}, 1));
      x = spatial_to_tokens(sp);
      flow = upsample_flow_2x(flow);
    }
  }
  res.o_de = x;
  res.f3 = flow;
  res.h = hs[2];
  res.w = ws[2];
  return res;
}

template <typename T>
void Decoder<T>::collect(ParamList<T>& out) const {
  for (size_t s = 0; s < 3; ++s) {
    for (const auto& blk : stages_[s]) blk.collect(out);
    if (s < 2) {
      upsample_convs_[s].collect(out);
      skip_reduce_[s].collect(out);
    }
  }
}

template <typename T>
Tensor<T> fusion_composite(const Tensor<T>& m_f, const Tensor<T>& i_s,
                           const Tensor<T>& f_f, const Tensor<T>& i_f) {
  Tensor<T> warped = grid_sample_bilinear(i_s, f_f);
  Tensor<T> m3 = concat(std::vector<Tensor<T>>{m_f, m_f, m_f}, 1);
  Tensor<T> inv = scale(add_scalar(m3, T(-1)), T(-1));  // 1 - m
  return add(mul(m3, warped), mul(inv, i_f));
}

template <typename T>
FusionBlock<T>::FusionBlock(const std::string& name, size_t in_channels,
                            Rng& rng)
    : up1_(name + ".up1", in_channels, in_channels / 2, 3, 1, 1, rng),
      up2_(name + ".up2", in_channels / 2, in_channels / 4, 3, 1, 1, rng),
      flow_head_(name + ".flow_head", in_channels / 4, 2, 3, 1, 1, rng,
                 /*zero_init=*/true),
      mask_f_head_(name + ".mask_f_head", in_channels / 4, 1, 3, 1, 1, rng),
      rgb_head_(name + ".rgb_head", in_channels / 4, 3, 3, 1, 1, rng),
      mask_out_head_(name + ".mask_out_head", in_channels / 4, 1, 3, 1, 1,
                     rng) {}

template <typename T>
FusionOutput<T> FusionBlock<T>::forward(const Tensor<T>& o_de, size_t h,
                                        size_t w, const Tensor<T>& f3,
                                        const Tensor<T>& source_image) const {
  if (source_image.rank() != 4 || source_image.size(2) != 4 * h ||
      source_image.size(3) != 4 * w)
    throw ShapeError(str_cat("fusion: decoder grid ", h, "x", w,
                             " expects a ", 4 * h, "x", 4 * w,
                             " source image, got ",
                             shape_str(source_image.shape())));
  Tensor<T> feat = tokens_to_spatial(o_de, h, w);
  feat = gelu(up1_.forward(nearest_upsample_2x(feat)));
  feat = gelu(up2_.forward(nearest_upsample_2x(feat)));

  FusionOutput<T> out;
  out.f_f = add(flow_head_.forward(feat),
                upsample_flow_2x(upsample_flow_2x(f3)));
  out.m_f = sigmoid(mask_f_head_.forward(feat));
  out.i_f = tanh_op(rgb_head_.forward(feat));
  out.m_out = sigmoid(mask_out_head_.forward(feat));
  out.i_out = fusion_composite(out.m_f, source_image, out.f_f, out.i_f);
  return out;
}

template <typename T>
void FusionBlock<T>::collect(ParamList<T>& out) const {
  up1_.collect(out);
  up2_.collect(out);
  flow_head_.collect(out);
  mask_f_head_.collect(out);
  rgb_head_.collect(out);
  mask_out_head_.collect(out);
}

template <typename T>
Tensor<T> composite_background(const Tensor<T>& i_out, const Tensor<T>& m_out,
                               const Tensor<T>& background) {
  if (i_out.shape() != background.shape())
    throw ShapeError(str_cat("composite: image ", shape_str(i_out.shape()),
                             " vs background ", shape_str(background.shape())));
  if (m_out.rank() != 4 || m_out.size(1) != 1 ||
      m_out.size(0) != i_out.size(0) || m_out.size(2) != i_out.size(2) ||
      m_out.size(3) != i_out.size(3))
    throw ShapeError(str_cat("composite: mask ", shape_str(m_out.shape()),
                             " vs image ", shape_str(i_out.shape())));
  Tensor<T> m3 = concat(std::vector<Tensor<T>>{m_out, m_out, m_out}, 1);
  Tensor<T> inv = scale(add_scalar(m3, T(-1)), T(-1));
  return add(mul(m3, i_out), mul(inv, background));
}

#define MF_INSTANTIATE_DECODER(T)                                           \
  template struct DecoderBlock<T>;                                          \
  template class Decoder<T>;                                                \
  template class FusionBlock<T>;                                            \
  template Tensor<T> fusion_composite<T>(const Tensor<T>&, const Tensor<T>&, \
                                         const Tensor<T>&, const Tensor<T>&); \
  template Tensor<T> composite_background<T>(                               \
      const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);

MF_INSTANTIATE_DECODER(float)
MF_INSTANTIATE_DECODER(double)

}  // namespace mf
