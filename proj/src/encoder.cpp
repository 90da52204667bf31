#include "mf/encoder.hpp"

namespace mf {

template <typename T>
Encoder<T>::Encoder(const std::string& name, const EncoderConfig& cfg, Rng& rng)
    : cfg_(cfg),
      patch_embed_(name + ".patch_embed", cfg.in_channels,
                   cfg.stages[0].channels, 7, 4, 3, rng) {
  for (size_t s = 0; s < 3; ++s) {
    const EncoderStage& st = cfg.stages[s];
    if (st.channels % st.heads != 0)
      throw ConfigError(str_cat("encoder '", name, "' stage ", s + 1,
                                ": heads ", st.heads, " do not divide channels ",
                                st.channels));
    AttentionConfig acfg{st.channels, st.heads, st.stripe_width, cfg.lepe,
                         cfg.dense_attention};
    for (size_t b = 0; b < st.depth; ++b)
      stages_[s].emplace_back(
          str_cat(name, ".stage", s + 1, ".blk", b), acfg, cfg.mlp_ratio, rng);
    if (s < 2)
      transitions_[s] =
          Conv2dLayer<T>(str_cat(name, ".transition", s + 1), st.channels,
                         cfg.stages[s + 1].channels, 3, 2, 1, rng);
  }
}

template <typename T>
FeaturePyramid<T> Encoder<T>::forward(const Tensor<T>& image) const {
  if (image.rank() != 4)
    throw ShapeError(str_cat("encode: image must be (B,C,H,W), got ",
                             shape_str(image.shape())));
  const size_t H = image.size(2), W = image.size(3);
  if (H % 16 != 0 || W % 16 != 0)
    throw ShapeError(str_cat("encode: input ", H, "x", W,
                             " must be divisible by 16 (stride-4 embedding "
                             "plus two stride-2 transitions)"));
  if (image.size(1) != cfg_.in_channels)
    throw ShapeError(str_cat("encode: ", image.size(1), " channels, expected ",
                             cfg_.in_channels));

  FeaturePyramid<T> pyr;
  Tensor<T> x = patch_embed_.forward(image);
  size_t h = H / 4, w = W / 4;
  Tensor<T> tokens = spatial_to_tokens(x);
  for (const auto& blk : stages_[0]) tokens = blk.forward(tokens, h, w);
  pyr.f1 = tokens;
  pyr.h1 = h;
  pyr.w1 = w;

  for (size_t s = 1; s < 3; ++s) {
    Tensor<T> sp = tokens_to_spatial(tokens, h, w);
    sp = transitions_[s - 1].forward(sp);
    h /= 2;
    w /= 2;
    tokens = spatial_to_tokens(sp);
    for (const auto& blk : stages_[s]) tokens = blk.forward(tokens, h, w);
    if (s == 1) {
      pyr.f2 = tokens;
      pyr.h2 = h;
      pyr.w2 = w;
    } else {
      pyr.f3 = tokens;
      pyr.h3 = h;
      pyr.w3 = w;
    }
  }
  return pyr;
}

template <typename T>
void Encoder<T>::collect(ParamList<T>& out) const {
  patch_embed_.collect(out);
  for (size_t s = 0; s < 3; ++s) {
    for (const auto& blk : stages_[s]) blk.collect(out);
    if (s < 2) transitions_[s].collect(out);
  }
}

template class Encoder<float>;
template class Encoder<double>;
template struct EncoderBlock<float>;
template struct EncoderBlock<double>;

}  // namespace mf
