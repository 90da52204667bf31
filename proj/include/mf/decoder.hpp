#pragma once

#include <array>
#include <vector>

#include "mf/encoder.hpp"

namespace mf {

struct DecoderStage {
  size_t depth = 2;
  size_t channels = 128;
  size_t heads = 8;
  size_t stripe_width = 4;
};

struct DecoderConfig {
  // Paper-scale stage depths are 2, 4, 12 (coarse to fine); channels mirror
  // the encoder pyramid.
  std::array<DecoderStage, 3> stages{DecoderStage{2, 128, 8, 4},
                                     DecoderStage{4, 64, 4, 2},
                                     DecoderStage{12, 32, 2, 1}};
  size_t mlp_ratio = 4;
  bool dense_attention = false;
  bool lepe = true;
};

// Doubles a flow field's grid and rescales its pixel-unit values to match.
template <typename T>
Tensor<T> upsample_flow_2x(const Tensor<T>& flow) {
  return scale(nearest_upsample_2x(flow), T(2));
}

template <typename T>
struct DecoderBlockOutput {
  Tensor<T> x;     // combined feature, (B,HW,C)
  Tensor<T> flow;  // refined flow, (B,2,h,w)
  Tensor<T> o_w;   // warping-branch output tokens
  Tensor<T> o_g;   // generation-branch output tokens
};

// One decoder block:
//   x_hat = SelfAttn(LN(x_prev)) + x_prev
//   flow  = flow_in + Conv(CrossAttn(Q=x_hat, KV=s_feat))   (flow head zero-init)
//   o_w   = Warp(s_feat, flow)
//   o_g   = Conv(CrossAttn(Q=x_hat, KV=s_feat))             (separate weights)
//   x     = MLP(LN(x_hat)) + Conv(Concat(o_w, o_g))
template <typename T>
struct DecoderBlock {
  LayerNormLayer<T> ln_self;
  CSWinAttention<T> self_attn;
  CSWinAttention<T> cross_warp;
  CSWinAttention<T> cross_gen;
  Conv2dLayer<T> flow_head;  // C -> 2, zero-initialized: starts at identity warp
  Conv2dLayer<T> gen_conv;   // C -> C
  Conv2dLayer<T> combine;    // 2C -> C
  LayerNormLayer<T> ln_mlp;
  Mlp<T> mlp;

  DecoderBlock() = default;
  DecoderBlock(const std::string& name, const AttentionConfig& acfg,
               size_t mlp_ratio, Rng& rng);

  DecoderBlockOutput<T> forward(const Tensor<T>& x_prev,
                                const Tensor<T>& s_feat,
                                const Tensor<T>& flow_in, size_t h,
                                size_t w) const;

  void collect(ParamList<T>& out) const;
};

template <typename T>
struct StagePair {
  Tensor<T> o_w, o_g;  // last block of the stage, (B,HW,C)
  size_t h = 0, w = 0;
};

template <typename T>
struct DecodeResult {
  Tensor<T> o_de;                   // final tokens at 1/4 resolution
  Tensor<T> f3;                     // final-stage flow at 1/4 resolution
  std::vector<StagePair<T>> pairs;  // one per stage, coarse to fine
  size_t h = 0, w = 0;              // grid of o_de
};

// Three-stage decoder. Stage 1 runs at 1/16 resolution with x = T3 and
// s_feat = S3 and zero initial flow; between stages the feature is
// upsampled (nearest x2 + conv halving channels), concatenated with the
// matching pose feature and reduced by a 1x1 conv, and the flow is
// upsampled x2 with values doubled. Stage 2 matches S2, stage 3 matches S1.
template <typename T>
class Decoder {
 public:
  Decoder() = default;
  Decoder(const std::string& name, const DecoderConfig& cfg, Rng& rng);

  DecodeResult<T> forward(const FeaturePyramid<T>& src,
                          const FeaturePyramid<T>& pose) const;

  void collect(ParamList<T>& out) const;
  const DecoderConfig& config() const { return cfg_; }

 private:
  DecoderConfig cfg_;
  std::array<std::vector<DecoderBlock<T>>, 3> stages_;
  std::array<Conv2dLayer<T>, 2> upsample_convs_;  // after nearest x2
  std::array<Conv2dLayer<T>, 2> skip_reduce_;     // 1x1 on concat with T_i
};

template <typename T>
struct FusionOutput {
  Tensor<T> i_out;  // (B,3,H,W) in [-1,1]
  Tensor<T> m_f;    // fusion mask, (B,1,H,W) in (0,1)
  Tensor<T> f_f;    // final flow, (B,2,H,W)
  Tensor<T> i_f;    // generated RGB, (B,3,H,W) in (-1,1)
  Tensor<T> m_out;  // person mask, (B,1,H,W) in (0,1)
};

// Blends warped source pixels with generated pixels:
//   i_out = m_f * Warp(i_s, f_f) + (1 - m_f) * i_f
template <typename T>
Tensor<T> fusion_composite(const Tensor<T>& m_f, const Tensor<T>& i_s,
                           const Tensor<T>& f_f, const Tensor<T>& i_f);

// Pixel-level head: upsamples the decoder output to image resolution with
// two (nearest x2 + 3x3 conv) steps, refines the final flow, and predicts
// the fusion mask, the generated RGB image and the person mask.
template <typename T>
class FusionBlock {
 public:
  FusionBlock() = default;
  FusionBlock(const std::string& name, size_t in_channels, Rng& rng);

  FusionOutput<T> forward(const Tensor<T>& o_de, size_t h, size_t w,
                          const Tensor<T>& f3,
                          const Tensor<T>& source_image) const;

  void collect(ParamList<T>& out) const;

 private:
  Conv2dLayer<T> up1_, up2_;
  Conv2dLayer<T> flow_head_;  // zero-initialized
  Conv2dLayer<T> mask_f_head_, rgb_head_, mask_out_head_;
};

// m ⊙ fg + (1-m) ⊙ bg with a single-channel mask broadcast over RGB.
template <typename T>
Tensor<T> composite_background(const Tensor<T>& i_out, const Tensor<T>& m_out,
                               const Tensor<T>& background);

}  // namespace mf
