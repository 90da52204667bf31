#pragma once

#include "mf/decoder.hpp"

namespace mf {

struct ModelConfig {
  std::array<size_t, 3> widths{32, 64, 128};   // stage channels, fine to coarse
  std::array<size_t, 3> enc_depths{1, 2, 21};  // encoder blocks per stage
  std::array<size_t, 3> dec_depths{2, 4, 12};  // decoder blocks, coarse to fine
  std::array<size_t, 3> heads{2, 4, 8};
  std::array<size_t, 3> stripe_widths{1, 2, 4};
  size_t mlp_ratio = 4;
  size_t pose_channels = 26;
  bool dense_attention = false;
  bool lepe = true;

  EncoderConfig encoder_config(size_t in_channels) const {
    EncoderConfig e;
    e.in_channels = in_channels;
    for (size_t s = 0; s < 3; ++s)
      e.stages[s] = EncoderStage{enc_depths[s], widths[s], heads[s],
                                 stripe_widths[s]};
    e.mlp_ratio = mlp_ratio;
    e.dense_attention = dense_attention;
    e.lepe = lepe;
    return e;
  }

  DecoderConfig decoder_config() const {
    DecoderConfig d;
    // decoder stage i runs at the resolution of encoder stage 3-i
    for (size_t s = 0; s < 3; ++s) {
      const size_t e = 2 - s;
      d.stages[s] =
          DecoderStage{dec_depths[s], widths[e], heads[e], stripe_widths[e]};
    }
    d.mlp_ratio = mlp_ratio;
    d.dense_attention = dense_attention;
    d.lepe = lepe;
    return d;
  }
};

template <typename T>
struct ModelOutput {
  FusionOutput<T> fusion;
  DecodeResult<T> decode;
};

// Two weight-independent encoders (source image, target pose stick image),
// the two-branch decoder and the pixel-level fusion head.
template <typename T>
class MotionFormer {
 public:
  MotionFormer() = default;
  MotionFormer(const ModelConfig& cfg, Rng& rng)
      : cfg_(cfg),
        enc_src_("enc_src", cfg.encoder_config(3), rng),
        enc_pose_("enc_pose", cfg.encoder_config(cfg.pose_channels), rng),
        dec_("dec", cfg.decoder_config(), rng),
        fusion_("fusion", cfg.widths[0], rng) {}

  ModelOutput<T> forward(const Tensor<T>& source_image,
                         const Tensor<T>& pose_image) const {
    ModelOutput<T> out;
    FeaturePyramid<T> src = enc_src_.forward(source_image);
    FeaturePyramid<T> pose = enc_pose_.forward(pose_image);
    out.decode = dec_.forward(src, pose);
    out.fusion = fusion_.forward(out.decode.o_de, out.decode.h, out.decode.w,
                                 out.decode.f3, source_image);
    return out;
  }

  ParamList<T> parameters() const {
    ParamList<T> out;
    enc_src_.collect(out);
    enc_pose_.collect(out);
    dec_.collect(out);
    fusion_.collect(out);
    return out;
  }

  const ModelConfig& config() const { return cfg_; }
  const Encoder<T>& encoder_src() const { return enc_src_; }
  const Encoder<T>& encoder_pose() const { return enc_pose_; }
  const Decoder<T>& decoder() const { return dec_; }

 private:
  ModelConfig cfg_;
  Encoder<T> enc_src_;
  Encoder<T> enc_pose_;
  Decoder<T> dec_;
  FusionBlock<T> fusion_;
};

}  // namespace mf
