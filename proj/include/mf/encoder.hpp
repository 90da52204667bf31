#pragma once

#include <array>
#include <vector>

#include "mf/attention.hpp"

namespace mf {

struct EncoderStage {
  size_t depth = 1;
  size_t channels = 32;
  size_t heads = 2;
  size_t stripe_width = 1;
};

struct EncoderConfig {
  size_t in_channels = 3;
  // Paper-scale stage depths are 1, 2, 21; toy runs override them.
  std::array<EncoderStage, 3> stages{EncoderStage{1, 32, 2, 1},
                                     EncoderStage{2, 64, 4, 2},
                                     EncoderStage{21, 128, 8, 4}};
  size_t mlp_ratio = 4;
  bool dense_attention = false;
  bool lepe = true;
};

// Per-stage token maps at 1/4, 1/8 and 1/16 of the input resolution.
template <typename T>
struct FeaturePyramid {
  Tensor<T> f1, f2, f3;  // (B, HW, C) tokens, coarse last
  size_t h1 = 0, w1 = 0, h2 = 0, w2 = 0, h3 = 0, w3 = 0;
};

// Pre-norm transformer block:
//   x_hat = Attention(LN(x)) + x
//   out   = MLP(LN(x_hat)) + x_hat
template <typename T>
struct EncoderBlock {
  LayerNormLayer<T> ln1, ln2;
  CSWinAttention<T> attn;
  Mlp<T> mlp;

  EncoderBlock() = default;
  EncoderBlock(const std::string& name, const AttentionConfig& acfg,
               size_t mlp_ratio, Rng& rng)
      : ln1(name + ".ln1", acfg.channels),
        ln2(name + ".ln2", acfg.channels),
        attn(name + ".attn", acfg, rng),
        mlp(name + ".mlp", acfg.channels, acfg.channels * mlp_ratio, rng) {}

  Tensor<T> forward(const Tensor<T>& x, size_t h, size_t w) const {
    Tensor<T> n = ln1.forward(x);
    Tensor<T> x_hat = add(attn.forward(n, n, h, w), x);
    return add(mlp.forward(ln2.forward(x_hat)), x_hat);
  }

  void collect(ParamList<T>& out) const {
    ln1.collect(out);
    ln2.collect(out);
    attn.collect(out);
    mlp.collect(out);
  }
};

// Three-stage hierarchical encoder: a 7x7 stride-4 patch embedding, then
// per stage a run of blocks and a stride-2 3x3 transition that doubles
// channel capacity while halving the grid.
template <typename T>
class Encoder {
 public:
  Encoder() = default;
  Encoder(const std::string& name, const EncoderConfig& cfg, Rng& rng);

  // image (B, Cin, H, W); H and W must be divisible by 16.
  FeaturePyramid<T> forward(const Tensor<T>& image) const;

  void collect(ParamList<T>& out) const;
  const EncoderConfig& config() const { return cfg_; }

 private:
  EncoderConfig cfg_;
  Conv2dLayer<T> patch_embed_;
  std::array<std::vector<EncoderBlock<T>>, 3> stages_;
  std::array<Conv2dLayer<T>, 2> transitions_;
};

}  // namespace mf
