#pragma once

#include "mf/nn.hpp"

namespace mf {

struct AttentionConfig {
  size_t channels = 0;
  size_t num_heads = 2;    // even: first half horizontal, second half vertical
  size_t stripe_width = 1;
  bool lepe = true;        // depthwise 3x3 positional term on V
  bool dense = false;      // ablation: single global stripe for all heads

  size_t head_dim() const { return channels / num_heads; }
};

// Cross-shaped-window multi-head attention. Queries come from q_src, keys
// and values from kv_src; self-attention is the q_src == kv_src case.
//
// Tokens are laid out row-major over an (h, w) grid. Half the heads attend
// within horizontal stripes of `stripe_width` rows, the other half within
// vertical stripes of `stripe_width` columns. Per stripe the output is
// Softmax(Q K^T / sqrt(d)) V; the LePE positional term (a depthwise 3x3
// convolution of the full V map) is added before the output projection.
// Grids not divisible by the stripe width are zero-padded right/bottom for
// the attention and cropped afterward; padded keys are masked out of the
// softmax.
template <typename T>
class CSWinAttention {
 public:
  CSWinAttention() = default;
  CSWinAttention(const std::string& name, const AttentionConfig& cfg, Rng& rng);

  Tensor<T> forward(const Tensor<T>& q_src, const Tensor<T>& kv_src, size_t h,
                    size_t w) const;

  void collect(ParamList<T>& out) const;
  const AttentionConfig& config() const { return cfg_; }

  // Test hook: when set, forward() stores the softmax maps of each half,
  // shaped (groups, tokens, tokens).
  bool capture_probs = false;
  mutable std::vector<Tensor<T>> captured_probs;

  // weights kept public so oracle tests can re-derive the math
  Linear<T> wq, wk, wv, wo;
  DepthwiseConv3x3Layer<T> lepe;

 private:
  Tensor<T> stripe_half(const Tensor<T>& q, const Tensor<T>& k,
                        const Tensor<T>& v, size_t h, size_t w, size_t sw,
                        bool horizontal, size_t heads_in_half) const;

  AttentionConfig cfg_;
};

}  // namespace mf
