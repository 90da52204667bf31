#pragma once

#include <array>

#include "mf/decoder.hpp"

namespace mf {

// Weights of the total objective.
struct LossWeights {
  double rec = 10.0;
  double fm = 10.0;
  double adv = 1.0;
  double mu = 1.0;
  double tv = 0.5;
  double mask = 1.0;
  double style = 10.0;
};

template <typename T>
struct LossBundle {
  T rec = 0, fm = 0, style = 0, adv_g = 0, adv_d = 0, mutual = 0, tv = 0,
    mask = 0, total = 0;
};

// Fixed-weight convolutional pyramid standing in for the five VGG-19 tap
// layers. Weights are drawn once from the seed and never trained; taps sit
// at full, 1/2, 1/4, 1/8 and 1/16 resolution.
template <typename T>
class FeatureExtractor {
 public:
  explicit FeatureExtractor(uint64_t seed,
                            std::array<size_t, 5> channels = {8, 12, 16, 20,
                                                              24});
  std::vector<Tensor<T>> taps(const Tensor<T>& image) const;
  size_t tap_count() const { return 5; }

 private:
  std::array<Conv2dLayer<T>, 5> convs_;
};

struct DiscriminatorConfig {
  std::array<size_t, 4> channels{64, 128, 256, 512};
  double leaky_slope = 0.2;
};

// Patch discriminator over concat(image, pose stick image): four stride-2
// 4x4 convolutions with leaky-relu, then a 3x3 head to a logit map. The
// four post-activation maps are exposed for the feature-matching loss.
template <typename T>
class Discriminator {
 public:
  Discriminator() = default;
  Discriminator(const std::string& name, size_t image_channels,
                size_t pose_channels, const DiscriminatorConfig& cfg, Rng& rng);

  struct Out {
    Tensor<T> logits;
    std::vector<Tensor<T>> taps;
  };
  Out forward(const Tensor<T>& image, const Tensor<T>& pose) const;

  void collect(ParamList<T>& out) const;

 private:
  DiscriminatorConfig cfg_;
  std::array<Conv2dLayer<T>, 4> convs_;
  Conv2dLayer<T> head_;
};

// Differentiable argmax location of a flat score map: softmax(scores *
// temperature) weighted expectation of (row, col). Returns a {2} tensor
// (y, x) in grid units.
template <typename T>
Tensor<T> soft_argmax_2d(const Tensor<T>& scores, size_t h, size_t w,
                         T temperature);

// For every location i of each stage's last warping-branch output, the
// cosine-best match among the generation-branch features should sit at i:
// penalizes the L1 distance between the soft-argmax of the similarity row
// and i's own coordinates, normalized to [0,1] per axis. Summed over
// locations and stages, averaged over the batch.
template <typename T>
Tensor<T> mutual_learning_loss(const std::vector<StagePair<T>>& pairs,
                               T temperature);

// Sum over taps of mean-L1 feature distance.
template <typename T>
Tensor<T> reconstruction_loss(const Tensor<T>& i_out, const Tensor<T>& i_gt,
                              const FeatureExtractor<T>& fx);

// Sum over discriminator taps of mean-L1; real activations are detached.
template <typename T>
Tensor<T> feature_matching_loss(const Discriminator<T>& d,
                                const Tensor<T>& i_out, const Tensor<T>& i_gt,
                                const Tensor<T>& pose);

// Gram-matrix L1 over the extractor taps, each normalized by C_i^2.
template <typename T>
Tensor<T> style_loss(const Tensor<T>& i_out, const Tensor<T>& i_gt,
                     const FeatureExtractor<T>& fx);

template <typename T>
struct HingeLoss {
  Tensor<T> loss_d;
  Tensor<T> loss_g;
};

// loss_d = -E[min(0,-1+D(real))] - E[min(0,-1-D(fake))], loss_g = -E[D(fake)]
template <typename T>
HingeLoss<T> hinge_adversarial(const Tensor<T>& d_real_logits,
                               const Tensor<T>& d_fake_logits);

// Mean absolute forward difference of both flow channels, normalized by the
// number of grid positions.
template <typename T>
Tensor<T> tv_loss(const Tensor<T>& flow);

template <typename T>
Tensor<T> mask_loss(const Tensor<T>& m_out, const Tensor<T>& m_gt);

template <typename T>
struct LossTerms {
  Tensor<T> rec, fm, style, adv_g, mutual, tv, mask;
};

template <typename T>
struct TotalLoss {
  Tensor<T> total;          // weighted sum, differentiable
  LossBundle<T> bundle;     // scalar values (adv_d filled by the caller)
};

template <typename T>
TotalLoss<T> total_loss(const LossTerms<T>& terms, const LossWeights& w);

}  // namespace mf
