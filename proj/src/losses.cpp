#include "mf/losses.hpp"

namespace mf {

template <typename T>
FeatureExtractor<T>::FeatureExtractor(uint64_t seed,
                                      std::array<size_t, 5> channels) {
  Rng rng(seed);
  size_t in = 3;
  for (size_t i = 0; i < 5; ++i) {
    const size_t stride = i == 0 ? 1 : 2;
    convs_[i] = Conv2dLayer<T>(str_cat("feat.conv", i), in, channels[i], 3,
                               stride, 1, rng);
    in = channels[i];
  }
  // frozen by construction
  ParamList<T> params;
  for (auto& c : convs_) c.collect(params);
  set_requires_grad(params, false);
}

template <typename T>
std::vector<Tensor<T>> FeatureExtractor<T>::taps(const Tensor<T>& image) const {
  if (image.rank() != 4 || image.size(1) != 3)
    throw ShapeError(str_cat("feature extractor: expected (B,3,H,W), got ",
                             shape_str(image.shape())));
  std::vector<Tensor<T>> out;
  Tensor<T> x = image;
  for (const auto& c : convs_) {
    x = gelu(c.forward(x));
    out.push_back(x);
  }
  return out;
}

template <typename T>
Discriminator<T>::Discriminator(const std::string& name, size_t image_channels,
                                size_t pose_channels,
                                const DiscriminatorConfig& cfg, Rng& rng)
    : cfg_(cfg) {
  size_t in = image_channels + pose_channels;
  for (size_t i = 0; i < 4; ++i) {
    convs_[i] = Conv2dLayer<T>(str_cat(name, ".conv", i), in, cfg.channels[i],
                               4, 2, 1, rng);
    in = cfg.channels[i];
  }
  head_ = Conv2dLayer<T>(name + ".head", in, 1, 3, 1, 1, rng);
}

template <typename T>
typename Discriminator<T>::Out Discriminator<T>::forward(
    const Tensor<T>& image, const Tensor<T>& pose) const {
  if (image.rank() != 4 || pose.rank() != 4 || image.size(0) != pose.size(0) ||
      image.size(2) != pose.size(2) || image.size(3) != pose.size(3))
    throw ShapeError(str_cat("discriminator: image ", shape_str(image.shape()),
                             " vs pose ", shape_str(pose.shape())));
  Out out;
  Tensor<T> x = concat(std::vector<Tensor<T>>{image, pose}, 1);
  for (const auto& c : convs_) {
    x = leaky_relu(c.forward(x), static_cast<T>(cfg_.leaky_slope));
    out.taps.push_back(x);
  }
  out.logits = head_.forward(x);
  return out;
}

template <typename T>
void Discriminator<T>::collect(ParamList<T>& out) const {
  for (const auto& c : convs_) c.collect(out);
  head_.collect(out);
}

namespace {

// Expectation of (row, col) under softmax(temperature * scores) for each row
// of a (rows, HW) score matrix. Returns {ys, xs}, each (rows, 1).
template <typename T>
std::pair<Tensor<T>, Tensor<T>> soft_argmax_rows(const Tensor<T>& scores,
                                                 size_t h, size_t w,
                                                 T temperature) {
  const size_t hw = h * w;
  Tensor<T> probs = softmax(scale(scores, temperature), -1);
  Tensor<T> row_coord = Tensor<T>::zeros({hw, 1});
  Tensor<T> col_coord = Tensor<T>::zeros({hw, 1});
  for (size_t i = 0; i < hw; ++i) {
    row_coord.values()[i] = static_cast<T>(i / w);
    col_coord.values()[i] = static_cast<T>(i % w);
  }
  return {matmul(probs, row_coord), matmul(probs, col_coord)};
}

}  // namespace

template <typename T>
Tensor<T> soft_argmax_2d(const Tensor<T>& scores, size_t h, size_t w,
                         T temperature) {
  if (temperature <= T(0))
    throw ValueError("soft_argmax_2d: temperature must be positive");
  if (scores.numel() != h * w)
    throw ShapeError(str_cat("soft_argmax_2d: ", scores.numel(),
                             " scores vs grid ", h, "x", w));
  Tensor<T> flat = reshape(scores, {1, h * w});
  auto [ys, xs] = soft_argmax_rows(flat, h, w, temperature);
  return reshape(concat(std::vector<Tensor<T>>{ys, xs}, 1), {2});
}

template <typename T>
Tensor<T> mutual_learning_loss(const std::vector<StagePair<T>>& pairs,
                               T temperature) {
  if (temperature <= T(0))
    throw ValueError("mutual_learning_loss: temperature must be positive");
  if (pairs.empty())
    throw ValueError("mutual_learning_loss: no stage pairs");
  Tensor<T> total;
  size_t batch = 0;
  for (const StagePair<T>& p : pairs) {
    if (p.o_w.shape() != p.o_g.shape())
      throw ShapeError(str_cat("mutual_learning_loss: branch shapes ",
                               shape_str(p.o_w.shape()), " vs ",
                               shape_str(p.o_g.shape())));
    const size_t B = p.o_w.size(0);
    const size_t hw = p.h * p.w;
    batch = B;
    const T ynorm = p.h > 1 ? T(1) / static_cast<T>(p.h - 1) : T(0);
    const T xnorm = p.w > 1 ? T(1) / static_cast<T>(p.w - 1) : T(0);

    Tensor<T> own_y = Tensor<T>::zeros({hw, 1});
    Tensor<T> own_x = Tensor<T>::zeros({hw, 1});
    for (size_t i = 0; i < hw; ++i) {
      own_y.values()[i] = static_cast<T>(i / p.w);
      own_x.values()[i] = static_cast<T>(i % p.w);
    }

    auto w_samples = split(p.o_w, 0, std::vector<size_t>(B, 1));
    auto g_samples = split(p.o_g, 0, std::vector<size_t>(B, 1));
    for (size_t b = 0; b < B; ++b) {
      Tensor<T> ow =
          l2_normalize_rows(reshape(w_samples[b], {hw, p.o_w.size(2)}),
                            static_cast<T>(1e-12));
      Tensor<T> og =
          l2_normalize_rows(reshape(g_samples[b], {hw, p.o_g.size(2)}),
                            static_cast<T>(1e-12));
      Tensor<T> sim = matmul(ow, og, /*transpose_b=*/true);  // (HW, HW)
      auto [ys, xs] = soft_argmax_rows(sim, p.h, p.w, temperature);
      Tensor<T> dy = scale(abs_op(sub(ys, own_y)), ynorm);
      Tensor<T> dx = scale(abs_op(sub(xs, own_x)), xnorm);
      Tensor<T> stage_loss = add(reduce_sum(dy), reduce_sum(dx));
      total = total.defined() ? add(total, stage_loss) : stage_loss;
    }
  }
  return scale(total, T(1) / static_cast<T>(batch));
}

template <typename T>
Tensor<T> reconstruction_loss(const Tensor<T>& i_out, const Tensor<T>& i_gt,
                              const FeatureExtractor<T>& fx) {
  if (i_out.shape() != i_gt.shape())
    throw ShapeError(str_cat("reconstruction_loss: ", shape_str(i_out.shape()),
                             " vs ", shape_str(i_gt.shape())));
  auto out_taps = fx.taps(i_out);
  auto gt_taps = fx.taps(i_gt);
  Tensor<T> total;
  for (size_t i = 0; i < out_taps.size(); ++i) {
    Tensor<T> term = reduce_mean(abs_op(sub(out_taps[i], gt_taps[i])));
    total = total.defined() ? add(total, term) : term;
  }
  return total;
}

template <typename T>
Tensor<T> feature_matching_loss(const Discriminator<T>& d,
                                const Tensor<T>& i_out, const Tensor<T>& i_gt,
                                const Tensor<T>& pose) {
  auto fake = d.forward(i_out, pose);
  std::vector<Tensor<T>> real_taps;
  {
    NoGradScope<T> ng;
    auto real = d.forward(i_gt, pose);
    real_taps = std::move(real.taps);
  }
  Tensor<T> total;
  for (size_t i = 0; i < fake.taps.size(); ++i) {
    Tensor<T> term = reduce_mean(abs_op(sub(fake.taps[i], real_taps[i])));
    total = total.defined() ? add(total, term) : term;
  }
  return total;
}

template <typename T>
Tensor<T> style_loss(const Tensor<T>& i_out, const Tensor<T>& i_gt,
                     const FeatureExtractor<T>& fx) {
  if (i_out.shape() != i_gt.shape())
    throw ShapeError(str_cat("style_loss: ", shape_str(i_out.shape()), " vs ",
                             shape_str(i_gt.shape())));
  auto out_taps = fx.taps(i_out);
  auto gt_taps = fx.taps(i_gt);
  const size_t B = i_out.size(0);
  Tensor<T> total;
  for (size_t t = 0; t < out_taps.size(); ++t) {
    const size_t C = out_taps[t].size(1);
    const size_t hw = out_taps[t].size(2) * out_taps[t].size(3);
    const T inv_m = T(1) / static_cast<T>(C * C);
    auto out_s = split(out_taps[t], 0, std::vector<size_t>(B, 1));
    auto gt_s = split(gt_taps[t], 0, std::vector<size_t>(B, 1));
    for (size_t b = 0; b < B; ++b) {
      Tensor<T> fo = reshape(out_s[b], {C, hw});
      Tensor<T> fg = reshape(gt_s[b], {C, hw});
      Tensor<T> go = matmul(fo, fo, /*transpose_b=*/true);
      Tensor<T> gg = matmul(fg, fg, /*transpose_b=*/true);
      Tensor<T> term = scale(reduce_sum(abs_op(sub(go, gg))), inv_m);
      total = total.defined() ? add(total, term) : term;
    }
  }
  return scale(total, T(1) / static_cast<T>(B));
}

template <typename T>
HingeLoss<T> hinge_adversarial(const Tensor<T>& d_real_logits,
                               const Tensor<T>& d_fake_logits) {
  // h(t) = min(0, -1+t)
  Tensor<T> real_term =
      reduce_mean(minimum_scalar(add_scalar(d_real_logits, T(-1)), T(0)));
  Tensor<T> fake_term = reduce_mean(
      minimum_scalar(add_scalar(scale(d_fake_logits, T(-1)), T(-1)), T(0)));
  HingeLoss<T> out;
  out.loss_d = add(scale(real_term, T(-1)), scale(fake_term, T(-1)));
  out.loss_g = scale(reduce_mean(d_fake_logits), T(-1));
  return out;
}

template <typename T>
Tensor<T> tv_loss(const Tensor<T>& flow) {
  if (flow.rank() != 4 || flow.size(1) != 2)
    throw ShapeError(str_cat("tv_loss: expected (B,2,H,W) flow, got ",
                             shape_str(flow.shape())));
  const size_t B = flow.size(0), H = flow.size(2), W = flow.size(3);
  Tensor<T> total;
  if (W > 1) {
    auto cols = split(flow, 3, {W - 1, 1});
    auto cols2 = split(flow, 3, {1, W - 1});
    total = reduce_sum(abs_op(sub(cols2[1], cols[0])));
  }
  if (H > 1) {
    auto rows = split(flow, 2, {H - 1, 1});
    auto rows2 = split(flow, 2, {1, H - 1});
    Tensor<T> v = reduce_sum(abs_op(sub(rows2[1], rows[0])));
    total = total.defined() ? add(total, v) : v;
  }
  if (!total.defined()) return Tensor<T>::scalar(T(0));
  return scale(total, T(1) / static_cast<T>(B * H * W));
}

template <typename T>
Tensor<T> mask_loss(const Tensor<T>& m_out, const Tensor<T>& m_gt) {
  if (m_out.shape() != m_gt.shape())
    throw ShapeError(str_cat("mask_loss: ", shape_str(m_out.shape()), " vs ",
                             shape_str(m_gt.shape())));
  return reduce_mean(abs_op(sub(m_out, m_gt)));
}

template <typename T>
TotalLoss<T> total_loss(const LossTerms<T>& t, const LossWeights& w) {
  Tensor<T> total = scale(t.rec, static_cast<T>(w.rec));
  total = add(total, scale(t.fm, static_cast<T>(w.fm)));
  total = add(total, scale(t.adv_g, static_cast<T>(w.adv)));
  total = add(total, scale(t.mutual, static_cast<T>(w.mu)));
  total = add(total, scale(t.tv, static_cast<T>(w.tv)));
  total = add(total, scale(t.mask, static_cast<T>(w.mask)));
  total = add(total, scale(t.style, static_cast<T>(w.style)));
  TotalLoss<T> out;
  out.total = total;
  out.bundle.rec = t.rec.item();
  out.bundle.fm = t.fm.item();
  out.bundle.style = t.style.item();
  out.bundle.adv_g = t.adv_g.item();
  out.bundle.mutual = t.mutual.item();
  out.bundle.tv = t.tv.item();
  out.bundle.mask = t.mask.item();
  out.bundle.total = total.item();
  return out;
}

#define MF_INSTANTIATE_LOSSES(T)                                              \
  template class FeatureExtractor<T>;                                         \
  template class Discriminator<T>;                                            \
  template Tensor<T> soft_argmax_2d<T>(const Tensor<T>&, size_t, size_t, T);  \
  template Tensor<T> mutual_learning_loss<T>(const std::vector<StagePair<T>>&, \
                                             T);                              \
  template Tensor<T> reconstruction_loss<T>(const Tensor<T>&, const Tensor<T>&, \
                                            const FeatureExtractor<T>&);      \
  template Tensor<T> feature_matching_loss<T>(                                \
      const Discriminator<T>&, const Tensor<T>&, const Tensor<T>&,            \
      const Tensor<T>&);                                                      \
  template Tensor<T> style_loss<T>(const Tensor<T>&, const Tensor<T>&,        \
                                   const FeatureExtractor<T>&);               \
  template HingeLoss<T> hinge_adversarial<T>(const Tensor<T>&,                \
                                             const Tensor<T>&);               \
  template Tensor<T> tv_loss<T>(const Tensor<T>&);                            \
  template Tensor<T> mask_loss<T>(const Tensor<T>&, const Tensor<T>&);        \
  template TotalLoss<T> total_loss<T>(const LossTerms<T>&, const LossWeights&);

MF_INSTANTIATE_LOSSES(float)
MF_INSTANTIATE_LOSSES(double)

}  // namespace mf
