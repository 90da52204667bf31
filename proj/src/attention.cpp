#include "mf/attention.hpp"

#include <cmath>

namespace mf {

template <typename T>
CSWinAttention<T>::CSWinAttention(const std::string& name,
                                  const AttentionConfig& cfg, Rng& rng)
    : wq(name + ".wq", cfg.channels, cfg.channels, rng),
      wk(name + ".wk", cfg.channels, cfg.channels, rng),
      wv(name + ".wv", cfg.channels, cfg.channels, rng),
      wo(name + ".wo", cfg.channels, cfg.channels, rng),
      lepe(name + ".lepe", cfg.channels, rng),
      cfg_(cfg) {
  if (cfg.num_heads == 0 || cfg.num_heads % 2 != 0)
    throw ConfigError(str_cat("attention '", name, "': head count ",
                              cfg.num_heads, " must be positive and even"));
  if (cfg.channels % cfg.num_heads != 0)
    throw ConfigError(str_cat("attention '", name, "': heads ", cfg.num_heads,
                              " do not divide channels ", cfg.channels));
  if (cfg.stripe_width == 0)
    throw ConfigError(str_cat("attention '", name, "': stripe width 0"));
}

namespace {

// Zero-pads the bottom (axis 1) or right (axis 2) of a (B,H,W,C) grid.
template <typename T>
Tensor<T> pad_grid(const Tensor<T>& grid, size_t axis, size_t target) {
  const size_t have = grid.size(axis);
  if (have == target) return grid;
  Shape pad_shape = grid.shape();
  pad_shape[axis] = target - have;
  std::vector<Tensor<T>> parts{grid, Tensor<T>::zeros(pad_shape)};
  return concat(parts, axis);
}

template <typename T>
Tensor<T> crop_grid(const Tensor<T>& grid, size_t axis, size_t target) {
  const size_t have = grid.size(axis);
  if (have == target) return grid;
  return split(grid, axis, {target, have - target})[0];
}

// Additive mask making padded key tokens unreachable. Token t of a
// horizontal stripe covers original row m*sw + t/W; of a vertical stripe,
// original column m*sw + t%sw.
template <typename T>
Tensor<T> pad_key_mask(size_t batch, size_t stripes, size_t heads, size_t len,
                       size_t sw, size_t w, size_t valid, bool horizontal) {
  const size_t groups = batch * stripes * heads;
  Tensor<T> mask = Tensor<T>::zeros({groups, len, len});
  T* mv = mask.values().data();
  for (size_t g = 0; g < groups; ++g) {
    const size_t m = (g / heads) % stripes;
    for (size_t t = 0; t < len; ++t) {
      const size_t r = horizontal ? t / w : t % sw;
      if (m * sw + r >= valid) {
        for (size_t q = 0; q < len; ++q) mv[(g * len + q) * len + t] = T(-1e30);
      }
    }
  }
  return mask;
}

}  // namespace

template <typename T>
Tensor<T> CSWinAttention<T>::stripe_half(const Tensor<T>& q, const Tensor<T>& k,
                                         const Tensor<T>& v, size_t h, size_t w,
                                         size_t sw, bool horizontal,
                                         size_t nh) const {
  const size_t B = q.size(0);
  const size_t ch = q.size(2);
  const size_t d = ch / nh;

  auto arrange = [&](const Tensor<T>& t, size_t& stripes, size_t& len,
                     size_t& padded) {
    Tensor<T> grid = reshape(t, {B, h, w, ch});
    if (horizontal) {
      padded = (h + sw - 1) / sw * sw;
      grid = pad_grid(grid, 1, padded);
      stripes = padded / sw;
      len = sw * w;
      Tensor<T> r = reshape(grid, {B, stripes, sw, w, nh, d});
      r = permute(r, {0, 1, 4, 2, 3, 5});
      return reshape(r, {B * stripes * nh, len, d});
    }
    padded = (w + sw - 1) / sw * sw;
    grid = pad_grid(grid, 2, padded);
    stripes = padded / sw;
    len = h * sw;
    Tensor<T> r = reshape(grid, {B, h, stripes, sw, nh, d});
    r = permute(r, {0, 2, 4, 1, 3, 5});
    return reshape(r, {B * stripes * nh, len, d});
  };

  size_t stripes = 0, len = 0, padded = 0;
  Tensor<T> q3 = arrange(q, stripes, len, padded);
  Tensor<T> k3 = arrange(k, stripes, len, padded);
  Tensor<T> v3 = arrange(v, stripes, len, padded);

  Tensor<T> logits = scale(matmul(q3, k3, /*transpose_b=*/true),
                           static_cast<T>(1.0 / std::sqrt(double(d))));
  const size_t valid = horizontal ? h : w;
  if (padded != valid)
    logits = add(logits,
                 pad_key_mask<T>(B, stripes, nh, len, sw, w, valid, horizontal));
  Tensor<T> probs = softmax(logits, -1);
  if (capture_probs) captured_probs.push_back(probs.detach());
  Tensor<T> out = matmul(probs, v3);

  // inverse arrangement
  if (horizontal) {
    Tensor<T> r = reshape(out, {B, stripes, nh, sw, w, d});
    r = permute(r, {0, 1, 3, 4, 2, 5});
    Tensor<T> grid = reshape(r, {B, padded, w, ch});
    grid = crop_grid(grid, 1, h);
    return reshape(grid, {B, h * w, ch});
  }
  Tensor<T> r = reshape(out, {B, stripes, nh, h, sw, d});
  r = permute(r, {0, 3, 1, 4, 2, 5});
  Tensor<T> grid = reshape(r, {B, h, padded, ch});
  grid = crop_grid(grid, 2, w);
  return reshape(grid, {B, h * w, ch});
}

template <typename T>
Tensor<T> CSWinAttention<T>::forward(const Tensor<T>& q_src,
                                     const Tensor<T>& kv_src, size_t h,
                                     size_t w) const {
  if (q_src.rank() != 3 || kv_src.rank() != 3)
    throw ShapeError("attention: inputs must be (B,HW,C) token tensors");
  if (q_src.shape() != kv_src.shape())
    throw ShapeError(str_cat("attention: query tokens ",
                             shape_str(q_src.shape()), " vs key/value tokens ",
                             shape_str(kv_src.shape())));
  if (q_src.size(1) != h * w)
    throw ShapeError(str_cat("attention: ", q_src.size(1), " tokens vs grid ",
                             h, "x", w));
  if (q_src.size(2) != cfg_.channels)
    throw ShapeError(str_cat("attention: channels ", q_src.size(2),
                             " vs configured ", cfg_.channels));
  const size_t sw = cfg_.dense ? std::max(h, w) : cfg_.stripe_width;
  if (!cfg_.dense && sw > h && sw > w)
    throw ConfigError(str_cat("attention: stripe width ", sw,
                              " exceeds both extents of ", h, "x", w));
  captured_probs.clear();

  Tensor<T> q = wq.forward(q_src);
  Tensor<T> k = wk.forward(kv_src);
  Tensor<T> v = wv.forward(kv_src);

  const size_t half = cfg_.channels / 2;
  auto qs = split(q, 2, {half, half});
  auto ks = split(k, 2, {half, half});
  auto vs = split(v, 2, {half, half});
  const size_t nh = cfg_.num_heads / 2;

  Tensor<T> out_h = stripe_half(qs[0], ks[0], vs[0], h, w,
                                cfg_.dense ? h : sw, /*horizontal=*/true, nh);
  Tensor<T> out_v = stripe_half(qs[1], ks[1], vs[1], h, w,
                                cfg_.dense ? w : sw, /*horizontal=*/false, nh);
  Tensor<T> out = concat(std::vector<Tensor<T>>{out_h, out_v}, 2);

  if (cfg_.lepe) {
    Tensor<T> pos = lepe.forward(tokens_to_spatial(v, h, w));
    out = add(out, spatial_to_tokens(pos));
  }
  return wo.forward(out);
}

template <typename T>
void CSWinAttention<T>::collect(ParamList<T>& out) const {
  wq.collect(out);
  wk.collect(out);
  wv.collect(out);
  wo.collect(out);
  lepe.collect(out);
}

template class CSWinAttention<float>;
template class CSWinAttention<double>;

}  // namespace mf
