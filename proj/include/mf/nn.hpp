#pragma once

#include <cmath>
#include <string>

#include "mf/ops.hpp"
#include "mf/optim.hpp"

namespace mf {

template <typename T>
ParamPtr<T> make_param(std::string name, Tensor<T> t) {
  return std::make_shared<Parameter<T>>(std::move(name), std::move(t));
}

template <typename T>
Tensor<T> xavier_uniform(const Shape& shape, size_t fan_in, size_t fan_out,
                         Rng& rng) {
  const T limit = static_cast<T>(std::sqrt(6.0 / double(fan_in + fan_out)));
  return Tensor<T>::rand_uniform(shape, rng, -limit, limit);
}

// (B,HW,C) -> (B,C,H,W)
template <typename T>
Tensor<T> tokens_to_spatial(const Tensor<T>& x, size_t h, size_t w) {
  if (x.rank() != 3 || x.size(1) != h * w)
    throw ShapeError(str_cat("tokens_to_spatial: ", shape_str(x.shape()),
                             " vs grid ", h, "x", w));
  Tensor<T> r = reshape(x, {x.size(0), h, w, x.size(2)});
  return permute(r, {0, 3, 1, 2});
}

// (B,C,H,W) -> (B,HW,C)
template <typename T>
Tensor<T> spatial_to_tokens(const Tensor<T>& x) {
  if (x.rank() != 4)
    throw ShapeError("spatial_to_tokens: input must be 4D");
  Tensor<T> p = permute(x, {0, 2, 3, 1});
  return reshape(p, {x.size(0), x.size(2) * x.size(3), x.size(1)});
}

template <typename T>
struct Linear {
  ParamPtr<T> weight;  // (in, out)
  ParamPtr<T> bias;    // (out), optional

  Linear() = default;
  Linear(const std::string& name, size_t in, size_t out, Rng& rng,
         bool with_bias = true) {
    weight = make_param(name + ".weight",
                        xavier_uniform<T>({in, out}, in, out, rng));
    if (with_bias) bias = make_param(name + ".bias", Tensor<T>::zeros({out}));
  }

  Tensor<T> forward(const Tensor<T>& x) const {
    Tensor<T> y = matmul(x, weight->value);
    if (bias) y = add(y, bias->value);
    return y;
  }

  void collect(ParamList<T>& out) const {
    out.push_back(weight);
    if (bias) out.push_back(bias);
  }
};

template <typename T>
struct Conv2dLayer {
  ParamPtr<T> weight;  // (out, in, k, k)
  ParamPtr<T> bias;    // (out)
  size_t stride = 1;
  size_t pad = 0;

  Conv2dLayer() = default;
  Conv2dLayer(const std::string& name, size_t in, size_t out, size_t k,
              size_t stride_, size_t pad_, Rng& rng, bool zero_init = false)
      : stride(stride_), pad(pad_) {
    Tensor<T> w = zero_init
                      ? Tensor<T>::zeros({out, in, k, k})
                      : xavier_uniform<T>({out, in, k, k}, in * k * k,
                                          out * k * k, rng);
    weight = make_param(name + ".weight", std::move(w));
    bias = make_param(name + ".bias", Tensor<T>::zeros({out}));
  }

  Tensor<T> forward(const Tensor<T>& x) const {
    return conv2d(x, weight->value, bias->value, stride, pad);
  }

  void collect(ParamList<T>& out) const {
    out.push_back(weight);
    out.push_back(bias);
  }
};

template <typename T>
struct DepthwiseConv3x3Layer {
  ParamPtr<T> weight;  // (C,1,3,3)
  ParamPtr<T> bias;    // (C)

  DepthwiseConv3x3Layer() = default;
  DepthwiseConv3x3Layer(const std::string& name, size_t channels, Rng& rng) {
    weight = make_param(name + ".weight",
                        xavier_uniform<T>({channels, 1, 3, 3}, 9, 9, rng));
    bias = make_param(name + ".bias", Tensor<T>::zeros({channels}));
  }

  Tensor<T> forward(const Tensor<T>& x) const {
    return depthwise_conv3x3(x, weight->value, bias->value);
  }

  void collect(ParamList<T>& out) const {
    out.push_back(weight);
    out.push_back(bias);
  }
};

// Normalizes the last axis, then applies a learned per-channel affine.
template <typename T>
struct LayerNormLayer {
  ParamPtr<T> gamma;
  ParamPtr<T> beta;
  T eps = static_cast<T>(1e-5);

  LayerNormLayer() = default;
  LayerNormLayer(const std::string& name, size_t channels) {
    gamma = make_param(name + ".gamma", Tensor<T>::ones({channels}));
    beta = make_param(name + ".beta", Tensor<T>::zeros({channels}));
  }

  Tensor<T> forward(const Tensor<T>& x) const {
    Tensor<T> n = layer_norm(x, -1, eps);
    return add(mul(n, gamma->value), beta->value);
  }

  void collect(ParamList<T>& out) const {
    out.push_back(gamma);
    out.push_back(beta);
  }
};

// Two linear layers with a GELU in between.
template <typename T>
struct Mlp {
  Linear<T> fc1;
  Linear<T> fc2;

  Mlp() = default;
  Mlp(const std::string& name, size_t channels, size_t hidden, Rng& rng)
      : fc1(name + ".fc1", channels, hidden, rng),
        fc2(name + ".fc2", hidden, channels, rng) {}

  Tensor<T> forward(const Tensor<T>& x) const {
    return fc2.forward(gelu(fc1.forward(x)));
  }

  void collect(ParamList<T>& out) const {
    fc1.collect(out);
    fc2.collect(out);
  }
};

}  // namespace mf
