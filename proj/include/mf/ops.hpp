#pragma once

#include <span>
#include <vector>

#include "mf/tensor.hpp"

namespace mf {

// Differentiable primitives. Every op validates shapes up front, computes
// the forward value eagerly and, when a tape is active and an input requires
// grad, records the exact analytic backward.
//
// Broadcasting rule for binary elementwise ops: either both shapes are
// identical, or the rhs shape is a suffix of the lhs shape (the rhs is then
// tiled over the leading axes; its grad sums over them). That covers bias
// adds and per-channel affine terms without a general broadcast engine.

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b, bool transpose_b = false);
// Supported: (M,K)x(K,N), (B,M,K)x(B,K,N), (B,M,K)x(K,N); with transpose_b
// the rhs is read as (N,K) / (B,N,K).

template <typename T> Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> scale(const Tensor<T>& a, T s);
template <typename T> Tensor<T> add_scalar(const Tensor<T>& a, T s);

template <typename T>
Tensor<T> concat(std::span<const Tensor<T>> parts, size_t axis);
template <typename T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts, size_t axis);

template <typename T>
std::vector<Tensor<T>> split(const Tensor<T>& a, size_t axis,
                             const std::vector<size_t>& sizes);

template <typename T> Tensor<T> reshape(const Tensor<T>& a, Shape shape);
template <typename T>
Tensor<T> permute(const Tensor<T>& a, const std::vector<size_t>& perm);

template <typename T> Tensor<T> reduce_sum(const Tensor<T>& a);   // -> shape {1}
template <typename T> Tensor<T> reduce_mean(const Tensor<T>& a);  // -> shape {1}

template <typename T> Tensor<T> abs_op(const Tensor<T>& a);
template <typename T> Tensor<T> sqrt_op(const Tensor<T>& a);
template <typename T> Tensor<T> exp_op(const Tensor<T>& a);
template <typename T> Tensor<T> maximum(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> minimum(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> maximum_scalar(const Tensor<T>& a, T s);
template <typename T> Tensor<T> minimum_scalar(const Tensor<T>& a, T s);

// ---- network primitives ----

// x (B,Cin,H,W), w (Cout,Cin,kh,kw), optional bias (Cout). Zero padding.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias,
                 size_t stride, size_t pad);

// x (B,C,H,W), w (C,1,3,3), optional bias (C); stride 1, pad 1, one group
// per channel.
template <typename T>
Tensor<T> depthwise_conv3x3(const Tensor<T>& x, const Tensor<T>& w,
                            const Tensor<T>& bias);

// Pure normalization over one axis (mean 0 / var 1 before any affine).
template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, int axis, T eps);

template <typename T> Tensor<T> softmax(const Tensor<T>& x, int axis);
template <typename T> Tensor<T> gelu(const Tensor<T>& x);
template <typename T> Tensor<T> sigmoid(const Tensor<T>& x);
template <typename T> Tensor<T> tanh_op(const Tensor<T>& x);
template <typename T> Tensor<T> leaky_relu(const Tensor<T>& x, T slope);

// (B,C,H,W) -> (B,C,2H,2W) by replication.
template <typename T> Tensor<T> nearest_upsample_2x(const Tensor<T>& x);

// feature (B,C,H,W), flow (B,2,H,W) of pixel-unit offsets (dx,dy) added to
// each output position's own coordinate. Samples clamp to the border.
// Differentiable wrt feature and flow.
template <typename T>
Tensor<T> grid_sample_bilinear(const Tensor<T>& feature, const Tensor<T>& flow);

// Unit L2 norm along the last axis; norm computed as sqrt(sum(x^2) + eps).
template <typename T> Tensor<T> l2_normalize_rows(const Tensor<T>& x, T eps);

}  // namespace mf
