#include "mf/ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>

namespace mf {
namespace {

template <typename T>
bool tracing(std::initializer_list<const Tensor<T>*> ins) {
  if (!Tape<T>::current()) return false;
  for (const Tensor<T>* t : ins)
    if (t->defined() && t->requires_grad()) return true;
  return false;
}

template <typename T>
void record(Tensor<T>& out, std::function<void()> back) {
  out.set_requires_grad(true);
  Tape<T>::current()->record({out.ptr()}, std::move(back));
}

int wrap_axis(int axis, size_t rank, const char* op) {
  int r = static_cast<int>(rank);
  if (axis < 0) axis += r;
  if (axis < 0 || axis >= r)
    throw ShapeError(str_cat(op, ": axis ", axis, " out of range for rank ", r));
  return axis;
}

// (outer, n, inner) walk for axis-wise ops.
struct AxisSplit {
  size_t outer = 1, n = 1, inner = 1;
};
AxisSplit axis_split(const Shape& s, int axis) {
  AxisSplit a;
  for (int i = 0; i < axis; ++i) a.outer *= s[i];
  a.n = s[axis];
  for (size_t i = axis + 1; i < s.size(); ++i) a.inner *= s[i];
  return a;
}

// ---- elementwise engines ----

template <typename T, typename F, typename D>
Tensor<T> unary_ew(const Tensor<T>& a, F f, D dfdx) {
  Tensor<T> out = Tensor<T>::zeros(a.shape());
  const auto& av = a.values();
  auto& ov = out.values();
  const int64_t n = static_cast<int64_t>(av.size());
  for (int64_t i = 0; i < n; ++i) ov[i] = f(av[i]);
  if (tracing<T>({&a})) {
    auto ad = a.ptr();
    auto od = out.ptr();
    record(out, [ad, od, dfdx] {
      if (!grad_live(*od)) return;
      auto& ga = ensure_grad(*ad);
      const auto& go = od->g;
      const int64_t m = static_cast<int64_t>(ga.size());
      for (int64_t i = 0; i < m; ++i) ga[i] += go[i] * dfdx(ad->v[i], od->v[i]);
    });
  }
  return out;
}

// rhs may be a suffix-broadcast of lhs; da/db are partials evaluated on the
// forward operand values.
template <typename T, typename F, typename DA, typename DB>
Tensor<T> binary_ew(const char* name, const Tensor<T>& a, const Tensor<T>& b,
                    F f, DA da, DB db) {
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  bool same = sa == sb;
  if (!same) {
    if (sb.size() > sa.size() ||
        !std::equal(sb.begin(), sb.end(), sa.end() - sb.size()))
      throw ShapeError(str_cat(name, ": shapes ", shape_str(sa), " and ",
                               shape_str(sb), " do not match or broadcast"));
  }
  Tensor<T> out = Tensor<T>::zeros(sa);
  const auto& av = a.values();
  const auto& bv = b.values();
  auto& ov = out.values();
  const int64_t n = static_cast<int64_t>(av.size());
  const int64_t bn = static_cast<int64_t>(bv.size());
  if (same) {
    for (int64_t i = 0; i < n; ++i) ov[i] = f(av[i], bv[i]);
  } else {
    for (int64_t i = 0; i < n; ++i) ov[i] = f(av[i], bv[i % bn]);
  }
  if (tracing<T>({&a, &b})) {
    auto ad = a.ptr();
    auto bd = b.ptr();
    auto od = out.ptr();
    record(out, [ad, bd, od, da, db] {
      if (!grad_live(*od)) return;
      const auto& go = od->g;
      const int64_t m = static_cast<int64_t>(go.size());
      const int64_t bm = static_cast<int64_t>(bd->v.size());
      if (ad->requires_grad) {
        auto& ga = ensure_grad(*ad);
        for (int64_t i = 0; i < m; ++i)
          ga[i] += go[i] * da(ad->v[i], bd->v[i % bm]);
      }
      if (bd->requires_grad) {
        auto& gb = ensure_grad(*bd);
        for (int64_t i = 0; i < m; ++i)
          gb[i % bm] += go[i] * db(ad->v[i], bd->v[i % bm]);
      }
    });
  }
  return out;
}

// ---- raw matmul kernels (deterministic: each output element is one
// sequential reduction; parallelism is over disjoint outputs) ----

// C(M,N) += A(M,K) * B(K,N)
template <typename T>
void gemm_nn(const T* a, const T* b, T* c, int64_t m, int64_t k, int64_t n) {
#pragma omp parallel for if (m * n * k > 1 << 14)
  for (int64_t i = 0; i < m; ++i) {
    T* crow = c + i * n;
    const T* arow = a + i * k;
    for (int64_t p = 0; p < k; ++p) {
      const T av = arow[p];
      const T* brow = b + p * n;
      for (int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// C(M,N) += A(M,K) * B(N,K)^T
template <typename T>
void gemm_nt(const T* a, const T* b, T* c, int64_t m, int64_t k, int64_t n) {
#pragma omp parallel for if (m * n * k > 1 << 14)
  for (int64_t i = 0; i < m; ++i) {
    const T* arow = a + i * k;
    T* crow = c + i * n;
    for (int64_t j = 0; j < n; ++j) {
      const T* brow = b + j * k;
      T acc = 0;
      for (int64_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
      crow[j] += acc;
    }
  }
}

// C(K,N) += A(M,K)^T * B(M,N); parallel over K rows of C.
template <typename T>
void gemm_tn(const T* a, const T* b, T* c, int64_t m, int64_t k, int64_t n) {
#pragma omp parallel for if (m * n * k > 1 << 14)
  for (int64_t p = 0; p < k; ++p) {
    T* crow = c + p * n;
    for (int64_t i = 0; i < m; ++i) {
      const T av = a[i * k + p];
      const T* brow = b + i * n;
      for (int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

}  // namespace

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b, bool transpose_b) {
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if ((sa.size() != 2 && sa.size() != 3) || (sb.size() != 2 && sb.size() != 3))
    throw ShapeError(str_cat("matmul: ranks must be 2 or 3, got ",
                             shape_str(sa), " x ", shape_str(sb)));
  const size_t batch = sa.size() == 3 ? sa[0] : 1;
  const size_t m = sa[sa.size() - 2];
  const size_t k = sa[sa.size() - 1];
  const size_t bk = transpose_b ? sb[sb.size() - 1] : sb[sb.size() - 2];
  const size_t n = transpose_b ? sb[sb.size() - 2] : sb[sb.size() - 1];
  const size_t b_batch = sb.size() == 3 ? sb[0] : 1;
  if (k != bk)
    throw ShapeError(str_cat("matmul: inner dims differ: ", shape_str(sa),
                             transpose_b ? " x T" : " x ", shape_str(sb)));
  if (sb.size() == 3 && b_batch != batch)
    throw ShapeError(str_cat("matmul: batch dims differ: ", shape_str(sa),
                             " x ", shape_str(sb)));
  if (sa.size() == 2 && sb.size() == 3)
    throw ShapeError("matmul: 2D lhs with batched rhs is unsupported");

  Shape out_shape = sa.size() == 3 ? Shape{batch, m, n} : Shape{m, n};
  Tensor<T> out = Tensor<T>::zeros(out_shape);
  const T* av = a.values().data();
  const T* bv = b.values().data();
  T* ov = out.values().data();
  const size_t a_step = m * k;
  const size_t b_step = (sb.size() == 3) ? k * n : 0;
  const size_t o_step = m * n;
  for (size_t g = 0; g < batch; ++g) {
    if (transpose_b)
      gemm_nt(av + g * a_step, bv + g * b_step, ov + g * o_step, m, k, n);
    else
      gemm_nn(av + g * a_step, bv + g * b_step, ov + g * o_step, m, k, n);
  }

  if (tracing<T>({&a, &b})) {
    auto ad = a.ptr();
    auto bd = b.ptr();
    auto od = out.ptr();
    const bool b_batched = sb.size() == 3;
    record(out, [ad, bd, od, batch, m, k, n, b_batched, transpose_b] {
      if (!grad_live(*od)) return;
      const T* go = od->g.data();
      const size_t a_step = m * k;
      const size_t b_step = b_batched ? k * n : 0;
      const size_t o_step = m * n;
      if (ad->requires_grad) {
        T* ga = ensure_grad(*ad).data();
        for (size_t g = 0; g < batch; ++g) {
          // dA = dC * B^T (or dC * B when rhs was transposed)
          if (transpose_b)
            gemm_nn(go + g * o_step, bd->v.data() + g * b_step, ga + g * a_step,
                    m, n, k);
          else
            gemm_nt(go + g * o_step, bd->v.data() + g * b_step, ga + g * a_step,
                    m, n, k);
        }
      }
      if (bd->requires_grad) {
        T* gb = ensure_grad(*bd).data();
        for (size_t g = 0; g < batch; ++g) {
          // dB = A^T * dC (or dC^T * A when rhs was transposed)
          if (transpose_b)
            gemm_tn(go + g * o_step, ad->v.data() + g * a_step, gb + g * b_step,
                    m, n, k);
          else
            gemm_tn(ad->v.data() + g * a_step, go + g * o_step, gb + g * b_step,
                    m, k, n);
        }
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  return binary_ew<T>(
      "add", a, b, [](T x, T y) { return x + y; }, [](T, T) { return T(1); },
      [](T, T) { return T(1); });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  return binary_ew<T>(
      "sub", a, b, [](T x, T y) { return x - y; }, [](T, T) { return T(1); },
      [](T, T) { return T(-1); });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  return binary_ew<T>(
      "mul", a, b, [](T x, T y) { return x * y; }, [](T, T y) { return y; },
      [](T x, T) { return x; });
}

template <typename T>
Tensor<T> maximum(const Tensor<T>& a, const Tensor<T>& b) {
  return binary_ew<T>(
      "maximum", a, b, [](T x, T y) { return x >= y ? x : y; },
      [](T x, T y) { return x >= y ? T(1) : T(0); },
      [](T x, T y) { return x >= y ? T(0) : T(1); });
}

template <typename T>
Tensor<T> minimum(const Tensor<T>& a, const Tensor<T>& b) {
  return binary_ew<T>(
      "minimum", a, b, [](T x, T y) { return x <= y ? x : y; },
      [](T x, T y) { return x <= y ? T(1) : T(0); },
      [](T x, T y) { return x <= y ? T(0) : T(1); });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T s) {
  return unary_ew<T>(
      a, [s](T x) { return x * s; }, [s](T, T) { return s; });
}

template <typename T>
Tensor<T> add_scalar(const Tensor<T>& a, T s) {
  return unary_ew<T>(
      a, [s](T x) { return x + s; }, [](T, T) { return T(1); });
}

template <typename T>
Tensor<T> maximum_scalar(const Tensor<T>& a, T s) {
  return unary_ew<T>(
      a, [s](T x) { return x >= s ? x : s; },
      [s](T x, T) { return x >= s ? T(1) : T(0); });
}

template <typename T>
Tensor<T> minimum_scalar(const Tensor<T>& a, T s) {
  return unary_ew<T>(
      a, [s](T x) { return x <= s ? x : s; },
      [s](T x, T) { return x <= s ? T(1) : T(0); });
}

template <typename T>
Tensor<T> abs_op(const Tensor<T>& a) {
  return unary_ew<T>(
      a, [](T x) { return std::abs(x); },
      [](T x, T) { return x > T(0) ? T(1) : (x < T(0) ? T(-1) : T(0)); });
}

template <typename T>
Tensor<T> sqrt_op(const Tensor<T>& a) {
  return unary_ew<T>(
      a, [](T x) { return std::sqrt(x); },
      [](T, T y) { return T(0.5) / y; });
}

template <typename T>
Tensor<T> exp_op(const Tensor<T>& a) {
  return unary_ew<T>(
      a, [](T x) { return std::exp(x); }, [](T, T y) { return y; });
}

template <typename T>
Tensor<T> gelu(const Tensor<T>& x) {
  constexpr double inv_sqrt2 = 0.70710678118654752440;
  constexpr double inv_sqrt2pi = 0.39894228040143267794;
  return unary_ew<T>(
      x,
      [](T v) {
        return static_cast<T>(0.5 * v * (1.0 + std::erf(v * inv_sqrt2)));
      },
      [](T v, T) {
        double phi = 0.5 * (1.0 + std::erf(v * inv_sqrt2));
        double pdf = inv_sqrt2pi * std::exp(-0.5 * double(v) * double(v));
        return static_cast<T>(phi + v * pdf);
      });
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) {
  return unary_ew<T>(
      x,
      [](T v) {
        if (v >= T(0)) return T(1) / (T(1) + std::exp(-v));
        T e = std::exp(v);
        return e / (T(1) + e);
      },
      [](T, T y) { return y * (T(1) - y); });
}

template <typename T>
Tensor<T> tanh_op(const Tensor<T>& x) {
  return unary_ew<T>(
      x, [](T v) { return std::tanh(v); },
      [](T, T y) { return T(1) - y * y; });
}

template <typename T>
Tensor<T> leaky_relu(const Tensor<T>& x, T slope) {
  return unary_ew<T>(
      x, [slope](T v) { return v > T(0) ? v : slope * v; },
      [slope](T v, T) { return v > T(0) ? T(1) : slope; });
}

template <typename T>
Tensor<T> concat(std::span<const Tensor<T>> parts, size_t axis) {
  if (parts.empty()) throw ValueError("concat: empty tensor list");
  const Shape& s0 = parts[0].shape();
  if (axis >= s0.size())
    throw ShapeError(str_cat("concat: axis ", axis, " out of range for rank ",
                             s0.size()));
  size_t total = 0;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    if (s.size() != s0.size())
      throw ShapeError("concat: rank mismatch between parts");
    for (size_t i = 0; i < s.size(); ++i)
      if (i != axis && s[i] != s0[i])
        throw ShapeError(str_cat("concat: shapes ", shape_str(s0), " and ",
                                 shape_str(s), " differ off axis ", axis));
    total += s[axis];
  }
  Shape out_shape = s0;
  out_shape[axis] = total;
  Tensor<T> out = Tensor<T>::zeros(out_shape);

  AxisSplit sp = axis_split(out_shape, static_cast<int>(axis));
  // copy strided blocks: per outer slice, each part contributes
  // part_n * inner contiguous values.
  size_t at = 0;
  std::vector<size_t> offsets(parts.size());
  for (size_t pi = 0; pi < parts.size(); ++pi) {
    offsets[pi] = at;
    const size_t pn = parts[pi].shape()[axis];
    const T* src = parts[pi].values().data();
    T* dst = out.values().data();
    for (size_t o = 0; o < sp.outer; ++o) {
      std::copy(src + o * pn * sp.inner, src + (o + 1) * pn * sp.inner,
                dst + (o * sp.n + at) * sp.inner);
    }
    at += pn;
  }

  bool any = false;
  for (const auto& p : parts) any = any || p.requires_grad();
  if (Tape<T>::current() && any) {
    std::vector<std::shared_ptr<TensorData<T>>> ins;
    std::vector<size_t> part_n;
    for (const auto& p : parts) {
      ins.push_back(p.ptr());
      part_n.push_back(p.shape()[axis]);
    }
    auto od = out.ptr();
    record(out, [ins, part_n, offsets, sp, od] {
      if (!grad_live(*od)) return;
      const T* go = od->g.data();
      for (size_t pi = 0; pi < ins.size(); ++pi) {
        if (!ins[pi]->requires_grad) continue;
        auto& gi = ensure_grad(*ins[pi]);
        const size_t pn = part_n[pi];
        for (size_t o = 0; o < sp.outer; ++o) {
          const T* src = go + (o * sp.n + offsets[pi]) * sp.inner;
          T* dst = gi.data() + o * pn * sp.inner;
          for (size_t i = 0; i < pn * sp.inner; ++i) dst[i] += src[i];
        }
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts, size_t axis) {
  return concat(std::span<const Tensor<T>>(parts.data(), parts.size()), axis);
}

template <typename T>
std::vector<Tensor<T>> split(const Tensor<T>& a, size_t axis,
                             const std::vector<size_t>& sizes) {
  const Shape& s = a.shape();
  if (axis >= s.size())
    throw ShapeError(str_cat("split: axis ", axis, " out of range for rank ",
                             s.size()));
  size_t total = 0;
  for (size_t z : sizes) total += z;
  if (total != s[axis])
    throw ShapeError(str_cat("split: sizes sum to ", total, ", axis extent is ",
                             s[axis]));
  AxisSplit sp = axis_split(s, static_cast<int>(axis));
  std::vector<Tensor<T>> parts;
  size_t at = 0;
  std::vector<size_t> offsets;
  for (size_t z : sizes) {
    Shape ps = s;
    ps[axis] = z;
    Tensor<T> p = Tensor<T>::zeros(ps);
    const T* src = a.values().data();
    T* dst = p.values().data();
    for (size_t o = 0; o < sp.outer; ++o)
      std::copy(src + (o * sp.n + at) * sp.inner,
                src + (o * sp.n + at + z) * sp.inner, dst + o * z * sp.inner);
    offsets.push_back(at);
    at += z;
    parts.push_back(std::move(p));
  }
  if (tracing<T>({&a})) {
    auto ad = a.ptr();
    std::vector<std::shared_ptr<TensorData<T>>> outs;
    for (auto& p : parts) {
      p.set_requires_grad(true);
      outs.push_back(p.ptr());
    }
    std::vector<size_t> part_n(sizes);
    Tape<T>::current()->record(
        {outs.begin(), outs.end()}, [ad, outs, part_n, offsets, sp] {
          bool any = false;
          for (auto& o : outs) any = any || grad_live(*o);
          if (!any || !ad->requires_grad) return;
          auto& ga = ensure_grad(*ad);
          for (size_t pi = 0; pi < outs.size(); ++pi) {
            if (!grad_live(*outs[pi])) continue;
            const T* src = outs[pi]->g.data();
            const size_t z = part_n[pi];
            for (size_t o = 0; o < sp.outer; ++o) {
              T* dst = ga.data() + (o * sp.n + offsets[pi]) * sp.inner;
              const T* s2 = src + o * z * sp.inner;
              for (size_t i = 0; i < z * sp.inner; ++i) dst[i] += s2[i];
            }
          }
        });
  }
  return parts;
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& a, Shape shape) {
  if (numel_of(shape) != a.numel())
    throw ShapeError(str_cat("reshape: ", shape_str(a.shape()), " -> ",
                             shape_str(shape), " changes element count"));
  Tensor<T> out = Tensor<T>::from(std::move(shape), a.values());
  if (tracing<T>({&a})) {
    auto ad = a.ptr();
    auto od = out.ptr();
    record(out, [ad, od] {
      if (!grad_live(*od)) return;
      auto& ga = ensure_grad(*ad);
      const auto& go = od->g;
      for (size_t i = 0; i < ga.size(); ++i) ga[i] += go[i];
    });
  }
  return out;
}

namespace {
// dst[out_flat] = src[in_flat(out_flat)] mapping for permute.
struct PermutePlan {
  Shape out_shape;
  std::vector<size_t> in_stride_for_out;  // stride of input dim perm[i]
};

PermutePlan permute_plan(const Shape& s, const std::vector<size_t>& perm) {
  if (perm.size() != s.size())
    throw ShapeError(str_cat("permute: perm rank ", perm.size(),
                             " vs tensor rank ", s.size()));
  std::vector<bool> seen(s.size(), false);
  for (size_t p : perm) {
    if (p >= s.size() || seen[p]) throw ValueError("permute: invalid permutation");
    seen[p] = true;
  }
  std::vector<size_t> stride(s.size(), 1);
  for (size_t i = s.size() - 1; i-- > 0;) stride[i] = stride[i + 1] * s[i + 1];
  PermutePlan plan;
  for (size_t i = 0; i < perm.size(); ++i) {
    plan.out_shape.push_back(s[perm[i]]);
    plan.in_stride_for_out.push_back(stride[perm[i]]);
  }
  return plan;
}

template <typename T>
void permute_apply(const T* src, T* dst, const Shape& out_shape,
                   const std::vector<size_t>& in_stride, bool accumulate_back) {
  const size_t rank = out_shape.size();
  const size_t n = numel_of(out_shape);
  std::vector<size_t> idx(rank, 0);
  size_t in_flat = 0;
  for (size_t o = 0; o < n; ++o) {
    if (accumulate_back)
      dst[in_flat] += src[o];
    else
      dst[o] = src[in_flat];
    // odometer increment
    for (size_t d = rank; d-- > 0;) {
      in_flat += in_stride[d];
      if (++idx[d] < out_shape[d]) break;
      in_flat -= in_stride[d] * out_shape[d];
      idx[d] = 0;
    }
  }
}
}  // namespace

template <typename T>
Tensor<T> permute(const Tensor<T>& a, const std::vector<size_t>& perm) {
  PermutePlan plan = permute_plan(a.shape(), perm);
  Tensor<T> out = Tensor<T>::zeros(plan.out_shape);
  permute_apply(a.values().data(), out.values().data(), plan.out_shape,
                plan.in_stride_for_out, false);
  if (tracing<T>({&a})) {
    auto ad = a.ptr();
    auto od = out.ptr();
    record(out, [ad, od, plan] {
      if (!grad_live(*od)) return;
      auto& ga = ensure_grad(*ad);
      permute_apply(od->g.data(), ga.data(), plan.out_shape,
                    plan.in_stride_for_out, true);
    });
  }
  return out;
}

template <typename T>
Tensor<T> reduce_sum(const Tensor<T>& a) {
  T acc = 0;
  for (T x : a.values()) acc += x;
  Tensor<T> out = Tensor<T>::scalar(acc);
  if (tracing<T>({&a})) {
    auto ad = a.ptr();
    auto od = out.ptr();
    record(out, [ad, od] {
      if (!grad_live(*od)) return;
      auto& ga = ensure_grad(*ad);
      const T g = od->g[0];
      for (T& x : ga) x += g;
    });
  }
  return out;
}

template <typename T>
Tensor<T> reduce_mean(const Tensor<T>& a) {
  const T inv_n = T(1) / static_cast<T>(a.numel());
  T acc = 0;
  for (T x : a.values()) acc += x;
  Tensor<T> out = Tensor<T>::scalar(acc * inv_n);
  if (tracing<T>({&a})) {
    auto ad = a.ptr();
    auto od = out.ptr();
    record(out, [ad, od, inv_n] {
      if (!grad_live(*od)) return;
      auto& ga = ensure_grad(*ad);
      const T g = od->g[0] * inv_n;
      for (T& x : ga) x += g;
    });
  }
  return out;
}

// ---- network primitives ----

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias,
                 size_t stride, size_t pad) {
  if (x.rank() != 4)
    throw ShapeError(str_cat("conv2d: input must be 4D (B,C,H,W), got ",
                             shape_str(x.shape())));
  if (w.rank() != 4)
    throw ShapeError(str_cat("conv2d: weight must be 4D (Cout,Cin,kh,kw), got ",
                             shape_str(w.shape())));
  if (stride == 0) throw ValueError("conv2d: stride must be positive");
  const int64_t B = x.size(0), Cin = x.size(1), H = x.size(2), W = x.size(3);
  const int64_t Cout = w.size(0), kh = w.size(2), kw = w.size(3);
  if (static_cast<int64_t>(w.size(1)) != Cin)
    throw ShapeError(str_cat("conv2d: input channels ", Cin,
                             " vs weight channels ", w.size(1)));
  if (bias.defined() && static_cast<int64_t>(bias.numel()) != Cout)
    throw ShapeError(str_cat("conv2d: bias size ", bias.numel(),
                             " vs out channels ", Cout));
  const int64_t s = static_cast<int64_t>(stride);
  const int64_t p = static_cast<int64_t>(pad);
  if (H + 2 * p < kh || W + 2 * p < kw)
    throw ShapeError(str_cat("conv2d: kernel ", kh, "x", kw,
                             " larger than padded input ", H + 2 * p, "x",
                             W + 2 * p));
  const int64_t OH = (H + 2 * p - kh) / s + 1;
  const int64_t OW = (W + 2 * p - kw) / s + 1;

  Tensor<T> out = Tensor<T>::zeros(
      {static_cast<size_t>(B), static_cast<size_t>(Cout),
       static_cast<size_t>(OH), static_cast<size_t>(OW)});
  {
    const T* xv = x.values().data();
    const T* wv = w.values().data();
    const T* bv = bias.defined() ? bias.values().data() : nullptr;
    T* ov = out.values().data();
#pragma omp parallel for collapse(2) if (B * Cout * OH * OW * Cin > 1 << 12)
    for (int64_t b = 0; b < B; ++b) {
      for (int64_t co = 0; co < Cout; ++co) {
        T* oplane = ov + (b * Cout + co) * OH * OW;
        const T* wbase = wv + co * Cin * kh * kw;
        for (int64_t oy = 0; oy < OH; ++oy) {
          for (int64_t ox = 0; ox < OW; ++ox) {
            T acc = bv ? bv[co] : T(0);
            for (int64_t ci = 0; ci < Cin; ++ci) {
              const T* xplane = xv + (b * Cin + ci) * H * W;
              const T* wk = wbase + ci * kh * kw;
              for (int64_t ky = 0; ky < kh; ++ky) {
                const int64_t iy = oy * s + ky - p;
                if (iy < 0 || iy >= H) continue;
                for (int64_t kx = 0; kx < kw; ++kx) {
                  const int64_t ix = ox * s + kx - p;
                  if (ix < 0 || ix >= W) continue;
                  acc += xplane[iy * W + ix] * wk[ky * kw + kx];
                }
              }
            }
            oplane[oy * OW + ox] = acc;
          }
        }
      }
    }
  }

  if (tracing<T>({&x, &w, &bias})) {
    auto xd = x.ptr();
    auto wd = w.ptr();
    auto bd = bias.defined() ? bias.ptr() : nullptr;
    auto od = out.ptr();
    record(out, [xd, wd, bd, od, B, Cin, H, W, Cout, kh, kw, OH, OW, s, p] {
      if (!grad_live(*od)) return;
      const T* go = od->g.data();
      if (xd->requires_grad) {
        T* gx = ensure_grad(*xd).data();
        const T* wv = wd->v.data();
#pragma omp parallel for collapse(2) if (B * Cin * H * W * Cout > 1 << 12)
        for (int64_t b = 0; b < B; ++b) {
          for (int64_t ci = 0; ci < Cin; ++ci) {
            T* gplane = gx + (b * Cin + ci) * H * W;
            for (int64_t iy = 0; iy < H; ++iy) {
              for (int64_t ix = 0; ix < W; ++ix) {
                T acc = 0;
                for (int64_t co = 0; co < Cout; ++co) {
                  const T* gout = go + (b * Cout + co) * OH * OW;
                  const T* wk = wv + (co * Cin + ci) * kh * kw;
                  for (int64_t ky = 0; ky < kh; ++ky) {
                    const int64_t num = iy + p - ky;
                    if (num < 0 || num % s) continue;
                    const int64_t oy = num / s;
                    if (oy >= OH) continue;
                    for (int64_t kx = 0; kx < kw; ++kx) {
                      const int64_t numx = ix + p - kx;
                      if (numx < 0 || numx % s) continue;
                      const int64_t ox = numx / s;
                      if (ox >= OW) continue;
                      acc += gout[oy * OW + ox] * wk[ky * kw + kx];
                    }
                  }
                }
                gplane[iy * W + ix] += acc;
              }
            }
          }
        }
      }
      if (wd->requires_grad) {
        T* gw = ensure_grad(*wd).data();
        const T* xv = xd->v.data();
        const int64_t wn = Cout * Cin * kh * kw;
#pragma omp parallel for if (wn * B * OH * OW > 1 << 12)
        for (int64_t wi = 0; wi < wn; ++wi) {
          const int64_t kx = wi % kw;
          const int64_t ky = (wi / kw) % kh;
          const int64_t ci = (wi / (kw * kh)) % Cin;
          const int64_t co = wi / (kw * kh * Cin);
          T acc = 0;
          for (int64_t b = 0; b < B; ++b) {
            const T* xplane = xv + (b * Cin + ci) * H * W;
            const T* gout = go + (b * Cout + co) * OH * OW;
            for (int64_t oy = 0; oy < OH; ++oy) {
              const int64_t iy = oy * s + ky - p;
              if (iy < 0 || iy >= H) continue;
              for (int64_t ox = 0; ox < OW; ++ox) {
                const int64_t ix = ox * s + kx - p;
                if (ix < 0 || ix >= W) continue;
                acc += gout[oy * OW + ox] * xplane[iy * W + ix];
              }
            }
          }
          gw[wi] += acc;
        }
      }
      if (bd && bd->requires_grad) {
        T* gb = ensure_grad(*bd).data();
        for (int64_t co = 0; co < Cout; ++co) {
          T acc = 0;
          for (int64_t b = 0; b < B; ++b) {
            const T* gout = go + (b * Cout + co) * OH * OW;
            for (int64_t i = 0; i < OH * OW; ++i) acc += gout[i];
          }
          gb[co] += acc;
        }
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> depthwise_conv3x3(const Tensor<T>& x, const Tensor<T>& w,
                            const Tensor<T>& bias) {
  if (x.rank() != 4)
    throw ShapeError(str_cat("depthwise_conv3x3: input must be 4D, got ",
                             shape_str(x.shape())));
  const int64_t B = x.size(0), C = x.size(1), H = x.size(2), W = x.size(3);
  if (w.rank() != 4 || static_cast<int64_t>(w.size(0)) != C || w.size(1) != 1 ||
      w.size(2) != 3 || w.size(3) != 3)
    throw ShapeError(str_cat("depthwise_conv3x3: weight must be (", C,
                             ",1,3,3), got ", shape_str(w.shape())));
  if (bias.defined() && static_cast<int64_t>(bias.numel()) != C)
    throw ShapeError("depthwise_conv3x3: bias size mismatch");

  Tensor<T> out = Tensor<T>::zeros(x.shape());
  {
    const T* xv = x.values().data();
    const T* wv = w.values().data();
    const T* bv = bias.defined() ? bias.values().data() : nullptr;
    T* ov = out.values().data();
#pragma omp parallel for if (B * C * H * W > 1 << 12)
    for (int64_t bc = 0; bc < B * C; ++bc) {
      const int64_t c = bc % C;
      const T* xp = xv + bc * H * W;
      const T* wk = wv + c * 9;
      T* op = ov + bc * H * W;
      for (int64_t y = 0; y < H; ++y) {
        for (int64_t x2 = 0; x2 < W; ++x2) {
          T acc = bv ? bv[c] : T(0);
          for (int64_t ky = 0; ky < 3; ++ky) {
            const int64_t iy = y + ky - 1;
            if (iy < 0 || iy >= H) continue;
            for (int64_t kx = 0; kx < 3; ++kx) {
              const int64_t ix = x2 + kx - 1;
              if (ix < 0 || ix >= W) continue;
              acc += xp[iy * W + ix] * wk[ky * 3 + kx];
            }
          }
          op[y * W + x2] = acc;
        }
      }
    }
  }
  if (tracing<T>({&x, &w, &bias})) {
    auto xd = x.ptr();
    auto wd = w.ptr();
    auto bd = bias.defined() ? bias.ptr() : nullptr;
    auto od = out.ptr();
    record(out, [xd, wd, bd, od, B, C, H, W] {
      if (!grad_live(*od)) return;
      const T* go = od->g.data();
      if (xd->requires_grad) {
        T* gx = ensure_grad(*xd).data();
        const T* wv = wd->v.data();
#pragma omp parallel for if (B * C * H * W > 1 << 12)
        for (int64_t bc = 0; bc < B * C; ++bc) {
          const int64_t c = bc % C;
          const T* gp = go + bc * H * W;
          const T* wk = wv + c * 9;
          T* gxp = gx + bc * H * W;
          for (int64_t y = 0; y < H; ++y) {
            for (int64_t x2 = 0; x2 < W; ++x2) {
              T acc = 0;
              for (int64_t ky = 0; ky < 3; ++ky) {
                const int64_t oy = y - (ky - 1);
                if (oy < 0 || oy >= H) continue;
                for (int64_t kx = 0; kx < 3; ++kx) {
                  const int64_t ox = x2 - (kx - 1);
                  if (ox < 0 || ox >= W) continue;
                  acc += gp[oy * W + ox] * wk[ky * 3 + kx];
                }
              }
              gxp[y * W + x2] += acc;
            }
          }
        }
      }
      if (wd->requires_grad) {
        T* gw = ensure_grad(*wd).data();
        const T* xv = xd->v.data();
#pragma omp parallel for if (C * 9 * B * H * W > 1 << 12)
        for (int64_t c = 0; c < C; ++c) {
          for (int64_t k = 0; k < 9; ++k) {
            const int64_t ky = k / 3, kx = k % 3;
            T acc = 0;
            for (int64_t b = 0; b < B; ++b) {
              const T* xp = xv + (b * C + c) * H * W;
              const T* gp = go + (b * C + c) * H * W;
              for (int64_t y = 0; y < H; ++y) {
                const int64_t iy = y + ky - 1;
                if (iy < 0 || iy >= H) continue;
                for (int64_t x2 = 0; x2 < W; ++x2) {
                  const int64_t ix = x2 + kx - 1;
                  if (ix < 0 || ix >= W) continue;
                  acc += gp[y * W + x2] * xp[iy * W + ix];
                }
              }
            }
            gw[c * 9 + k] += acc;
          }
        }
      }
      if (bd && bd->requires_grad) {
        T* gb = ensure_grad(*bd).data();
        for (int64_t c = 0; c < C; ++c) {
          T acc = 0;
          for (int64_t b = 0; b < B; ++b) {
            const T* gp = go + (b * C + c) * H * W;
            for (int64_t i = 0; i < H * W; ++i) acc += gp[i];
          }
          gb[c] += acc;
        }
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, int axis, T eps) {
  if (eps <= T(0)) throw ValueError("layer_norm: eps must be positive");
  const int ax = wrap_axis(axis, x.rank(), "layer_norm");
  AxisSplit sp = axis_split(x.shape(), ax);
  Tensor<T> out = Tensor<T>::zeros(x.shape());
  const T* xv = x.values().data();
  T* ov = out.values().data();
  const T inv_n = T(1) / static_cast<T>(sp.n);
  for (size_t o = 0; o < sp.outer; ++o) {
    for (size_t j = 0; j < sp.inner; ++j) {
      const size_t base = o * sp.n * sp.inner + j;
      T mean = 0;
      for (size_t i = 0; i < sp.n; ++i) mean += xv[base + i * sp.inner];
      mean *= inv_n;
      T var = 0;
      for (size_t i = 0; i < sp.n; ++i) {
        const T d = xv[base + i * sp.inner] - mean;
        var += d * d;
      }
      var *= inv_n;
      const T inv_std = T(1) / std::sqrt(var + eps);
      for (size_t i = 0; i < sp.n; ++i)
        ov[base + i * sp.inner] = (xv[base + i * sp.inner] - mean) * inv_std;
    }
  }
  if (tracing<T>({&x})) {
    auto xd = x.ptr();
    auto od = out.ptr();
    record(out, [xd, od, sp, eps, inv_n] {
      if (!grad_live(*od)) return;
      auto& gx = ensure_grad(*xd);
      const T* go = od->g.data();
      const T* xv = xd->v.data();
      for (size_t o = 0; o < sp.outer; ++o) {
        for (size_t j = 0; j < sp.inner; ++j) {
          const size_t base = o * sp.n * sp.inner + j;
          T mean = 0;
          for (size_t i = 0; i < sp.n; ++i) mean += xv[base + i * sp.inner];
          mean *= inv_n;
          T var = 0;
          for (size_t i = 0; i < sp.n; ++i) {
            const T d = xv[base + i * sp.inner] - mean;
            var += d * d;
          }
          var *= inv_n;
          const T inv_std = T(1) / std::sqrt(var + eps);
          T gmean = 0, gdot = 0;
          for (size_t i = 0; i < sp.n; ++i) {
            const size_t k = base + i * sp.inner;
            const T xh = (xv[k] - mean) * inv_std;
            gmean += go[k];
            gdot += go[k] * xh;
          }
          gmean *= inv_n;
          gdot *= inv_n;
          for (size_t i = 0; i < sp.n; ++i) {
            const size_t k = base + i * sp.inner;
            const T xh = (xv[k] - mean) * inv_std;
            gx[k] += inv_std * (go[k] - gmean - xh * gdot);
          }
        }
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> softmax(const Tensor<T>& x, int axis) {
  const int ax = wrap_axis(axis, x.rank(), "softmax");
  AxisSplit sp = axis_split(x.shape(), ax);
  Tensor<T> out = Tensor<T>::zeros(x.shape());
  const T* xv = x.values().data();
  T* ov = out.values().data();
#pragma omp parallel for collapse(2) if (sp.outer * sp.inner * sp.n > 1 << 14)
  for (int64_t o = 0; o < static_cast<int64_t>(sp.outer); ++o) {
    for (int64_t j = 0; j < static_cast<int64_t>(sp.inner); ++j) {
      const size_t base = o * sp.n * sp.inner + j;
      T mx = xv[base];
      for (size_t i = 1; i < sp.n; ++i)
        mx = std::max(mx, xv[base + i * sp.inner]);
      T denom = 0;
      for (size_t i = 0; i < sp.n; ++i) {
        const T e = std::exp(xv[base + i * sp.inner] - mx);
        ov[base + i * sp.inner] = e;
        denom += e;
      }
      const T inv = T(1) / denom;
      for (size_t i = 0; i < sp.n; ++i) ov[base + i * sp.inner] *= inv;
    }
  }
  if (tracing<T>({&x})) {
    auto xd = x.ptr();
    auto od = out.ptr();
    record(out, [xd, od, sp] {
      if (!grad_live(*od)) return;
      auto& gx = ensure_grad(*xd);
      const T* go = od->g.data();
      const T* yv = od->v.data();
#pragma omp parallel for collapse(2) if (sp.outer * sp.inner * sp.n > 1 << 14)
      for (int64_t o = 0; o < static_cast<int64_t>(sp.outer); ++o) {
        for (int64_t j = 0; j < static_cast<int64_t>(sp.inner); ++j) {
          const size_t base = o * sp.n * sp.inner + j;
          T dot = 0;
          for (size_t i = 0; i < sp.n; ++i) {
            const size_t k = base + i * sp.inner;
            dot += go[k] * yv[k];
          }
          for (size_t i = 0; i < sp.n; ++i) {
            const size_t k = base + i * sp.inner;
            gx[k] += yv[k] * (go[k] - dot);
          }
        }
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> nearest_upsample_2x(const Tensor<T>& x) {
  if (x.rank() != 4)
    throw ShapeError(str_cat("nearest_upsample_2x: input must be 4D, got ",
                             shape_str(x.shape())));
  const size_t B = x.size(0), C = x.size(1), H = x.size(2), W = x.size(3);
  Tensor<T> out = Tensor<T>::zeros({B, C, 2 * H, 2 * W});
  const T* xv = x.values().data();
  T* ov = out.values().data();
  for (size_t bc = 0; bc < B * C; ++bc) {
    const T* xp = xv + bc * H * W;
    T* op = ov + bc * 4 * H * W;
    for (size_t y = 0; y < 2 * H; ++y) {
      const T* row = xp + (y / 2) * W;
      T* orow = op + y * 2 * W;
      for (size_t z = 0; z < 2 * W; ++z) orow[z] = row[z / 2];
    }
  }
  if (tracing<T>({&x})) {
    auto xd = x.ptr();
    auto od = out.ptr();
    record(out, [xd, od, B, C, H, W] {
      if (!grad_live(*od)) return;
      auto& gx = ensure_grad(*xd);
      const T* go = od->g.data();
      for (size_t bc = 0; bc < B * C; ++bc) {
        T* gp = gx.data() + bc * H * W;
        const T* gop = go + bc * 4 * H * W;
        for (size_t y = 0; y < 2 * H; ++y) {
          const T* grow = gop + y * 2 * W;
          T* grout = gp + (y / 2) * W;
          for (size_t z = 0; z < 2 * W; ++z) grout[z / 2] += grow[z];
        }
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> grid_sample_bilinear(const Tensor<T>& feature, const Tensor<T>& flow) {
  if (feature.rank() != 4 || flow.rank() != 4)
    throw ShapeError("grid_sample_bilinear: feature and flow must be 4D");
  const int64_t B = feature.size(0), C = feature.size(1), H = feature.size(2),
                W = feature.size(3);
  if (static_cast<int64_t>(flow.size(0)) != B || flow.size(1) != 2 ||
      static_cast<int64_t>(flow.size(2)) != H ||
      static_cast<int64_t>(flow.size(3)) != W)
    throw ShapeError(str_cat("grid_sample_bilinear: flow ",
                             shape_str(flow.shape()), " vs feature ",
                             shape_str(feature.shape())));
  Tensor<T> out = Tensor<T>::zeros(feature.shape());
  const T* fv = feature.values().data();
  const T* lv = flow.values().data();
  T* ov = out.values().data();
#pragma omp parallel for if (B * C * H * W > 1 << 12)
  for (int64_t b = 0; b < B; ++b) {
    const T* dxp = lv + (b * 2 + 0) * H * W;
    const T* dyp = lv + (b * 2 + 1) * H * W;
    for (int64_t y = 0; y < H; ++y) {
      for (int64_t x = 0; x < W; ++x) {
        const T xs = std::clamp(static_cast<T>(x) + dxp[y * W + x], T(0),
                                static_cast<T>(W - 1));
        const T ys = std::clamp(static_cast<T>(y) + dyp[y * W + x], T(0),
                                static_cast<T>(H - 1));
        const int64_t x0 = static_cast<int64_t>(std::floor(xs));
        const int64_t y0 = static_cast<int64_t>(std::floor(ys));
        const int64_t x1 = std::min(x0 + 1, W - 1);
        const int64_t y1 = std::min(y0 + 1, H - 1);
        const T wx = xs - static_cast<T>(x0);
        const T wy = ys - static_cast<T>(y0);
        for (int64_t c = 0; c < C; ++c) {
          const T* fp = fv + (b * C + c) * H * W;
          const T v00 = fp[y0 * W + x0], v01 = fp[y0 * W + x1];
          const T v10 = fp[y1 * W + x0], v11 = fp[y1 * W + x1];
          ov[((b * C + c) * H + y) * W + x] =
              (T(1) - wy) * ((T(1) - wx) * v00 + wx * v01) +
              wy * ((T(1) - wx) * v10 + wx * v11);
        }
      }
    }
  }
  if (tracing<T>({&feature, &flow})) {
    auto fd = feature.ptr();
    auto ld = flow.ptr();
    auto od = out.ptr();
    record(out, [fd, ld, od, B, C, H, W] {
      if (!grad_live(*od)) return;
      const T* go = od->g.data();
      const T* fv = fd->v.data();
      const T* lv = ld->v.data();
      T* gf = fd->requires_grad ? ensure_grad(*fd).data() : nullptr;
      T* gl = ld->requires_grad ? ensure_grad(*ld).data() : nullptr;
#pragma omp parallel for if (B > 1)
      for (int64_t b = 0; b < B; ++b) {
        const T* dxp = lv + (b * 2 + 0) * H * W;
        const T* dyp = lv + (b * 2 + 1) * H * W;
        for (int64_t y = 0; y < H; ++y) {
          for (int64_t x = 0; x < W; ++x) {
            const T xs_raw = static_cast<T>(x) + dxp[y * W + x];
            const T ys_raw = static_cast<T>(y) + dyp[y * W + x];
            const T xs = std::clamp(xs_raw, T(0), static_cast<T>(W - 1));
            const T ys = std::clamp(ys_raw, T(0), static_cast<T>(H - 1));
            const bool in_x = xs_raw >= T(0) && xs_raw <= static_cast<T>(W - 1);
            const bool in_y = ys_raw >= T(0) && ys_raw <= static_cast<T>(H - 1);
            const int64_t x0 = static_cast<int64_t>(std::floor(xs));
            const int64_t y0 = static_cast<int64_t>(std::floor(ys));
            const int64_t x1 = std::min(x0 + 1, W - 1);
            const int64_t y1 = std::min(y0 + 1, H - 1);
            const T wx = xs - static_cast<T>(x0);
            const T wy = ys - static_cast<T>(y0);
            T acc_dx = 0, acc_dy = 0;
            for (int64_t c = 0; c < C; ++c) {
              const T g = go[((b * C + c) * H + y) * W + x];
              if (g == T(0)) continue;
              const T* fp = fv + (b * C + c) * H * W;
              const T v00 = fp[y0 * W + x0], v01 = fp[y0 * W + x1];
              const T v10 = fp[y1 * W + x0], v11 = fp[y1 * W + x1];
              if (gf) {
                T* gp = gf + (b * C + c) * H * W;
                gp[y0 * W + x0] += g * (T(1) - wx) * (T(1) - wy);
                gp[y0 * W + x1] += g * wx * (T(1) - wy);
                gp[y1 * W + x0] += g * (T(1) - wx) * wy;
                gp[y1 * W + x1] += g * wx * wy;
              }
              if (gl) {
                acc_dx += g * ((T(1) - wy) * (v01 - v00) + wy * (v11 - v10));
                acc_dy += g * ((T(1) - wx) * (v10 - v00) + wx * (v11 - v01));
              }
            }
            if (gl) {
              if (in_x) gl[((b * 2 + 0) * H + y) * W + x] += acc_dx;
              if (in_y) gl[((b * 2 + 1) * H + y) * W + x] += acc_dy;
            }
          }
        }
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> l2_normalize_rows(const Tensor<T>& x, T eps) {
  if (x.rank() < 1) throw ShapeError("l2_normalize_rows: rank must be >= 1");
  const size_t C = x.shape().back();
  const size_t rows = x.numel() / C;
  Tensor<T> out = Tensor<T>::zeros(x.shape());
  const T* xv = x.values().data();
  T* ov = out.values().data();
  for (size_t r = 0; r < rows; ++r) {
    const T* xr = xv + r * C;
    T ss = eps;
    for (size_t i = 0; i < C; ++i) ss += xr[i] * xr[i];
    const T inv = T(1) / std::sqrt(ss);
    for (size_t i = 0; i < C; ++i) ov[r * C + i] = xr[i] * inv;
  }
  if (tracing<T>({&x})) {
    auto xd = x.ptr();
    auto od = out.ptr();
    record(out, [xd, od, C, rows, eps] {
      if (!grad_live(*od)) return;
      auto& gx = ensure_grad(*xd);
      const T* go = od->g.data();
      const T* xv = xd->v.data();
      for (size_t r = 0; r < rows; ++r) {
        const T* xr = xv + r * C;
        const T* gr = go + r * C;
        T ss = eps;
        for (size_t i = 0; i < C; ++i) ss += xr[i] * xr[i];
        const T n = std::sqrt(ss);
        const T inv = T(1) / n;
        const T inv3 = inv * inv * inv;
        T dot = 0;
        for (size_t i = 0; i < C; ++i) dot += gr[i] * xr[i];
        for (size_t i = 0; i < C; ++i)
          gx[r * C + i] += gr[i] * inv - xr[i] * dot * inv3;
      }
    });
  }
  return out;
}

#define MF_INSTANTIATE_OPS(T)                                                  \
  template Tensor<T> matmul<T>(const Tensor<T>&, const Tensor<T>&, bool);      \
  template Tensor<T> add<T>(const Tensor<T>&, const Tensor<T>&);               \
  template Tensor<T> sub<T>(const Tensor<T>&, const Tensor<T>&);               \
  template Tensor<T> mul<T>(const Tensor<T>&, const Tensor<T>&);               \
  template Tensor<T> scale<T>(const Tensor<T>&, T);                            \
  template Tensor<T> add_scalar<T>(const Tensor<T>&, T);                       \
  template Tensor<T> concat<T>(std::span<const Tensor<T>>, size_t);            \
  template Tensor<T> concat<T>(const std::vector<Tensor<T>>&, size_t);         \
  template std::vector<Tensor<T>> split<T>(const Tensor<T>&, size_t,           \
                                           const std::vector<size_t>&);        \
  template Tensor<T> reshape<T>(const Tensor<T>&, Shape);                      \
  template Tensor<T> permute<T>(const Tensor<T>&, const std::vector<size_t>&); \
  template Tensor<T> reduce_sum<T>(const Tensor<T>&);                          \
  template Tensor<T> reduce_mean<T>(const Tensor<T>&);                         \
  template Tensor<T> abs_op<T>(const Tensor<T>&);                              \
  template Tensor<T> sqrt_op<T>(const Tensor<T>&);                             \
  template Tensor<T> exp_op<T>(const Tensor<T>&);                              \
  template Tensor<T> maximum<T>(const Tensor<T>&, const Tensor<T>&);           \
  template Tensor<T> minimum<T>(const Tensor<T>&, const Tensor<T>&);           \
  template Tensor<T> maximum_scalar<T>(const Tensor<T>&, T);                   \
  template Tensor<T> minimum_scalar<T>(const Tensor<T>&, T);                   \
  template Tensor<T> conv2d<T>(const Tensor<T>&, const Tensor<T>&,             \
                               const Tensor<T>&, size_t, size_t);              \
  template Tensor<T> depthwise_conv3x3<T>(const Tensor<T>&, const Tensor<T>&,  \
                                          const Tensor<T>&);                   \
  template Tensor<T> layer_norm<T>(const Tensor<T>&, int, T);                  \
  template Tensor<T> softmax<T>(const Tensor<T>&, int);                        \
  template Tensor<T> gelu<T>(const Tensor<T>&);                                \
  template Tensor<T> sigmoid<T>(const Tensor<T>&);                             \
  template Tensor<T> tanh_op<T>(const Tensor<T>&);                             \
  template Tensor<T> leaky_relu<T>(const Tensor<T>&, T);                       \
  template Tensor<T> nearest_upsample_2x<T>(const Tensor<T>&);                 \
  template Tensor<T> grid_sample_bilinear<T>(const Tensor<T>&,                 \
                                             const Tensor<T>&);                \
  template Tensor<T> l2_normalize_rows<T>(const Tensor<T>&, T);

MF_INSTANTIATE_OPS(float)
MF_INSTANTIATE_OPS(double)

}  // namespace mf
