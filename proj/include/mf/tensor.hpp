#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <utility>
#include <vector>

#include "mf/common.hpp"

namespace mf {

// Reverse-mode autodiff substrate. Execution is eager; every differentiable
// op records one node on the active Tape. Recording order is a topological
// order of the graph, so backward() is a plain reverse sweep.
//
// Gradient semantics:
//  * leaf tensors (parameters, inputs) accumulate grads across backward()
//    calls until zero_grad(); running backward twice doubles their grads.
//  * intermediates get a fresh (zeroed) grad buffer per backward pass,
//    tracked by a pass counter so stale buffers are never re-read.

template <typename T>
struct TensorData {
  Shape shape;
  std::vector<T> v;
  std::vector<T> g;          // empty until a backward pass touches it
  uint64_t grad_pass = 0;    // pass counter stamp; meaningful for node outputs
  bool requires_grad = false;
  bool node_output = false;  // produced by a recorded op

  size_t numel() const { return v.size(); }
};

template <typename T>
uint64_t& backward_pass_counter() {
  static uint64_t counter = 0;
  return counter;
}

template <typename T>
bool grad_live(const TensorData<T>& d) {
  if (d.g.empty()) return false;
  return !d.node_output || d.grad_pass == backward_pass_counter<T>();
}

template <typename T>
std::vector<T>& ensure_grad(TensorData<T>& d) {
  uint64_t pass = backward_pass_counter<T>();
  if (d.g.empty()) {
    d.g.assign(d.numel(), T(0));
    d.grad_pass = pass;
  } else if (d.node_output && d.grad_pass != pass) {
    std::fill(d.g.begin(), d.g.end(), T(0));
    d.grad_pass = pass;
  }
  return d.g;
}

template <typename T>
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape) {
    Tensor t;
    t.d_ = std::make_shared<TensorData<T>>();
    t.d_->shape = std::move(shape);
    t.d_->v.assign(numel_of(t.d_->shape), T(0));
    return t;
  }

  static Tensor full(Shape shape, T value) {
    Tensor t = zeros(std::move(shape));
    std::fill(t.d_->v.begin(), t.d_->v.end(), value);
    return t;
  }

  static Tensor ones(Shape shape) { return full(std::move(shape), T(1)); }

  static Tensor scalar(T value) { return full({1}, value); }

  static Tensor from(Shape shape, std::vector<T> data) {
    if (numel_of(shape) != data.size())
      throw ShapeError(str_cat("tensor init: shape ", shape_str(shape), " needs ",
                               numel_of(shape), " values, got ", data.size()));
    Tensor t;
    t.d_ = std::make_shared<TensorData<T>>();
    t.d_->shape = std::move(shape);
    t.d_->v = std::move(data);
    return t;
  }

  static Tensor randn(Shape shape, Rng& rng, T stddev = T(1)) {
    Tensor t = zeros(std::move(shape));
    for (T& x : t.d_->v) x = static_cast<T>(rng.normal()) * stddev;
    return t;
  }

  static Tensor rand_uniform(Shape shape, Rng& rng, T lo, T hi) {
    Tensor t = zeros(std::move(shape));
    for (T& x : t.d_->v) x = static_cast<T>(rng.uniform(lo, hi));
    return t;
  }

  bool defined() const { return static_cast<bool>(d_); }
  const Shape& shape() const { return d_->shape; }
  size_t rank() const { return d_->shape.size(); }
  size_t numel() const { return d_->v.size(); }
  size_t size(size_t axis) const { return d_->shape.at(axis); }

  std::vector<T>& values() { return d_->v; }
  const std::vector<T>& values() const { return d_->v; }

  T item() const {
    if (numel() != 1)
      throw ShapeError(str_cat("item(): tensor has ", numel(), " elements"));
    return d_->v[0];
  }

  T& at(std::initializer_list<size_t> idx) {
    return d_->v[flat_index(idx)];
  }
  T at(std::initializer_list<size_t> idx) const {
    return d_->v[flat_index(idx)];
  }

  Tensor& set_requires_grad(bool rg) {
    d_->requires_grad = rg;
    return *this;
  }
  bool requires_grad() const { return d_ && d_->requires_grad; }

  bool has_grad() const { return d_ && grad_live(*d_); }
  const std::vector<T>& grad() const {
    if (!has_grad())
      throw StateError("grad(): no gradient present; run backward first");
    return d_->g;
  }
  void zero_grad() {
    if (d_) {
      d_->g.clear();
      d_->grad_pass = 0;
    }
  }

  // Value copy with no history and no grad requirement.
  Tensor detach() const {
    Tensor t = zeros(d_->shape);
    t.d_->v = d_->v;
    return t;
  }

  std::shared_ptr<TensorData<T>> ptr() const { return d_; }

 private:
  size_t flat_index(std::initializer_list<size_t> idx) const {
    if (idx.size() != d_->shape.size())
      throw ShapeError(str_cat("index rank ", idx.size(), " vs tensor rank ",
                               d_->shape.size()));
    size_t flat = 0;
    size_t axis = 0;
    for (size_t i : idx) {
      flat = flat * d_->shape[axis] + i;
      ++axis;
    }
    return flat;
  }

  std::shared_ptr<TensorData<T>> d_;
};

template <typename T>
class Tape {
 public:
  using DataPtr = std::shared_ptr<TensorData<T>>;

  struct Node {
    std::vector<DataPtr> outs;
    std::function<void()> back;
  };

  static Tape*& current() {
    static thread_local Tape* active = nullptr;
    return active;
  }

  void record(std::vector<DataPtr> outs, std::function<void()> back) {
    for (auto& o : outs) o->node_output = true;
    nodes_.push_back(Node{std::move(outs), std::move(back)});
  }

  size_t mark() const { return nodes_.size(); }

  void truncate(size_t mark) {
    if (mark < nodes_.size()) nodes_.resize(mark);
  }

  void clear() { nodes_.clear(); }
  size_t size() const { return nodes_.size(); }

  // Seeds d(root)/d(root) = 1 elementwise and sweeps the tape in reverse.
  // Leaf grads accumulate; intermediate grads are fresh per pass.
  void backward(const Tensor<T>& root) {
    ++backward_pass_counter<T>();
    auto rd = root.ptr();
    auto& g = ensure_grad(*rd);
    for (T& x : g) x += T(1);
    for (size_t i = nodes_.size(); i-- > 0;) nodes_[i].back();
  }

 private:
  std::vector<Node> nodes_;
};

// Binds a tape as the recording target for the current thread.
template <typename T>
class TapeScope {
 public:
  explicit TapeScope(Tape<T>& tape) : prev_(Tape<T>::current()) {
    Tape<T>::current() = &tape;
  }
  ~TapeScope() { Tape<T>::current() = prev_; }
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape<T>* prev_;
};

// Disables recording for its lifetime (inference / detached evaluation).
template <typename T>
class NoGradScope {
 public:
  NoGradScope() : prev_(Tape<T>::current()) { Tape<T>::current() = nullptr; }
  ~NoGradScope() { Tape<T>::current() = prev_; }
  NoGradScope(const NoGradScope&) = delete;
  NoGradScope& operator=(const NoGradScope&) = delete;

 private:
  Tape<T>* prev_;
};

}  // namespace mf
