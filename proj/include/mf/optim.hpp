#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "mf/tensor.hpp"

namespace mf {

// Trainable tensor plus its Adam state. The name is a stable path used by
// checkpoints ("enc_src.stage1.blk0.attn.wq.weight", ...).
template <typename T>
struct Parameter {
  Tensor<T> value;
  std::string name;
  std::vector<T> m;  // first moment, sized on first step
  std::vector<T> v;  // second moment
  int64_t step = 0;

  Parameter(std::string n, Tensor<T> t) : value(std::move(t)), name(std::move(n)) {
    value.set_requires_grad(true);
  }
};

template <typename T>
using ParamPtr = std::shared_ptr<Parameter<T>>;
template <typename T>
using ParamList = std::vector<ParamPtr<T>>;

struct AdamConfig {
  double beta1 = 0.0;
  double beta2 = 0.99;
  double eps = 1e-8;
};

// In-place Adam update with bias correction. Gradients are left untouched;
// the caller zeroes them. A parameter with no gradient raises StateError.
template <typename T>
void adam_step(const ParamList<T>& params, T lr, const AdamConfig& cfg = {});

template <typename T>
void zero_grads(const ParamList<T>& params);

template <typename T>
void set_requires_grad(const ParamList<T>& params, bool rg);

// Single-file checkpoint: header (magic, format version, global step) then
// per parameter its name, shape, raw little-endian values and Adam moments.
template <typename T>
void save_checkpoint(const std::string& path, const ParamList<T>& params,
                     int64_t global_step);

// Loads into an existing parameter list; shapes and the name set must match
// exactly. Returns the stored global step.
template <typename T>
int64_t load_checkpoint(const std::string& path, const ParamList<T>& params);

}  // namespace mf
