#pragma once

#include <functional>
#include <ostream>
#include <string>
#include <vector>

#include "mf/tensor.hpp"

namespace mf::gradcheck {

struct Options {
  double h = 1e-5;
  double tol = 1e-4;
  size_t max_elems_per_input = 0;  // 0 = check every element
  uint64_t sample_seed = 17;
};

struct Result {
  bool ok = true;
  double max_rel_err = 0.0;
  size_t checked = 0;
  std::string worst;
};

using ScalarFn =
    std::function<Tensor<double>(const std::vector<Tensor<double>>&)>;

// Compares the recorded analytic gradient of fn against central finite
// differences, for every element of every input with requires_grad. Module
// weights are checked by passing their value tensors in `inputs` (the
// handles share storage, so perturbations reach the module).
Result check(const ScalarFn& fn, std::vector<Tensor<double>> inputs,
             const Options& opt = {});

// Op-level suite behind the `gradcheck` CLI subcommand and the gradient
// acceptance criterion: every differentiable primitive plus one full
// encoder block and one full decoder block, `seeds` random draws each.
// Prints a line per check; returns false if any check fails.
bool run_gradient_suite(std::ostream& os, int seeds = 5);

}  // namespace mf::gradcheck
