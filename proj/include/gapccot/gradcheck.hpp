#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "gapccot/tensor.hpp"

namespace gapccot {

using ScalarFn = std::function<Tensor<double>(const std::vector<Tensor<double>>&)>;

/// Compares backward() gradients of `fn` against central differences.
///
/// Returns the largest norm-wise relative error ||analytic - numeric|| /
/// max(||analytic||, ||numeric||) over all inputs that require grad.
/// Inputs are perturbed in place and restored.
double gradient_relative_error(const ScalarFn& fn, std::vector<Tensor<double>>& inputs,
                               double step = 1e-5);

struct GradcheckResult {
  std::string name;
  double relative_error = 0.0;
  bool passed = false;
};

/// Finite-difference check of every autodiff primitive on small random shapes.
std::vector<GradcheckResult> run_primitive_gradchecks(std::uint64_t seed, double tolerance = 1e-4);

}  // namespace gapccot
