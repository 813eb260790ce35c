#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include "maskseg/tensor.hpp"

namespace maskseg {

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t worst_input = 0;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  std::size_t coordinates = 0;
};

// Compares the tape gradient of a scalar function against central
// differences (f(x+h) - f(x-h)) / 2h at every coordinate of `inputs`.
// Relative error is |a - n| / max(|a|, |n|, abs_floor). `f` must read the
// inputs through the given handles, which are perturbed in place.
GradCheckResult finite_diff_check(const std::function<Tensor<double>()>& f,
                                  const std::vector<Tensor<double>>& inputs, double h = 1e-4,
                                  double abs_floor = 1e-8);

}  // namespace maskseg
