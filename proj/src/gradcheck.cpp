#include "maskseg/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace maskseg {

GradCheckResult finite_diff_check(const std::function<Tensor<double>()>& f,
                                  const std::vector<Tensor<double>>& inputs, double h,
                                  double abs_floor) {
  std::vector<Tensor<double>> leaves = inputs;
  for (auto& t : leaves) {
    if (!t.requires_grad()) throw std::invalid_argument("finite_diff_check: input without requires_grad");
    t.zero_grad();
  }
  backward(f());
  std::vector<NdArray<double>> analytic;
  analytic.reserve(leaves.size());
  for (auto& t : leaves) analytic.push_back(t.grad());

  GradCheckResult result;
  NoGradGuard no_grad;
  for (std::size_t i = 0; i < leaves.size(); ++i) {
    auto& values = leaves[i].mutable_value().data;
    for (std::size_t j = 0; j < values.size(); ++j) {
      const double saved = values[j];
      values[j] = saved + h;
      const double up = f().item();
      values[j] = saved - h;
      const double down = f().item();
      values[j] = saved;
      const double numeric = (up - down) / (2.0 * h);
      const double a = analytic[i].data[j];
      const double err =
          std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), abs_floor});
      ++result.coordinates;
      if (result.coordinates == 1 || err > result.max_rel_error) {
        result.max_rel_error = err;
        result.worst_input = i;
        result.worst_index = j;
        result.analytic = a;
        result.numeric = numeric;
      }
    }
  }
  return result;
}

}  // namespace maskseg
