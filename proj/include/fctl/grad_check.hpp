#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "fctl/tensor.hpp"

namespace fctl {

struct GradCheckResult {
  double max_relative_error = 0.0;
  Index coordinates_checked = 0;
  std::string worst_coordinate;  // "<param index>[<flat index>]"
};

/// Compares reverse-mode gradients of the scalar `f` against central finite
/// differences. Relative error per coordinate is |a - n| / max(|a|, |n|, 1e-8).
/// With `max_coordinates` > 0, a seeded random subset of coordinates (across all
/// params) is checked instead of every one. Runs in 64-bit only.
GradCheckResult grad_check(const std::function<Tensor<double>()>& f,
                           const std::vector<Tensor<double>>& params, double eps = 1e-5,
                           Index max_coordinates = 0, std::uint64_t seed = 0);

}  // namespace fctl
