#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "fctl/tensor.hpp"

namespace fctl {

struct GradSuiteEntry {
  std::string name;
  double max_relative_error = 0;
  double tolerance = 0;
  Index coordinates = 0;
  bool passed() const { return max_relative_error <= tolerance; }
};

/// Finite-difference check of every differentiable op (tolerance 1e-4, all
/// coordinates) on `instances` random shapes each, then the full segmentation
/// and refinement models with focal loss (64 sampled coordinates, 1e-3).
/// 64-bit, eps 1e-5.
std::vector<GradSuiteEntry> gradient_suite(std::uint64_t seed, Index instances = 3,
                                           const std::function<void(const GradSuiteEntry&)>& on_entry = {});

}  // namespace fctl
