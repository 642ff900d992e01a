#include "fctl/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace fctl {

GradCheckResult grad_check(const std::function<Tensor<double>()>& f,
                           const std::vector<Tensor<double>>& params, double eps,
                           Index max_coordinates, std::uint64_t seed) {
  if (eps < 1e-6 || eps > 1e-3) throw ArgumentError("grad_check: eps must lie in [1e-6, 1e-3]");
  std::vector<Tensor<double>> ps = params;
  for (auto& p : ps) {
    if (!p.requires_grad()) throw ArgumentError("grad_check: parameter does not require grad");
    p.zero_grad();
  }
  const Tensor<double> loss = f();
  if (loss.size() != 1) throw ArgumentError("grad_check: f must return a scalar");
  backward(loss);

  std::vector<std::pair<std::size_t, Index>> coords;
  for (std::size_t pi = 0; pi < ps.size(); ++pi)
    for (Index i = 0; i < ps[pi].size(); ++i) coords.emplace_back(pi, i);
  if (max_coordinates > 0 && static_cast<Index>(coords.size()) > max_coordinates) {
    std::mt19937_64 rng(seed);
    std::shuffle(coords.begin(), coords.end(), rng);
    coords.resize(static_cast<std::size_t>(max_coordinates));
    std::sort(coords.begin(), coords.end());
  }

  auto eval = [&] {
    NoGradGuard guard;
    return f().item();
  };

  GradCheckResult result;
  for (const auto& [pi, i] : coords) {
    Tensor<double>& p = ps[pi];
    const double analytic = p.has_grad() ? p.grad()[static_cast<std::size_t>(i)] : 0.0;
    double& slot = p.mutable_data()[static_cast<std::size_t>(i)];
    const double saved = slot;
    slot = saved + eps;
    const double up = eval();
    slot = saved - eps;
    const double down = eval();
    slot = saved;
    const double numeric = (up - down) / (2.0 * eps);
    const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
    const double rel = std::abs(analytic - numeric) / denom;
    if (result.coordinates_checked == 0 || rel > result.max_relative_error) {
      result.max_relative_error = rel;
      result.worst_coordinate = std::to_string(pi) + "[" + std::to_string(i) + "]";
    }
    ++result.coordinates_checked;
  }
  for (auto& p : ps) p.zero_grad();
  return result;
}

}  // namespace fctl
