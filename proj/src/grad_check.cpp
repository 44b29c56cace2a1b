#include "heatcast/grad_check.hpp"

#include <algorithm>
#include <cmath>

namespace heatcast {

GradCheckResult grad_check(const std::function<Tensor()>& f, const std::vector<Tensor>& inputs,
                           const GradCheckOptions& options) {
  std::vector<Tensor> xs = inputs;
  for (auto& x : xs) x.zero_grad();
  const Tensor root = f();
  backward(root);
  std::vector<Matrix> analytic;
  analytic.reserve(xs.size());
  for (const auto& x : xs) analytic.push_back(x.grad());

  GradCheckResult result;
  const double h = options.step;
  const double f0 = root.item();
  for (std::size_t t = 0; t < xs.size(); ++t) {
    Matrix& v = xs[t].mutable_value();
    const auto n = static_cast<std::size_t>(v.size());
    std::size_t stride = 1;
    if (options.max_coords_per_tensor > 0 && n > options.max_coords_per_tensor)
      stride = (n + options.max_coords_per_tensor - 1) / options.max_coords_per_tensor;
    for (std::size_t i = 0; i < n; i += stride) {
      double& coord = v.data()[i];
      const double saved = coord;
      coord = saved + h;
      const double fp = f().item();
      coord = saved - h;
      const double fm = f().item();
      coord = saved + h / 10;
      const double fp_near = f().item();
      coord = saved - h / 10;
      const double fm_near = f().item();
      coord = saved;

      const double forward = (fp - f0) / h;
      const double backward_slope = (f0 - fm) / h;
      const double numeric = (fp - fm) / (2.0 * h);
      const double scale = std::max({1.0, std::abs(forward), std::abs(backward_slope)});
      const double numeric_near = (fp_near - fm_near) / (0.2 * h);
      if (std::abs(forward - backward_slope) > options.kink_tolerance * scale ||
          std::abs(numeric - numeric_near) > options.step_tolerance * scale) {
        ++result.kinks;
        continue;
      }
      const double a = analytic[t].data()[i];
      const double err = std::abs(a - numeric) / std::max({1.0, std::abs(a), std::abs(numeric)});
      result.max_rel_error = std::max(result.max_rel_error, err);
      ++result.checked;
    }
  }
  for (auto& x : xs) x.zero_grad();
  return result;
}

GradCheckResult grad_check(const std::function<Tensor()>& f, const ParamSet& params,
                           const GradCheckOptions& options) {
  std::vector<Tensor> xs;
  for (const auto& [name, t] : params) xs.push_back(t);
  return grad_check(f, xs, options);
}

}  // namespace heatcast
