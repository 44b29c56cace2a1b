#pragma once

#include "heatcast/param_set.hpp"
#include "heatcast/tensor.hpp"

#include <functional>
#include <vector>

namespace heatcast {

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  /// Coordinates dropped because the one-sided slopes disagree (relu kink, max switch).
  std::size_t kinks = 0;
};

struct GradCheckOptions {
  double step = 1e-5;
  /// Coordinates per tensor, evenly strided. 0 checks all of them.
  std::size_t max_coords_per_tensor = 0;
  /// One-sided slope disagreement above this (relative) marks a kink.
  double kink_tolerance = 1e-3;
  /// Central differences at `step` and `step / 10` disagreeing by more than
  /// this (relative) also mark a kink: one lies inside the step.
  double step_tolerance = 1e-6;
};

/// Central differences against reverse-mode gradients of a scalar function.
///
/// `f` rebuilds the graph from scratch on each call and must read the current
/// values of `inputs`. Error per coordinate is |a - n| / max(1, |a|, |n|).
GradCheckResult grad_check(const std::function<Tensor()>& f, const std::vector<Tensor>& inputs,
                           const GradCheckOptions& options = {});

GradCheckResult grad_check(const std::function<Tensor()>& f, const ParamSet& params,
                           const GradCheckOptions& options = {});

}  // namespace heatcast
