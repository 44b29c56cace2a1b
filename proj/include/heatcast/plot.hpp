#pragma once

#include "heatcast/model.hpp"

#include <string>
#include <vector>

namespace heatcast {

struct HeatPoint {
  Vec2 position = Vec2::Zero();  // world frame
  double probability = 0.0;
};

/// Scored candidates of a model pass, mapped back to world coordinates.
std::vector<HeatPoint> model_heatmap(const Model& model, const Scenario& scenario);

/// Raw goal candidates with a uniform distribution, for plots without a model.
std::vector<HeatPoint> uniform_heatmap(const Scenario& scenario);

/// SVG 1.1 document: lanes, observed history, ground-truth future (if any),
/// one circle of class "candidate" per heat point with opacity scaled by
/// probability, and the forecast modes labelled with their probabilities.
/// Output bytes depend only on the inputs.
std::string render_svg(const Scenario& scenario, const Forecast* forecast,
                       const std::vector<HeatPoint>& heatmap);

}  // namespace heatcast
