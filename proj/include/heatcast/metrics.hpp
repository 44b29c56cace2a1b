#pragma once

#include "heatcast/scene.hpp"

#include <json.hpp>

#include <stdexcept>
#include <string>
#include <vector>

namespace heatcast {

inline constexpr double kMissThreshold = 2.0;  // m

struct MinFde {
  double value = 0.0;
  std::size_t best_index = 0;  // first on ties
};

/// Throws std::invalid_argument when a trajectory and the ground truth differ
/// in length or the forecast has no modes.
MinFde min_fde(const Forecast& forecast, const Points& gt_future);
double min_ade(const Forecast& forecast, const Points& gt_future);
/// True when minFDE exceeds the threshold (a value equal to it is a hit).
bool is_miss(const Forecast& forecast, const Points& gt_future, double threshold = kMissThreshold);
/// minFDE + (1 - p_best)^2 with p_best the probability of the minFDE mode.
double brier_min_fde(const Forecast& forecast, const Points& gt_future);

struct ScenarioMetrics {
  std::string scenario_id;
  double min_ade = 0.0;
  double min_fde = 0.0;
  bool miss = false;
  double brier_min_fde = 0.0;
};

struct EvalReport {
  std::vector<ScenarioMetrics> per_scenario;  // sorted by scenario id
  double min_ade = 0.0;
  double min_fde = 0.0;
  double miss_rate = 0.0;
  double brier_min_fde = 0.0;
  std::size_t count = 0;

  nlohmann::json to_json() const;
};

/// Raised when forecasts and dataset do not cover the same scenario ids.
class IdMismatchError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Every dataset scenario needs a future and exactly one forecast; extra or
/// missing ids raise IdMismatchError naming them.
EvalReport evaluate(const std::vector<Forecast>& forecasts, const std::vector<Scenario>& dataset);

/// Aligned text table, one row per (method, report).
std::string format_table(const std::vector<std::pair<std::string, EvalReport>>& rows);

}  // namespace heatcast
