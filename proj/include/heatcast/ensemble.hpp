#pragma once

#include "heatcast/scene.hpp"

#include <cstdint>
#include <vector>

namespace heatcast {

enum class TrajectoryFusion { average, select };

struct FusionOptions {
  std::size_t clusters = kNumModes;
  std::uint64_t seed = 0;
  TrajectoryFusion trajectories = TrajectoryFusion::average;
  std::vector<double> model_weights;  // empty = uniform
};

// ---------------------------------------------------------------------------
// Weighted k-means

struct KMeansResult {
  Points centers;                   // k x 2
  std::vector<std::size_t> labels;  // per point
  std::vector<double> sse_history;  // weighted SSE after seeding and after each Lloyd step
  int iterations = 0;
};

/// k-means++ seeding (weights x squared distance) followed by Lloyd
/// iterations until the largest center shift is below 1e-9 or 100 steps.
/// An emptied cluster is re-seeded at the point farthest from its nearest center.
KMeansResult weighted_kmeans(const Points& points, const std::vector<double>& weights,
                             std::size_t k, std::uint64_t seed);

double weighted_sse(const Points& points, const std::vector<double>& weights,
                    const Points& centers, const std::vector<std::size_t>& labels);

// ---------------------------------------------------------------------------
// Assignment

/// Minimum-cost assignment of rows to distinct columns (rows <= cols).
/// Returns the column for each row.
std::vector<std::size_t> solve_assignment(const Eigen::MatrixXd& cost);

// ---------------------------------------------------------------------------
// Fusion

/// Throws std::invalid_argument on no inputs, mixed scenario ids or a bad weight list.
Forecast kmeans_fuse(const std::vector<Forecast>& forecasts, const FusionOptions& options = {});

/// Matches every model's modes to the first model's by endpoint distance.
Forecast hungarian_fuse(const std::vector<Forecast>& forecasts, const FusionOptions& options = {});

}  // namespace heatcast
