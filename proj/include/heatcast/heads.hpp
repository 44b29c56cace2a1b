#pragma once

#include "heatcast/candidates.hpp"
#include "heatcast/encoder.hpp"

#include <span>
#include <vector>

namespace heatcast {

inline constexpr double kPositiveRadius = 3.0;  // m
inline constexpr std::size_t kTopK = 70;
inline constexpr double kNmsRadius = 2.0;  // m
/// Flattened trajectory width: 30 steps of interleaved (x, y).
inline constexpr Eigen::Index kTrajWidth = 2 * kFutureLength;

struct HeadConfig {
  Eigen::Index hidden_dim = 64;
  Eigen::Index rel_hidden = 16;
  std::size_t top_k = kTopK;
  /// PointNet point feature uses the whole trajectory instead of steps 10/20/30.
  bool full_trajectory_points = false;
};

// ---------------------------------------------------------------------------
// Differentiable intermediate results

/// Scores and offsets for every candidate, in candidate order.
struct HeatmapTensors {
  std::vector<GoalCandidate> candidates;
  Tensor logits;   // [n]
  Tensor probs;    // [n]
  Tensor offsets;  // [n x 2]
  Tensor refined;  // [n x 2] = position + offset
};

/// A set of goals with trajectories and mode logits.
struct GoalSetTensors {
  Tensor goals;   // [m x 2]
  Tensor logits;  // [m]
  Tensor probs;   // [m]
  Tensor trajs;   // [m x 60]
};

// ---------------------------------------------------------------------------
// Plain-value views

struct ScoredCandidate {
  GoalCandidate candidate;
  double logit = 0.0;
  double probability = 0.0;
  Vec2 offset = Vec2::Zero();
  Vec2 refined_position = Vec2::Zero();
  std::size_t index = 0;  // position in the unsorted candidate list
};

/// Sorted by descending probability; ties by (arclength, node_id).
using GoalHeatmap = std::vector<ScoredCandidate>;

struct GoalEntry {
  Vec2 position = Vec2::Zero();
  double probability = 0.0;
  Points trajectory;  // 30 x 2
  bool duplicate = false;  // padding entry repeating an earlier pick
};

using GoalSet6 = std::vector<GoalEntry>;

struct PositiveLabel {
  bool is_positive = false;
  Vec2 target_offset = Vec2::Zero();
};

// ---------------------------------------------------------------------------
// Parameters

void init_scoring_head(ParamSet& params, const HeadConfig& config, Rng& rng);
void init_trajectory_decoder(ParamSet& params, const HeadConfig& config, Rng& rng);
void init_distribution_head(ParamSet& params, const HeadConfig& config, Rng& rng);
void init_direct_head(ParamSet& params, const HeadConfig& config, Rng& rng);

// ---------------------------------------------------------------------------
// Operations

/// Constant-velocity goal used when no lane candidate exists.
GoalCandidate constant_velocity_candidate(const Kinematics& kin);

/// Per candidate MLP([target ⊕ lane feature ⊕ position]) -> (logit, offset).
/// An empty candidate list is replaced by the constant-velocity candidate.
HeatmapTensors score_and_refine(const ParamSet& params, const SceneFeatures& features,
                                const Scenario& normalized, std::vector<GoalCandidate> candidates,
                                const Kinematics& kin);

GoalHeatmap to_heatmap(const HeatmapTensors& h);

/// Positive iff within 3.0 m of the ground-truth goal (closed boundary).
std::vector<PositiveLabel> assign_labels(const std::vector<GoalCandidate>& candidates,
                                         const Vec2& gt_goal);

/// First min(k, size) entries of a sorted heatmap.
GoalHeatmap top_k(const GoalHeatmap& heatmap, std::size_t k = kTopK);

/// goals [m x 2] -> trajectories [m x 60]: straight-line base from the
/// origin to the goal plus an MLP residual.
Tensor decode_trajectory(const ParamSet& params, const Tensor& target, const Tensor& goals);

/// PointNet over the selected candidates -> 6 goals with logits (no trajectories).
/// `rows` index the candidate tensors of `h`; trajs is [rows x 60].
GoalSetTensors regress_distribution(const ParamSet& params, const HeadConfig& config,
                                    const HeatmapTensors& h, std::span<const Eigen::Index> rows,
                                    const Tensor& trajs);

/// For each goal, the candidate trajectory with the nearest endpoint (ties to
/// the higher candidate probability). Indices into `trajs` rows.
std::vector<Eigen::Index> nearest_trajectories(const Matrix& goals, const Matrix& trajs,
                                               const Matrix& probs);

/// Selects per goal its nearest candidate trajectory, blends its endpoint onto
/// the goal with a ramp over the 30 steps, then adds an MLP residual.
GoalSetTensors attach_trajectories(const ParamSet& params, const GoalSetTensors& goals,
                                   const Tensor& cand_trajs, const Tensor& cand_probs);

/// Self-attention among the 6 goals, cross-attention to the candidates, and a
/// residual update of positions, logits and trajectories.
GoalSetTensors refine_attention(const ParamSet& params, const GoalSetTensors& goals,
                                const Tensor& cand_points, const Tensor& cand_positions);

/// Per-point PointNet input features of the selected candidates.
Tensor point_features(const HeadConfig& config, const HeatmapTensors& h,
                      std::span<const Eigen::Index> rows, const Tensor& trajs);

/// Greedy selection over the heatmap: skip entries within `radius` of an
/// accepted one, halving the radius until k are found; pads with duplicates
/// of the best entries when fewer than k distinct positions exist.
/// Returns heatmap positions and duplicate flags.
struct NmsPick {
  std::size_t heatmap_index = 0;
  bool duplicate = false;
};
std::vector<NmsPick> nms_select(const GoalHeatmap& heatmap, double radius = kNmsRadius,
                                std::size_t k = kNumModes);

/// MLP(target) -> 6 x (trajectory, logit).
GoalSetTensors direct_regress(const ParamSet& params, const Tensor& target);

/// Extracts values, sorted by descending probability.
GoalSet6 to_goal_set(const GoalSetTensors& g);

/// 2 x 60 matrix M with (goal row) * M = per-step ramp (t + 1) / 30 applied to x and y.
const Matrix& ramp_matrix();

}  // namespace heatcast
