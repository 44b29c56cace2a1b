#pragma once

#include "heatcast/geometry.hpp"
#include "heatcast/scene.hpp"

#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

namespace heatcast {

inline constexpr double kNodeSpacing = 2.0;

/// 19 x 2 per-step displacements of a 20-point history.
using MotionVectors = Points;

struct Kinematics {
  double speed = 0.0;         // m/s
  double accel = 0.0;         // m/s^2, clamped to [-4, 3]
  Vec2 heading = Vec2::UnitX();
};

/// Local-to-world transform: world = rotation * local + origin.
struct FramePose {
  Vec2 origin = Vec2::Zero();
  Eigen::Matrix2d rotation = Eigen::Matrix2d::Identity();

  Vec2 to_world(const Vec2& local) const { return rotation * local + origin; }
  Vec2 to_local(const Vec2& world) const { return rotation.transpose() * (world - origin); }
};

MotionVectors discretize(const AgentTrack& track);

/// Window-difference estimator over 0.5 s windows ending at t = 0 and t = -0.5 s.
Kinematics estimate_kinematics(const AgentTrack& track);

/// Applies p -> A p + t to every position, label and lane direction in the
/// scene. A reflection (det A < 0) also swaps the left/right relations.
Scenario transform_scenario(const Scenario& scenario, const Eigen::Matrix2d& linear,
                            const Vec2& translation);

/// Target-centric frame: last observed target point at the origin, heading
/// along +x (no rotation below 0.5 m/s). Returns the pose that maps back.
std::pair<Scenario, FramePose> normalize(const Scenario& scenario);
Scenario denormalize(const Scenario& scenario, const FramePose& pose);
Forecast to_world(const Forecast& forecast, const FramePose& pose);

struct LaneAttributes {
  bool is_turn = false;
  bool is_intersection = false;
  double speed_limit = 13.9;
};

/// Nodes at arclength 0, s, 2s, ... plus the endpoint. Node ids count up from
/// `first_id`. segment_length is the distance to the next sample; the final
/// node repeats the preceding interval.
std::vector<LaneNode> sample_lane_nodes(const Centerline& centerline, const LaneAttributes& attrs,
                                        int first_id, double spacing = kNodeSpacing);
std::vector<LaneNode> sample_lane_nodes(const Points& polyline, const LaneAttributes& attrs,
                                        int first_id, double spacing = kNodeSpacing);

/// One map lane: its sampled nodes in driving order and its topology.
struct LaneSpec {
  int lane_id = 0;
  std::vector<LaneNode> nodes;
  std::vector<int> successors;  // lane ids
  std::optional<int> left;
  std::optional<int> right;
};

/// Node-level adjacency from lane topology. Within a lane, consecutive nodes
/// are successors; the last node of A links to the first node of each lane
/// succeeding A (its segment_length becomes the gap to that node); left/right
/// link each node to the longitudinally nearest node of the neighbor lane.
LaneGraph build_adjacency(const std::vector<LaneSpec>& lanes);

enum class AugmentKind { flip, rotate, scale, history_dropout };

struct Augmentation {
  AugmentKind kind = AugmentKind::flip;
  double value = 0.0;  // theta (rad), scale factor, or dropout rate
};

/// Flip/rotate/scale act about the target's last observed point on the whole
/// scene including labels. Dropout replaces interior history points by linear
/// interpolation of their kept neighbors.
Scenario augment(const Scenario& scenario, const Augmentation& aug, std::uint64_t seed);

}  // namespace heatcast
