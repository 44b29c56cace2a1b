#include "heatcast/preprocess.hpp"

#include "heatcast/rng.hpp"

#include <Eigen/LU>

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <stdexcept>

namespace heatcast {

MotionVectors discretize(const AgentTrack& track) {
  if (track.history.rows() != kHistoryLength)
    throw ValidationError("history length must be " + std::to_string(kHistoryLength));
  const Eigen::Index n = kHistoryLength - 1;
  return track.history.bottomRows(n) - track.history.topRows(n);
}

Kinematics estimate_kinematics(const AgentTrack& track) {
  if (track.history.rows() != kHistoryLength)
    throw ValidationError("history length must be " + std::to_string(kHistoryLength));
  const auto& h = track.history;
  const Eigen::Index now = kHistoryLength - 1;
  const Eigen::Index half = now - 5;   // t = -0.5 s
  const Eigen::Index one = now - 10;   // t = -1.0 s
  const double v1 = (h.row(now) - h.row(half)).norm() / 0.5;
  const double v0 = (h.row(half) - h.row(one)).norm() / 0.5;

  Kinematics k;
  k.speed = v1;
  k.accel = std::clamp((v1 - v0) / 0.5, -4.0, 3.0);
  const MotionVectors mv = discretize(track);
  for (Eigen::Index i = mv.rows() - 1; i >= 0; --i) {
    const double n = mv.row(i).norm();
    if (n > 0.0) {
      k.heading = mv.row(i).transpose() / n;
      break;
    }
  }
  return k;
}

namespace {

AgentTrack transform_track(const AgentTrack& t, const Eigen::Matrix2d& a, const Vec2& b) {
  AgentTrack out;
  out.history = transform_points(t.history, a, b);
  if (t.future) out.future = transform_points(*t.future, a, b);
  return out;
}

}  // namespace

Scenario transform_scenario(const Scenario& s, const Eigen::Matrix2d& linear,
                            const Vec2& translation) {
  Scenario out;
  out.id = s.id;
  out.meta = s.meta;
  const double det = linear.determinant();
  const double length_scale = std::sqrt(std::abs(det));

  std::vector<LaneNode> nodes = s.lane_graph.nodes();
  for (auto& n : nodes) {
    n.position = linear * n.position + translation;
    n.direction = (linear * n.direction).normalized();
    n.segment_length *= length_scale;
  }
  Adjacency adj = s.lane_graph.adjacency();
  if (det < 0) std::swap(adj.left, adj.right);
  out.lane_graph = LaneGraph(std::move(nodes), std::move(adj));

  out.target = transform_track(s.target, linear, translation);
  for (const auto& c : s.context) out.context.push_back(transform_track(c, linear, translation));
  return out;
}

std::pair<Scenario, FramePose> normalize(const Scenario& s) {
  const Kinematics k = estimate_kinematics(s.target);
  FramePose pose;
  pose.origin = s.target.current();
  pose.rotation = k.speed < 0.5 ? Eigen::Matrix2d::Identity() : rotation_to(k.heading);
  const Eigen::Matrix2d inv = pose.rotation.transpose();
  return {transform_scenario(s, inv, -(inv * pose.origin)), pose};
}

Scenario denormalize(const Scenario& s, const FramePose& pose) {
  return transform_scenario(s, pose.rotation, pose.origin);
}

Forecast to_world(const Forecast& f, const FramePose& pose) {
  Forecast out = f;
  for (auto& m : out.modes) m.trajectory = transform_points(m.trajectory, pose.rotation, pose.origin);
  return out;
}

std::vector<LaneNode> sample_lane_nodes(const Centerline& c, const LaneAttributes& attrs,
                                        int first_id, double spacing) {
  const double total = c.length();
  if (!(total > 0.0)) throw std::invalid_argument("sample_lane_nodes: zero-length centerline");
  std::vector<double> at;
  for (int i = 0;; ++i) {
    const double s = spacing * i;
    if (s >= total - 1e-9) break;
    at.push_back(s);
  }
  at.push_back(total);

  std::vector<LaneNode> nodes;
  nodes.reserve(at.size());
  for (std::size_t i = 0; i < at.size(); ++i) {
    LaneNode n;
    n.id = first_id + static_cast<int>(i);
    n.position = c.point_at(at[i]);
    n.direction = c.tangent_at(at[i]);
    n.segment_length = i + 1 < at.size() ? at[i + 1] - at[i] : at[i] - at[i - 1];
    n.is_turn = attrs.is_turn;
    n.is_intersection = attrs.is_intersection;
    n.speed_limit = attrs.speed_limit;
    nodes.push_back(n);
  }
  return nodes;
}

std::vector<LaneNode> sample_lane_nodes(const Points& polyline, const LaneAttributes& attrs,
                                        int first_id, double spacing) {
  return sample_lane_nodes(Centerline::from_polyline(polyline), attrs, first_id, spacing);
}

LaneGraph build_adjacency(const std::vector<LaneSpec>& lanes) {
  std::map<int, std::size_t> by_id;
  for (std::size_t i = 0; i < lanes.size(); ++i) {
    if (lanes[i].nodes.empty())
      throw ValidationError("lane " + std::to_string(lanes[i].lane_id) + " has no nodes");
    if (!by_id.emplace(lanes[i].lane_id, i).second)
      throw ValidationError("duplicate lane id " + std::to_string(lanes[i].lane_id));
  }
  auto lane = [&](int id, int from) -> const LaneSpec& {
    auto it = by_id.find(id);
    if (it == by_id.end())
      throw ValidationError("dangling lane reference: lane " + std::to_string(from) +
                            " refers to unknown lane " + std::to_string(id));
    return lanes[it->second];
  };

  std::vector<LaneNode> nodes;
  Adjacency adj;
  for (const auto& l : lanes) {
    const std::size_t base = nodes.size();
    nodes.insert(nodes.end(), l.nodes.begin(), l.nodes.end());
    for (std::size_t i = 0; i + 1 < l.nodes.size(); ++i)
      adj.successor.emplace_back(l.nodes[i].id, l.nodes[i + 1].id);

    LaneNode& last = nodes[base + l.nodes.size() - 1];
    double gap = 0.0;
    for (int succ_id : l.successors) {
      const LaneNode& first = lane(succ_id, l.lane_id).nodes.front();
      adj.successor.emplace_back(last.id, first.id);
      gap = std::max(gap, (first.position - last.position).norm());
    }
    if (gap > 1e-9) last.segment_length = std::min(gap, 10.0);

    auto link = [&](std::optional<int> other, std::vector<Edge>& out) {
      if (!other) return;
      const LaneSpec& nb = lane(*other, l.lane_id);
      for (const auto& u : l.nodes) {
        const LaneNode* best = nullptr;
        double best_off = 0.0;
        for (const auto& w : nb.nodes) {
          const double off = std::abs((w.position - u.position).dot(u.direction));
          if (!best || off < best_off) {
            best = &w;
            best_off = off;
          }
        }
        if (best && best_off <= 0.5 * kNodeSpacing + 1e-9) out.emplace_back(u.id, best->id);
      }
    };
    link(l.left, adj.left);
    link(l.right, adj.right);
  }
  for (const auto& [a, b] : adj.successor) adj.predecessor.emplace_back(b, a);
  return LaneGraph(std::move(nodes), std::move(adj));
}

Scenario augment(const Scenario& s, const Augmentation& aug, std::uint64_t seed) {
  const Vec2 pivot = s.target.current();
  auto about_pivot = [&](const Eigen::Matrix2d& a) {
    return transform_scenario(s, a, pivot - a * pivot);
  };
  switch (aug.kind) {
    case AugmentKind::flip: {
      Eigen::Matrix2d a;
      a << 1, 0, 0, -1;
      return about_pivot(a);
    }
    case AugmentKind::rotate:
      if (!(aug.value >= -std::numbers::pi && aug.value <= std::numbers::pi))
        throw std::invalid_argument("rotate: theta must lie in [-pi, pi]");
      return about_pivot(rotation(aug.value));
    case AugmentKind::scale:
      if (!(aug.value >= 0.8 && aug.value <= 1.25))
        throw std::invalid_argument("scale: factor must lie in [0.8, 1.25]");
      return about_pivot(aug.value * Eigen::Matrix2d::Identity());
    case AugmentKind::history_dropout: {
      if (!(aug.value >= 0.0 && aug.value <= 0.3))
        throw std::invalid_argument("history_dropout: rate must lie in [0, 0.3]");
      Scenario out = s;
      Rng rng(seed);
      auto drop = [&](Points& h) {
        std::vector<bool> keep(static_cast<std::size_t>(h.rows()), true);
        for (Eigen::Index i = 1; i + 1 < h.rows(); ++i)
          keep[static_cast<std::size_t>(i)] = !rng.bernoulli(aug.value);
        Eigen::Index prev = 0;
        for (Eigen::Index i = 1; i < h.rows(); ++i) {
          if (!keep[static_cast<std::size_t>(i)]) continue;
          for (Eigen::Index j = prev + 1; j < i; ++j) {
            const double w = static_cast<double>(j - prev) / static_cast<double>(i - prev);
            h.row(j) = (1.0 - w) * h.row(prev) + w * h.row(i);
          }
          prev = i;
        }
      };
      drop(out.target.history);
      for (auto& c : out.context) drop(c.history);
      return out;
    }
  }
  throw std::invalid_argument("unknown augmentation");
}

}  // namespace heatcast
