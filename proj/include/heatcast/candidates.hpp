#pragma once

#include "heatcast/preprocess.hpp"
#include "heatcast/scene.hpp"

#include <vector>

namespace heatcast {

inline constexpr double kSeedRadius = 5.0;        // m
inline constexpr double kSeedMaxAngleDeg = 60.0;
inline constexpr std::size_t kMaxCandidates = 256;

struct CandidatePath {
  std::vector<int> node_ids;
  std::vector<double> arclength;  // meters from the target's projection, strictly increasing
  bool used_neighbor_hop = false;
};

struct GoalCandidate {
  int node_id = -1;  // -1 for the constant-velocity fallback
  Vec2 position = Vec2::Zero();
  int path_id = -1;
  double arclength = 0.0;
};

struct ReachWindow {
  double lo = 0.0;
  double hi = 0.0;
};

/// Lane nodes within 5 m of the target's current position whose direction is
/// within 60 degrees of the heading. Falls back to the single nearest node.
std::vector<int> correlate_lanes(const Scenario& scenario, const Kinematics& kin);

/// Arclength band reachable in 3 s under a +/-2 m/s^2 acceleration band and 5 m slack.
ReachWindow reachability_window(const Kinematics& kin);

/// Depth-first expansion along successors from each upstream-most seed until
/// arclength reaches `d_hi`, allowing at most one diagonal lane change per
/// path (u -> successor of a left/right neighbor of u).
std::vector<CandidatePath> search_paths(const Scenario& scenario, const std::vector<int>& seeds,
                                        double d_hi);

/// Path nodes inside the window, first occurrence per node id, thinned
/// farthest-first to at most 256.
std::vector<GoalCandidate> sample_goals(const Scenario& scenario,
                                        const std::vector<CandidatePath>& paths,
                                        const ReachWindow& window);

struct CandidateSet {
  Kinematics kinematics;
  std::vector<int> seeds;
  ReachWindow window;
  std::vector<CandidatePath> paths;
  std::vector<GoalCandidate> goals;
};

CandidateSet generate_candidates(const Scenario& scenario);

}  // namespace heatcast
