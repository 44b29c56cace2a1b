#include "heatcast/candidates.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <set>
#include <stdexcept>

namespace heatcast {

std::vector<int> correlate_lanes(const Scenario& s, const Kinematics& kin) {
  const auto& nodes = s.lane_graph.nodes();
  if (nodes.empty()) throw std::invalid_argument("correlate_lanes: empty lane graph");
  const Vec2 origin = s.target.current();
  const double cos_gate = std::cos(kSeedMaxAngleDeg * std::numbers::pi / 180.0);

  std::vector<int> seeds;
  std::size_t nearest = 0;
  double nearest_d = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const double d = (nodes[i].position - origin).norm();
    if (d < nearest_d) {
      nearest_d = d;
      nearest = i;
    }
    if (d <= kSeedRadius && nodes[i].direction.dot(kin.heading) > cos_gate)
      seeds.push_back(nodes[i].id);
  }
  if (seeds.empty()) seeds.push_back(nodes[nearest].id);
  return seeds;
}

ReachWindow reachability_window(const Kinematics& k) {
  const double t = kHorizonSeconds;
  const double slow = k.speed * t + 0.5 * std::max(k.accel - 2.0, -4.0) * t * t;
  const double fast = k.speed * t + 0.5 * std::min(k.accel + 2.0, 3.0) * t * t;
  return {std::max(0.0, std::max(0.0, slow) - 5.0), fast + 5.0};
}

namespace {

struct Search {
  const LaneGraph& graph;
  double d_hi;
  std::vector<std::size_t> path;
  std::vector<double> cum;
  std::vector<char> on_path;
  bool hopped = false;
  std::set<std::vector<std::size_t>> seen;
  std::vector<CandidatePath> out;

  void emit() {
    if (!seen.insert(path).second) return;
    CandidatePath p;
    for (auto i : path) p.node_ids.push_back(graph.nodes()[i].id);
    p.arclength = cum;
    p.used_neighbor_hop = hopped;
    out.push_back(std::move(p));
  }

  void step(std::size_t next, double c, bool hop) {
    path.push_back(next);
    cum.push_back(c);
    on_path[next] = 1;
    const bool was = hopped;
    hopped = hopped || hop;
    expand();
    hopped = was;
    on_path[next] = 0;
    cum.pop_back();
    path.pop_back();
  }

  void expand() {
    const std::size_t u = path.back();
    const double c = cum.back();
    if (c >= d_hi) {
      emit();
      return;
    }
    const double next_c = c + graph.nodes()[u].segment_length;
    bool extended = false;
    for (auto s : graph.successors(u)) {
      if (on_path[s]) continue;
      extended = true;
      step(s, next_c, false);
    }
    if (!hopped) {
      for (const auto* side : {&graph.lefts(u), &graph.rights(u)}) {
        for (auto w : *side) {
          for (auto s : graph.successors(w)) {
            if (on_path[s]) continue;
            extended = true;
            step(s, next_c, true);
          }
        }
      }
    }
    if (!extended) emit();
  }
};

}  // namespace

std::vector<CandidatePath> search_paths(const Scenario& s, const std::vector<int>& seeds,
                                        double d_hi) {
  const LaneGraph& g = s.lane_graph;
  if (seeds.empty()) throw std::invalid_argument("search_paths: no seeds");
  const Vec2 origin = s.target.current();

  // A seed whose predecessor is also a seed lies on the same lane run; expand
  // only from the upstream-most seed of each run.
  std::set<std::size_t> seed_idx;
  for (int id : seeds) seed_idx.insert(g.index_of(id));
  std::vector<std::size_t> roots;
  for (int id : seeds) {
    const std::size_t i = g.index_of(id);
    const auto& preds = g.predecessors(i);
    const bool inner = std::any_of(preds.begin(), preds.end(),
                                   [&](std::size_t p) { return seed_idx.count(p) > 0; });
    if (!inner) roots.push_back(i);
  }
  if (roots.empty()) {
    // Every seed has a seeded predecessor (a small loop); start from the nearest.
    std::size_t best = g.index_of(seeds.front());
    for (int id : seeds) {
      const std::size_t i = g.index_of(id);
      if ((g.nodes()[i].position - origin).norm() < (g.nodes()[best].position - origin).norm())
        best = i;
    }
    roots.push_back(best);
  }

  Search search{g, d_hi, {}, {}, std::vector<char>(g.size(), 0), false, {}, {}};
  for (auto r : roots) {
    const LaneNode& n = g.nodes()[r];
    search.step(r, (n.position - origin).dot(n.direction), false);
  }
  return std::move(search.out);
}

std::vector<GoalCandidate> sample_goals(const Scenario& s, const std::vector<CandidatePath>& paths,
                                        const ReachWindow& window) {
  std::vector<GoalCandidate> out;
  std::set<int> taken;
  for (std::size_t p = 0; p < paths.size(); ++p) {
    const auto& path = paths[p];
    for (std::size_t i = 0; i < path.node_ids.size(); ++i) {
      const double a = path.arclength[i];
      if (a < window.lo || a > window.hi) continue;
      if (!taken.insert(path.node_ids[i]).second) continue;
      out.push_back({path.node_ids[i], s.lane_graph.node(path.node_ids[i]).position,
                     static_cast<int>(p), a});
    }
  }
  if (out.size() <= kMaxCandidates) return out;

  // Farthest-first thinning from the first candidate; original order is kept.
  std::vector<double> dist(out.size(), std::numeric_limits<double>::infinity());
  std::vector<char> chosen(out.size(), 0);
  std::size_t current = 0;
  for (std::size_t n = 0; n < kMaxCandidates; ++n) {
    chosen[current] = 1;
    std::size_t far = 0;
    double far_d = -1.0;
    for (std::size_t i = 0; i < out.size(); ++i) {
      dist[i] = std::min(dist[i], (out[i].position - out[current].position).squaredNorm());
      if (!chosen[i] && dist[i] > far_d) {
        far_d = dist[i];
        far = i;
      }
    }
    current = far;
  }
  std::vector<GoalCandidate> kept;
  kept.reserve(kMaxCandidates);
  for (std::size_t i = 0; i < out.size(); ++i)
    if (chosen[i]) kept.push_back(out[i]);
  return kept;
}

CandidateSet generate_candidates(const Scenario& s) {
  CandidateSet c;
  c.kinematics = estimate_kinematics(s.target);
  c.window = reachability_window(c.kinematics);
  if (s.lane_graph.empty()) return c;
  c.seeds = correlate_lanes(s, c.kinematics);
  c.paths = search_paths(s, c.seeds, c.window.hi);
  c.goals = sample_goals(s, c.paths, c.window);
  return c;
}

}  // namespace heatcast
