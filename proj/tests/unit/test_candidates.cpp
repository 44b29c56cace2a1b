#include "helpers.hpp"

#include "heatcast/candidates.hpp"
#include "heatcast/preprocess.hpp"
#include "heatcast/synthetic.hpp"

#include <cmath>
#include <functional>
#include <numbers>
#include <set>

using namespace heatcast;
using test::chain;
using test::chain_edges;
using test::graph_from;

namespace {

Scenario scene_on(LaneGraph g, double speed = 10.0) {
  Scenario s;
  s.id = "hand";
  s.lane_graph = std::move(g);
  s.target = test::straight_track(speed);
  return s;
}

Kinematics heading(Vec2 h) {
  Kinematics k;
  k.speed = 10.0;
  k.heading = h.normalized();
  return k;
}

std::vector<Scenario> generated(int n, std::uint64_t seed, std::array<double, 4> mix = {0.25, 0.25, 0.25, 0.25},
                                double noise = 0.0) {
  GeneratorConfig g;
  g.n_scenes = n;
  g.mix = {mix[0], mix[1], mix[2], mix[3]};
  g.noise_sigma = noise;
  return generate_synthetic(g, seed);
}

}  // namespace

TEST_CASE("lane correlation seeds") {
  SUBCASE("lane through the origin along the heading") {
    const Scenario s = scene_on(graph_from(chain(11, -10, 0, 2, 0), chain_edges(11, 0)));
    const auto seeds = correlate_lanes(s, heading(Vec2::UnitX()));
    CHECK(std::find(seeds.begin(), seeds.end(), 5) != seeds.end());
    for (int id : seeds) CHECK(s.lane_graph.node(id).position.norm() <= kSeedRadius);
  }
  SUBCASE("reversed heading falls back to the single nearest node") {
    const Scenario s = scene_on(graph_from(chain(11, -10.3, 0, 2, 0), chain_edges(11, 0)));
    const auto seeds = correlate_lanes(s, heading(-Vec2::UnitX()));
    REQUIRE(seeds.size() == 1);
    CHECK(seeds[0] == 5);
  }
  SUBCASE("two parallel lanes 3 m apart match a brute-force gate") {
    auto a = chain(11, -10, 0, 2, 0);
    auto b = chain(11, -10, 3, 2, 100);
    // Tilt a few nodes of the second lane past the angle gate.
    b[4].direction = Vec2(std::cos(1.2), std::sin(1.2));
    b[6].direction = Vec2(std::cos(0.9), std::sin(0.9));
    std::vector<LaneNode> nodes = a;
    nodes.insert(nodes.end(), b.begin(), b.end());
    auto edges = chain_edges(11, 0);
    for (const auto& e : chain_edges(11, 100)) edges.push_back(e);
    const Scenario s = scene_on(graph_from(nodes, edges));
    const Kinematics k = heading(Vec2::UnitX());

    std::set<int> expect;
    for (const auto& n : nodes) {
      const double angle = std::acos(std::clamp(n.direction.dot(k.heading), -1.0, 1.0));
      if (n.position.norm() <= 5.0 && angle < std::numbers::pi / 3) expect.insert(n.id);
    }
    const auto seeds = correlate_lanes(s, k);
    CHECK(std::set<int>(seeds.begin(), seeds.end()) == expect);
    CHECK(expect.count(5) == 1);
    CHECK(expect.count(105) == 1);
    CHECK(expect.count(104) == 0);
    CHECK(expect.count(106) == 1);
  }
  SUBCASE("empty graph is an error") {
    const Scenario s = scene_on(LaneGraph{});
    CHECK_THROWS_AS(correlate_lanes(s, heading(Vec2::UnitX())), std::invalid_argument);
  }
}

TEST_CASE("reachability window") {
  const auto window = [](double v, double a) {
    Kinematics k;
    k.speed = v;
    k.accel = a;
    return reachability_window(k);
  };
  auto w = window(10, 0);
  CHECK(w.lo == doctest::Approx(16.0));
  CHECK(w.hi == doctest::Approx(44.0));
  w = window(0, 0);
  CHECK(w.lo == 0.0);
  CHECK(w.hi == doctest::Approx(14.0));
  w = window(9.5, 2);
  CHECK(w.lo == doctest::Approx(23.5));
  // Upper accel band is capped at 3: 28.5 + 0.5 * 3 * 9 + 5.
  CHECK(w.hi == doctest::Approx(47.0));
  // Hard braking: lower accel band clamps at -4.
  w = window(5, -4);
  CHECK(w.lo == 0.0);
  CHECK(w.hi == doctest::Approx(5 * 3 + 0.5 * -2 * 9 + 5));
}

TEST_CASE("path search") {
  SUBCASE("single straight lane gives one path") {
    const Scenario s = scene_on(graph_from(chain(40, -10, 0, 2, 0), chain_edges(40, 0)));
    const auto paths = search_paths(s, correlate_lanes(s, heading(Vec2::UnitX())), 44.0);
    REQUIRE(paths.size() == 1);
    CHECK_FALSE(paths[0].used_neighbor_hop);
    CHECK(paths[0].node_ids.front() == 3);  // upstream-most seed at x = -4
    CHECK(paths[0].arclength.front() == doctest::Approx(-4.0));
    CHECK(paths[0].arclength.back() >= 44.0);
    CHECK(paths[0].arclength.back() < 44.0 + 2.0);
  }
  SUBCASE("fork gives one path per branch") {
    auto trunk = chain(10, -4, 0, 2, 0);
    auto left = chain(20, 16, 0, 2, 100);
    auto right = chain(20, 16, -4, 2, 200);
    std::vector<LaneNode> nodes = trunk;
    nodes.insert(nodes.end(), left.begin(), left.end());
    nodes.insert(nodes.end(), right.begin(), right.end());
    auto edges = chain_edges(10, 0);
    for (const auto& e : chain_edges(20, 100)) edges.push_back(e);
    for (const auto& e : chain_edges(20, 200)) edges.push_back(e);
    edges.emplace_back(9, 100);
    edges.emplace_back(9, 200);
    const Scenario s = scene_on(graph_from(nodes, edges));
    const auto paths = search_paths(s, {0, 1, 2}, 40.0);
    REQUIRE(paths.size() == 2);
    CHECK(paths[0].node_ids[10] != paths[1].node_ids[10]);
  }
  SUBCASE("one neighbor hop per path") {
    auto a = chain(30, 0, 0, 2, 0);
    auto b = chain(30, 0, 3.5, 2, 100);
    std::vector<LaneNode> nodes = a;
    nodes.insert(nodes.end(), b.begin(), b.end());
    auto edges = chain_edges(30, 0);
    for (const auto& e : chain_edges(30, 100)) edges.push_back(e);
    std::vector<Edge> left, right;
    for (int i = 0; i < 30; ++i) {
      left.emplace_back(i, 100 + i);
      right.emplace_back(100 + i, i);
    }
    const Scenario s = scene_on(graph_from(nodes, edges, left, right));
    const auto paths = search_paths(s, {0}, 20.0);
    std::set<std::vector<int>> unique;
    for (const auto& p : paths) {
      unique.insert(p.node_ids);
      int switches = 0;
      for (std::size_t i = 1; i < p.node_ids.size(); ++i)
        switches += (p.node_ids[i] >= 100) != (p.node_ids[i - 1] >= 100);
      CHECK(switches <= 1);
      CHECK(p.used_neighbor_hop == (switches == 1));
    }
    CHECK(unique.size() == paths.size());
    // Stay on lane, or hop at any of the 10 steps before reaching 20 m.
    CHECK(paths.size() == 11);
  }
}

TEST_CASE("path search on a cyclic graph matches bounded enumeration") {
  // Ten nodes on a loop with three chords; node 0 sits at the origin facing +x.
  std::vector<LaneNode> nodes;
  for (int i = 0; i < 10; ++i) {
    const double t = 2 * std::numbers::pi * i / 10.0;
    LaneNode n;
    n.id = i;
    n.position = Vec2(5 * std::sin(t), 5 - 5 * std::cos(t));
    n.direction = Vec2(std::cos(t), std::sin(t));
    n.segment_length = 1.5 + 0.25 * i;
    nodes.push_back(n);
  }
  std::vector<Edge> edges;
  for (int i = 0; i < 10; ++i) edges.emplace_back(i, (i + 1) % 10);
  edges.emplace_back(2, 7);
  edges.emplace_back(8, 3);
  edges.emplace_back(5, 0);
  const Scenario s = scene_on(graph_from(nodes, edges));
  std::vector<std::vector<int>> succ(10);
  for (const auto& [a, b] : edges) succ[a].push_back(b);

  for (double d_hi : {4.0, 12.0, 20.0, 1000.0}) {
    CAPTURE(d_hi);
    const auto paths = search_paths(s, {0}, d_hi);

    // Enumerate every simple successor walk from node 0 and keep the ones the
    // search must emit: first to reach d_hi, or stuck below it.
    std::set<std::vector<int>> expect;
    std::vector<std::vector<int>> stack{{0}};
    while (!stack.empty()) {
      const auto walk = stack.back();
      stack.pop_back();
      double cum = 0.0;
      bool reached_early = false;
      for (std::size_t i = 0; i + 1 < walk.size(); ++i) {
        if (cum >= d_hi) reached_early = true;
        cum += nodes[walk[i]].segment_length;
      }
      if (reached_early) continue;
      const std::set<int> on(walk.begin(), walk.end());
      bool stuck = true;
      for (int n : succ[walk.back()]) {
        if (on.count(n)) continue;
        stuck = false;
        auto next = walk;
        next.push_back(n);
        stack.push_back(next);
      }
      if (cum >= d_hi || stuck) expect.insert(walk);
    }

    std::set<std::vector<int>> got;
    for (const auto& p : paths) {
      got.insert(p.node_ids);
      for (std::size_t i = 1; i < p.arclength.size(); ++i) CHECK(p.arclength[i] > p.arclength[i - 1]);
      CHECK(p.arclength.back() <= d_hi + 1.5 + 0.25 * 9);
    }
    CHECK(got.size() == paths.size());
    CHECK(got == expect);
  }
}

TEST_CASE("goal sampling") {
  SUBCASE("straight path with 2 m nodes and window [16, 44]") {
    const Scenario s = scene_on(graph_from(chain(40, 0, 0, 2, 0), chain_edges(40, 0)));
    const auto paths = search_paths(s, {0}, 44.0);
    const auto goals = sample_goals(s, paths, {16.0, 44.0});
    REQUIRE(goals.size() == 15);
    for (std::size_t i = 0; i < goals.size(); ++i) {
      CHECK(goals[i].arclength == doctest::Approx(16.0 + 2.0 * i));
      CHECK(goals[i].position == s.lane_graph.node(goals[i].node_id).position);
    }
  }
  SUBCASE("window [0, 14] on a 10 m path") {
    const Scenario s = scene_on(graph_from(chain(6, 0, 0, 2, 0), chain_edges(6, 0)));
    const auto goals = sample_goals(s, search_paths(s, {0}, 14.0), {0.0, 14.0});
    REQUIRE(goals.size() == 6);
    CHECK(goals.back().arclength == doctest::Approx(10.0));
  }
  SUBCASE("fork scenes put candidates on both branches") {
    int checked = 0;
    for (const auto& raw : generated(40, 77, {0, 0, 1, 0})) {
      const Scenario s = normalize(raw).first;
      const auto c = generate_candidates(s);
      const LaneGraph& g = s.lane_graph;
      std::set<int> goal_ids;
      for (const auto& goal : c.goals) goal_ids.insert(goal.node_id);
      // Brute force: for every split node, collect each branch's downstream closure.
      for (std::size_t u = 0; u < g.size(); ++u) {
        if (g.successors(u).size() < 2) continue;
        std::set<int> on_any_path;
        for (const auto& p : c.paths) on_any_path.insert(p.node_ids.begin(), p.node_ids.end());
        if (!on_any_path.count(g.nodes()[u].id)) continue;
        for (auto b : g.successors(u)) {
          std::set<std::size_t> seen{b};
          std::vector<std::size_t> todo{b};
          while (!todo.empty()) {
            const auto x = todo.back();
            todo.pop_back();
            for (auto y : g.successors(x))
              if (seen.insert(y).second) todo.push_back(y);
          }
          // Branches that reach past the window start must carry a candidate.
          double far = 0.0;
          for (auto x : seen) far = std::max(far, g.nodes()[x].position.norm());
          if (far < c.window.lo + 2.0) continue;
          bool hit = false;
          for (auto x : seen) hit = hit || goal_ids.count(g.nodes()[x].id) > 0;
          CHECK(hit);
          ++checked;
        }
      }
    }
    CHECK(checked >= 40);
  }
}

TEST_CASE("farthest-first thinning caps the candidate count") {
  // 600 m lane with 1 m nodes: 601 nodes fall in a [0, 600] window.
  auto nodes = chain(601, 0, 0, 1, 0);
  const Scenario s = scene_on(graph_from(nodes, chain_edges(601, 0)));
  const auto paths = search_paths(s, {0}, 600.0);
  const auto goals = sample_goals(s, paths, {0.0, 600.0});
  REQUIRE(goals.size() == kMaxCandidates);
  for (std::size_t i = 1; i < goals.size(); ++i) CHECK(goals[i].arclength > goals[i - 1].arclength);
  CHECK(goals.front().node_id == 0);

  // Farthest-first property: covering radius of the dropped nodes never exceeds
  // the smallest gap between kept nodes.
  double min_gap = 1e9;
  for (std::size_t i = 1; i < goals.size(); ++i)
    min_gap = std::min(min_gap, goals[i].arclength - goals[i - 1].arclength);
  double cover = 0.0;
  for (const auto& n : nodes) {
    double d = 1e9;
    for (const auto& g : goals) d = std::min(d, (n.position - g.position).norm());
    cover = std::max(cover, d);
  }
  CHECK(cover <= min_gap + 1e-9);
  CHECK(cover <= 3.0);
}

TEST_CASE("candidate invariants on generated scenes") {
  for (const auto& raw : generated(60, 5, {0.25, 0.25, 0.25, 0.25}, 0.1)) {
    const Scenario s = normalize(raw).first;
    const auto c = generate_candidates(s);
    CHECK(c.goals.size() <= kMaxCandidates);
    std::set<int> ids;
    for (std::size_t i = 0; i < c.goals.size(); ++i) {
      const auto& g = c.goals[i];
      CHECK(ids.insert(g.node_id).second);
      CHECK(g.arclength >= c.window.lo);
      CHECK(g.arclength <= c.window.hi);
      CHECK(g.position == s.lane_graph.node(g.node_id).position);
      if (i > 0) {
        const auto& prev = c.goals[i - 1];
        CHECK((prev.path_id < g.path_id || (prev.path_id == g.path_id && prev.arclength < g.arclength)));
      }
    }
    for (const auto& p : c.paths) {
      CHECK(p.node_ids.size() == p.arclength.size());
      for (std::size_t i = 1; i < p.arclength.size(); ++i) CHECK(p.arclength[i] > p.arclength[i - 1]);
    }
    // Pure function of the scene.
    const auto again = generate_candidates(s);
    REQUIRE(again.goals.size() == c.goals.size());
    for (std::size_t i = 0; i < c.goals.size(); ++i) CHECK(again.goals[i].node_id == c.goals[i].node_id);
  }
}

TEST_CASE("ground-truth goal coverage on noiseless scenes") {
  int covered = 0, total = 0;
  for (const auto& raw : generated(200, 101)) {
    const Scenario s = normalize(raw).first;
    const auto c = generate_candidates(s);
    const Vec2 goal = s.target.future->row(kFutureLength - 1).transpose();
    double best = 1e9;
    for (const auto& g : c.goals) best = std::min(best, (g.position - goal).norm());
    covered += best <= 3.0;
    ++total;
  }
  CHECK(covered >= 0.95 * total);
}
