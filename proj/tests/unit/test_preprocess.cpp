#include "helpers.hpp"

#include "heatcast/geometry.hpp"
#include "heatcast/metrics.hpp"
#include "heatcast/preprocess.hpp"
#include "heatcast/synthetic.hpp"

#include <cmath>
#include <functional>
#include <set>
#include <numbers>

using namespace heatcast;

namespace {

AgentTrack track_from(const std::function<Vec2(double)>& pos) {
  AgentTrack t;
  t.history.resize(kHistoryLength, 2);
  for (int i = 0; i < kHistoryLength; ++i) t.history.row(i) = pos(-0.1 * (kHistoryLength - 1 - i)).transpose();
  Points f(kFutureLength, 2);
  for (int i = 0; i < kFutureLength; ++i) f.row(i) = pos(0.1 * (i + 1)).transpose();
  t.future = f;
  return t;
}

double max_abs_diff(const Scenario& a, const Scenario& b) {
  double m = (a.target.history - b.target.history).cwiseAbs().maxCoeff();
  m = std::max(m, (*a.target.future - *b.target.future).cwiseAbs().maxCoeff());
  for (std::size_t i = 0; i < a.lane_graph.size(); ++i) {
    m = std::max(m, (a.lane_graph.nodes()[i].position - b.lane_graph.nodes()[i].position).cwiseAbs().maxCoeff());
    m = std::max(m, (a.lane_graph.nodes()[i].direction - b.lane_graph.nodes()[i].direction).cwiseAbs().maxCoeff());
  }
  for (std::size_t i = 0; i < a.context.size(); ++i)
    m = std::max(m, (a.context[i].history - b.context[i].history).cwiseAbs().maxCoeff());
  return m;
}

std::vector<Scenario> scenes(int n, std::uint64_t seed) {
  GeneratorConfig g;
  g.n_scenes = n;
  return generate_synthetic(g, seed);
}

}  // namespace

TEST_CASE("motion vectors") {
  SUBCASE("constant velocity") {
    const auto mv = discretize(track_from([](double t) { return Vec2(10 * t, 0); }));
    REQUIRE(mv.rows() == kHistoryLength - 1);
    for (Eigen::Index i = 0; i < mv.rows(); ++i) {
      CHECK(mv(i, 0) == doctest::Approx(1.0).epsilon(1e-12));
      CHECK(mv(i, 1) == 0.0);
    }
  }
  SUBCASE("stationary") {
    const auto mv = discretize(track_from([](double) { return Vec2(3, 4); }));
    CHECK(mv.cwiseAbs().maxCoeff() == 0.0);
  }
  SUBCASE("accelerating track matches closed-form differences") {
    const auto x = [](double t) { return 10 * t + t * t; };
    const auto mv = discretize(track_from([&](double t) { return Vec2(x(t), 0); }));
    for (Eigen::Index i = 0; i < mv.rows(); ++i) {
      const double t1 = -0.1 * static_cast<double>(kHistoryLength - 2 - i);
      CHECK(std::abs(mv(i, 0) - (x(t1) - x(t1 - 0.1))) < 1e-12);
    }
  }
}

TEST_CASE("window-difference kinematics") {
  SUBCASE("uniform motion") {
    const auto k = estimate_kinematics(track_from([](double t) { return Vec2(5 * t, 0); }));
    CHECK(k.speed == doctest::Approx(5.0));
    CHECK(std::abs(k.accel) < 1e-9);
  }
  SUBCASE("x = 10t + t^2: windows give 9.5 and 8.5 m/s") {
    const auto k = estimate_kinematics(track_from([](double t) { return Vec2(10 * t + t * t, 0); }));
    CHECK(k.speed == doctest::Approx(9.5));
    CHECK(k.accel == doctest::Approx(2.0));
    CHECK(k.heading.isApprox(Vec2::UnitX()));
  }
  SUBCASE("stationary falls back to +x") {
    const auto k = estimate_kinematics(track_from([](double) { return Vec2(1, 1); }));
    CHECK(k.speed == 0.0);
    CHECK(k.accel == 0.0);
    CHECK(k.heading == Vec2::UnitX());
  }
  SUBCASE("acceleration is clamped to [-4, 3]") {
    const auto hard = estimate_kinematics(track_from([](double t) { return Vec2(20 * t + 10 * t * t, 0); }));
    CHECK(hard.accel == 3.0);
    const auto brake = estimate_kinematics(track_from([](double t) { return Vec2(20 * t - 10 * t * t, 0); }));
    CHECK(brake.accel == -4.0);
  }
}

TEST_CASE("normalization") {
  SUBCASE("motion along +y becomes motion along +x") {
    Scenario s = scenes(1, 2)[0];
    s.target = track_from([](double t) { return Vec2(7, 8 * t); });
    const auto [local, pose] = normalize(s);
    const auto mv = discretize(local.target);
    CHECK(mv(mv.rows() - 1, 0) == doctest::Approx(0.8));
    CHECK(std::abs(mv(mv.rows() - 1, 1)) < 1e-12);
    CHECK(local.target.current().norm() < 1e-12);
  }
  SUBCASE("stationary target is a pure translation") {
    Scenario s = scenes(1, 2)[0];
    s.target = track_from([](double) { return Vec2(-4, 2); });
    const auto [local, pose] = normalize(s);
    CHECK(pose.rotation == Eigen::Matrix2d::Identity());
    CHECK(pose.origin == Vec2(-4, 2));
  }
  SUBCASE("denormalize inverts normalize") {
    for (const auto& s : scenes(20, 17)) {
      const auto [local, pose] = normalize(s);
      CHECK(max_abs_diff(denormalize(local, pose), s) < 1e-9);
    }
  }
}

TEST_CASE("lane node sampling") {
  SUBCASE("straight 10 m line") {
    Points line(2, 2);
    line << 0, 0, 10, 0;
    const auto nodes = sample_lane_nodes(line, {}, 100);
    REQUIRE(nodes.size() == 6);
    for (int i = 0; i < 6; ++i) {
      CHECK(nodes[i].position.x() == doctest::Approx(2.0 * i));
      CHECK(nodes[i].id == 100 + i);
    }
  }
  SUBCASE("1.5 m stub keeps both ends") {
    Points line(2, 2);
    line << 0, 0, 0, 1.5;
    const auto nodes = sample_lane_nodes(line, {}, 0);
    REQUIRE(nodes.size() == 2);
    CHECK(nodes[1].position.y() == doctest::Approx(1.5));
  }
  SUBCASE("quarter arc of radius 20 has tangent directions") {
    Centerline c(Vec2::Zero(), 0.0);
    c.arc(20.0, std::numbers::pi / 2);
    const auto nodes = sample_lane_nodes(c, {}, 0);
    for (const auto& n : nodes) {
      // Center of the left-turning arc sits at (0, 20).
      const Vec2 radial = n.position - Vec2(0, 20);
      CHECK(radial.norm() == doctest::Approx(20.0));
      const Vec2 tangent(-radial.y() / 20.0, radial.x() / 20.0);
      CHECK((n.direction - tangent).norm() < 1e-6);
      CHECK(n.direction.norm() == doctest::Approx(1.0));
    }
  }
  SUBCASE("generated graphs keep spacing at most 2 m") {
    for (const auto& s : scenes(30, 5))
      for (const auto& n : s.lane_graph.nodes()) {
        CHECK(n.segment_length <= 2.0 + 1e-9);
        CHECK(n.direction.norm() == doctest::Approx(1.0));
      }
  }
}

TEST_CASE("lane topology to node adjacency") {
  Points a(2, 2), b(2, 2), c(2, 2);
  a << 0, 0, 4, 0;
  b << 4, 0, 8, 0;
  c << 4, 0, 8, 3;
  LaneSpec la{1, sample_lane_nodes(a, {}, 0), {2}, {}, {}};
  LaneSpec lb{2, sample_lane_nodes(b, {}, 10), {}, {}, {}};
  SUBCASE("chained lanes get one cross-lane successor") {
    const LaneGraph g = build_adjacency({la, lb});
    int cross = 0;
    for (const auto& [from, to] : g.adjacency().successor) cross += (from < 10) != (to < 10);
    CHECK(cross == 1);
  }
  SUBCASE("fork gives the last node two successors") {
    la.successors = {2, 3};
    LaneSpec lc{3, sample_lane_nodes(c, {}, 20), {}, {}, {}};
    const LaneGraph g = build_adjacency({la, lb, lc});
    CHECK(g.successors(g.index_of(la.nodes.back().id)).size() == 2);
    std::set<Edge> succ(g.adjacency().successor.begin(), g.adjacency().successor.end());
    std::set<Edge> pred;
    for (const auto& [x, y] : g.adjacency().predecessor) pred.emplace(y, x);
    CHECK(succ == pred);
  }
}

TEST_CASE("augmentations") {
  const auto all = scenes(6, 23);
  for (const auto& s : all) {
    const Scenario flipped = augment(augment(s, {AugmentKind::flip, 0.0}, 1), {AugmentKind::flip, 0.0}, 1);
    CHECK(max_abs_diff(flipped, s) < 1e-12);
    CHECK(flipped.lane_graph.adjacency() == s.lane_graph.adjacency());
    const Scenario rot = augment(augment(s, {AugmentKind::rotate, 0.7}, 1), {AugmentKind::rotate, -0.7}, 1);
    CHECK(max_abs_diff(rot, s) < 1e-9);
    CHECK(augment(s, {AugmentKind::history_dropout, 0.0}, 4) == s);
  }
  SUBCASE("flip swaps left and right relations") {
    const Scenario f = augment(all[0], {AugmentKind::flip, 0.0}, 1);
    CHECK(f.lane_graph.adjacency().left == all[0].lane_graph.adjacency().right);
  }
  SUBCASE("dropout keeps endpoints and the history length") {
    const Scenario d = augment(all[1], {AugmentKind::history_dropout, 0.3}, 9);
    CHECK(d.target.history.rows() == kHistoryLength);
    CHECK(d.target.history.row(0) == all[1].target.history.row(0));
    CHECK(d.target.current() == all[1].target.current());
  }
}

TEST_CASE("metrics commute with isometries and scale with scaling") {
  const auto all = scenes(5, 41);
  for (const auto& s : all) {
    Forecast f;
    f.scenario_id = s.id;
    for (int k = 0; k < kNumModes; ++k) {
      Points t = *s.target.future;
      t.rowwise() += Eigen::RowVector2d(0.3 * k, -0.2 * k);
      f.modes.push_back({t, 1.0 / kNumModes});
    }
    const double base = min_fde(f, *s.target.future).value;
    const double theta = 0.9, scale = 1.7;
    const Eigen::Matrix2d r = rotation(theta);
    const Vec2 shift(12, -5);
    Forecast g = f, h = f;
    for (auto& m : g.modes) m.trajectory = transform_points(m.trajectory, r, shift);
    for (auto& m : h.modes) m.trajectory = transform_points(m.trajectory, scale * Eigen::Matrix2d::Identity(), Vec2::Zero());
    const Points gt_r = transform_points(*s.target.future, r, shift);
    const Points gt_s = transform_points(*s.target.future, scale * Eigen::Matrix2d::Identity(), Vec2::Zero());
    CHECK(std::abs(min_fde(g, gt_r).value - base) < 1e-9);
    CHECK(std::abs(min_fde(h, gt_s).value - scale * base) < 1e-9);
    CHECK(std::abs(min_ade(h, gt_s) - scale * min_ade(f, *s.target.future)) < 1e-9);
  }
}
