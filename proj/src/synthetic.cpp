#include "heatcast/synthetic.hpp"

#include "heatcast/geometry.hpp"
#include "heatcast/preprocess.hpp"
#include "heatcast/rng.hpp"

#include <cmath>
#include <cstdio>
#include <map>
#include <numbers>
#include <optional>
#include <stdexcept>

namespace heatcast {

using nlohmann::json;

const char* to_string(SceneType t) {
  switch (t) {
    case SceneType::straight: return "straight";
    case SceneType::curve: return "curve";
    case SceneType::fork: return "fork";
    case SceneType::merge: return "merge";
  }
  return "?";
}

SceneType scene_type_from_string(const std::string& s) {
  if (s == "straight") return SceneType::straight;
  if (s == "curve") return SceneType::curve;
  if (s == "fork") return SceneType::fork;
  if (s == "merge") return SceneType::merge;
  throw std::invalid_argument("unknown scene type: " + s);
}

json GeneratorConfig::to_json() const {
  return {{"n_scenes", n_scenes},
          {"mix", {{"straight", mix.straight}, {"curve", mix.curve}, {"fork", mix.fork}, {"merge", mix.merge}}},
          {"noise_sigma", noise_sigma},
          {"speed_min", speed_min},
          {"speed_max", speed_max},
          {"accel_min", accel_min},
          {"accel_max", accel_max},
          {"radius_min", radius_min},
          {"radius_max", radius_max},
          {"max_context", max_context},
          {"random_pose", random_pose},
          {"id_prefix", id_prefix}};
}

GeneratorConfig GeneratorConfig::from_json(const json& doc) {
  GeneratorConfig c;
  c.n_scenes = doc.value("n_scenes", c.n_scenes);
  if (doc.contains("mix")) {
    const auto& m = doc.at("mix");
    c.mix.straight = m.value("straight", 0.0);
    c.mix.curve = m.value("curve", 0.0);
    c.mix.fork = m.value("fork", 0.0);
    c.mix.merge = m.value("merge", 0.0);
  }
  c.noise_sigma = doc.value("noise_sigma", c.noise_sigma);
  c.speed_min = doc.value("speed_min", c.speed_min);
  c.speed_max = doc.value("speed_max", c.speed_max);
  c.accel_min = doc.value("accel_min", c.accel_min);
  c.accel_max = doc.value("accel_max", c.accel_max);
  c.radius_min = doc.value("radius_min", c.radius_min);
  c.radius_max = doc.value("radius_max", c.radius_max);
  c.max_context = doc.value("max_context", c.max_context);
  c.random_pose = doc.value("random_pose", c.random_pose);
  c.id_prefix = doc.value("id_prefix", c.id_prefix);
  return c;
}

void validate(const GeneratorConfig& c) {
  if (c.n_scenes < 1) throw std::invalid_argument("n_scenes must be >= 1");
  double total = 0.0;
  for (double f : c.mix.fractions()) {
    if (!(f >= 0.0)) throw std::invalid_argument("scene mix fractions must be non-negative");
    total += f;
  }
  if (std::abs(total - 1.0) > 1e-9)
    throw std::invalid_argument("scene mix fractions must sum to 1, got " + std::to_string(total));
  if (!(c.speed_min >= 0.0 && c.speed_min <= c.speed_max))
    throw std::invalid_argument("speed range must satisfy 0 <= min <= max");
  if (!(c.accel_min <= c.accel_max)) throw std::invalid_argument("accel range must satisfy min <= max");
  if (!(c.radius_min > 0.0 && c.radius_min <= c.radius_max))
    throw std::invalid_argument("radius range must satisfy 0 < min <= max");
  if (!(c.noise_sigma >= 0.0)) throw std::invalid_argument("noise_sigma must be >= 0");
  if (c.max_context < 0) throw std::invalid_argument("max_context must be >= 0");
}

SceneType scene_type_for(const GeneratorConfig& c, int index) {
  const double u = (static_cast<double>(index) + 0.5) / static_cast<double>(c.n_scenes);
  const auto f = c.mix.fractions();
  double acc = 0.0;
  for (std::size_t i = 0; i < f.size(); ++i) {
    acc += f[i];
    if (u < acc) return static_cast<SceneType>(i);
  }
  for (std::size_t i = f.size(); i-- > 0;)
    if (f[i] > 0.0) return static_cast<SceneType>(i);
  return SceneType::straight;
}

namespace {

constexpr double kLaneWidth = 3.5;
constexpr double kPi = std::numbers::pi;

struct LaneBuild {
  Centerline line;
  LaneAttributes attrs;
  std::vector<int> successors;
  std::optional<int> left;
  std::optional<int> right;
};

struct Layout {
  std::vector<LaneBuild> lanes;
  std::vector<int> target_path;                // lane indices the target drives along
  std::vector<std::vector<int>> branches;      // lane indices per fork branch
  int chosen_branch = -1;
};

double pick_speed_limit(Rng& rng) {
  static constexpr double kLimits[] = {8.3, 11.1, 13.9, 16.7};
  return kLimits[rng.index(4)];
}

int add_lane(Layout& l, Centerline line, LaneAttributes attrs) {
  l.lanes.push_back({std::move(line), attrs, {}, {}, {}});
  return static_cast<int>(l.lanes.size()) - 1;
}

double path_point_length(const Layout& l, const std::vector<int>& path) {
  double total = 0.0;
  for (int i : path) total += l.lanes[static_cast<std::size_t>(i)].line.length();
  return total;
}

Vec2 point_on_path(const Layout& l, const std::vector<int>& path, double s) {
  for (std::size_t k = 0; k < path.size(); ++k) {
    const auto& line = l.lanes[static_cast<std::size_t>(path[k])].line;
    if (s <= line.length() || k + 1 == path.size()) return line.point_at(s);
    s -= line.length();
  }
  return Vec2::Zero();
}

double uniform_radius(const GeneratorConfig& c, Rng& rng) { return rng.uniform(c.radius_min, c.radius_max); }

// Every layout starts the target's lane at (0, 0) heading +x.

Layout layout_straight(Rng& rng, double approach) {
  Layout l;
  LaneAttributes attrs{false, false, pick_speed_limit(rng)};
  const double length = approach + 80.0;
  const int main = add_lane(l, Centerline(Vec2::Zero(), 0.0).straight(length), attrs);
  l.target_path = {main};
  const bool neighbor = rng.bernoulli(0.5);
  const double side = rng.bernoulli(0.5) ? 1.0 : -1.0;
  if (neighbor) {
    const int nb = add_lane(l, Centerline(Vec2(0.0, side * kLaneWidth), 0.0).straight(length), attrs);
    auto& m = l.lanes[static_cast<std::size_t>(main)];
    auto& n = l.lanes[static_cast<std::size_t>(nb)];
    if (side > 0) {
      m.left = nb;
      n.right = main;
    } else {
      m.right = nb;
      n.left = main;
    }
  }
  if (rng.bernoulli(0.5)) {
    // Oncoming lane on the other side; not a lane-change neighbor.
    add_lane(l, Centerline(Vec2(length, -side * kLaneWidth), kPi).straight(length), attrs);
  }
  return l;
}

Layout layout_curve(const GeneratorConfig& c, Rng& rng, double approach, double speed) {
  Layout l;
  const double limit = pick_speed_limit(rng);
  const double lead = rng.uniform(0.0, 0.5 * speed * kHorizonSeconds) + 2.0;
  const double radius = uniform_radius(c, rng);
  const double sweep = (rng.bernoulli(0.5) ? 1.0 : -1.0) * rng.uniform(kPi / 6.0, kPi / 2.0);
  Centerline a(Vec2::Zero(), 0.0);
  a.straight(approach + lead);
  Centerline b(a.end_point(), a.end_heading());
  b.arc(radius, sweep);
  Centerline e(b.end_point(), b.end_heading());
  e.straight(70.0);
  const int ia = add_lane(l, a, {false, false, limit});
  const int ib = add_lane(l, b, {true, false, limit});
  const int ie = add_lane(l, e, {false, false, limit});
  l.lanes[static_cast<std::size_t>(ia)].successors = {ib};
  l.lanes[static_cast<std::size_t>(ib)].successors = {ie};
  l.target_path = {ia, ib, ie};
  return l;
}

Layout layout_fork(const GeneratorConfig& c, Rng& rng, double approach, double speed) {
  Layout l;
  const double limit = pick_speed_limit(rng);
  const double lead = std::max(2.0, rng.uniform(0.2, 0.6) * speed * kHorizonSeconds);
  Centerline a(Vec2::Zero(), 0.0);
  a.straight(approach + lead);
  const Vec2 j = a.end_point();

  Centerline b1(j, 0.0);
  b1.straight(15.0);
  Centerline b2(b1.end_point(), 0.0);
  b2.straight(60.0);

  const double radius = uniform_radius(c, rng);
  const double sweep = (rng.bernoulli(0.5) ? 1.0 : -1.0) * rng.uniform(kPi / 4.0, kPi / 2.0);
  Centerline c1(j, 0.0);
  c1.arc(radius, sweep);
  Centerline c2(c1.end_point(), c1.end_heading());
  c2.straight(60.0);

  const int ia = add_lane(l, a, {false, false, limit});
  const int ib1 = add_lane(l, b1, {false, true, limit});
  const int ib2 = add_lane(l, b2, {false, false, limit});
  const int ic1 = add_lane(l, c1, {true, true, std::min(limit, 11.1)});
  const int ic2 = add_lane(l, c2, {false, false, limit});
  l.lanes[static_cast<std::size_t>(ia)].successors = {ib1, ic1};
  l.lanes[static_cast<std::size_t>(ib1)].successors = {ib2};
  l.lanes[static_cast<std::size_t>(ic1)].successors = {ic2};
  l.branches = {{ib1, ib2}, {ic1, ic2}};
  l.chosen_branch = static_cast<int>(rng.index(2));
  l.target_path = {ia};
  for (int i : l.branches[static_cast<std::size_t>(l.chosen_branch)]) l.target_path.push_back(i);
  return l;
}

Layout layout_merge(const GeneratorConfig& c, Rng& rng, double approach, double speed) {
  Layout l;
  const double limit = pick_speed_limit(rng);
  const double lead = std::max(2.0, rng.uniform(0.2, 0.6) * speed * kHorizonSeconds);
  Centerline a(Vec2::Zero(), 0.0);
  a.straight(approach + lead);
  const Vec2 j = a.end_point();

  // Side road: an arc that ends at the junction heading +x.
  const double radius = uniform_radius(c, rng);
  const double sweep = (rng.bernoulli(0.5) ? 1.0 : -1.0) * rng.uniform(kPi / 6.0, kPi / 3.0);
  Centerline probe(Vec2::Zero(), -sweep);
  probe.straight(20.0).arc(radius, sweep);
  Centerline b(j - probe.end_point(), -sweep);
  b.straight(20.0).arc(radius, sweep);

  Centerline m(j, 0.0);
  m.straight(75.0);
  const int ia = add_lane(l, a, {false, false, limit});
  const int ib = add_lane(l, b, {true, true, limit});
  const int im = add_lane(l, m, {false, false, limit});
  l.lanes[static_cast<std::size_t>(ia)].successors = {im};
  l.lanes[static_cast<std::size_t>(ib)].successors = {im};
  l.target_path = {ia, im};
  return l;
}

Points sample_track(const Layout& l, const std::vector<int>& path, double s_now, double speed,
                    double accel, int first_step, int count) {
  Points out(count, 2);
  for (int i = 0; i < count; ++i) {
    const double t = static_cast<double>(first_step + i) * kStepSeconds;
    const double s = s_now + speed * t + 0.5 * accel * t * t;
    out.row(i) = point_on_path(l, path, s).transpose();
  }
  return out;
}

}  // namespace

Scenario generate_scene(const GeneratorConfig& c, std::uint64_t seed, int index) {
  Rng rng(seed, static_cast<std::uint64_t>(index));
  const SceneType type = scene_type_for(c, index);

  // Kinematics at t = 0; reject accelerations that would stop or reverse the
  // target anywhere in [-1.9 s, 3 s].
  const double speed = rng.uniform(c.speed_min, c.speed_max);
  double accel = rng.uniform(c.accel_min, c.accel_max);
  for (int tries = 0; tries < 32; ++tries) {
    if (speed - 1.9 * accel > 0.3 && speed + kHorizonSeconds * accel > 0.3) break;
    accel = rng.uniform(c.accel_min, c.accel_max);
  }
  if (!(speed - 1.9 * accel > 0.3 && speed + kHorizonSeconds * accel > 0.3)) accel = 0.0;

  const double history_span = 1.9 * speed + 0.5 * std::abs(accel) * 1.9 * 1.9;
  const double approach = history_span + 5.0 + rng.uniform(0.0, 5.0);

  Layout layout;
  switch (type) {
    case SceneType::straight: layout = layout_straight(rng, approach); break;
    case SceneType::curve: layout = layout_curve(c, rng, approach, speed); break;
    case SceneType::fork: layout = layout_fork(c, rng, approach, speed); break;
    case SceneType::merge: layout = layout_merge(c, rng, approach, speed); break;
  }

  // Nodes: a lane with a predecessor lane drops its first sample, which
  // coincides with the upstream lane's last node.
  std::vector<bool> has_pred(layout.lanes.size(), false);
  for (const auto& lane : layout.lanes)
    for (int s : lane.successors) has_pred[static_cast<std::size_t>(s)] = true;
  std::vector<LaneSpec> specs;
  std::vector<std::vector<int>> lane_nodes(layout.lanes.size());
  int next_id = 0;
  for (std::size_t i = 0; i < layout.lanes.size(); ++i) {
    const auto& lane = layout.lanes[i];
    auto nodes = sample_lane_nodes(lane.line, lane.attrs, 0);
    if (has_pred[i]) nodes.erase(nodes.begin());
    for (auto& n : nodes) {
      n.id = next_id++;
      lane_nodes[i].push_back(n.id);
    }
    specs.push_back({static_cast<int>(i), std::move(nodes), lane.successors, lane.left, lane.right});
  }

  Scenario s;
  char id[64];
  std::snprintf(id, sizeof id, "%s%05d", c.id_prefix.c_str(), index);
  s.id = id;
  s.lane_graph = build_adjacency(specs);

  const double path_len = path_point_length(layout, layout.target_path);
  static_cast<void>(path_len);
  Points history = sample_track(layout, layout.target_path, approach, speed, accel,
                                -(kHistoryLength - 1), kHistoryLength);
  for (Eigen::Index i = 0; i < history.rows(); ++i)
    for (Eigen::Index k = 0; k < 2; ++k) history(i, k) += rng.normal(0.0, c.noise_sigma);
  s.target.history = std::move(history);
  s.target.future = sample_track(layout, layout.target_path, approach, speed, accel, 1, kFutureLength);

  const auto n_ctx = static_cast<int>(rng.index(static_cast<std::uint64_t>(c.max_context) + 1));
  for (int k = 0; k < n_ctx; ++k) {
    const auto lane = static_cast<int>(rng.index(layout.lanes.size()));
    const double len = layout.lanes[static_cast<std::size_t>(lane)].line.length();
    const double v = rng.uniform(0.0, 12.0);
    const double s_end = rng.uniform(0.0, len);
    AgentTrack ctx;
    ctx.history = Points(kHistoryLength, 2);
    for (int i = 0; i < kHistoryLength; ++i) {
      const double back = v * static_cast<double>(kHistoryLength - 1 - i) * kStepSeconds;
      ctx.history.row(i) =
          layout.lanes[static_cast<std::size_t>(lane)].line.point_at(std::max(0.0, s_end - back)).transpose();
      for (Eigen::Index d = 0; d < 2; ++d) ctx.history(i, d) += rng.normal(0.0, c.noise_sigma);
    }
    s.context.push_back(std::move(ctx));
  }

  json branches = json::array();
  for (const auto& br : layout.branches) {
    json ids = json::array();
    for (int lane : br)
      for (int nid : lane_nodes[static_cast<std::size_t>(lane)]) ids.push_back(nid);
    branches.push_back(std::move(ids));
  }
  json target_lane_nodes = json::array();
  for (int lane : layout.target_path)
    for (int nid : lane_nodes[static_cast<std::size_t>(lane)]) target_lane_nodes.push_back(nid);
  s.meta = {{"generator", c.to_json()},
            {"seed", seed},
            {"index", index},
            {"scene_type", to_string(type)},
            {"speed", speed},
            {"accel", accel},
            {"branches", std::move(branches)},
            {"chosen_branch", layout.chosen_branch},
            {"target_path_nodes", std::move(target_lane_nodes)}};

  if (c.random_pose) {
    const double theta = rng.uniform(-kPi, kPi);
    const Vec2 shift(rng.uniform(-500.0, 500.0), rng.uniform(-500.0, 500.0));
    s = transform_scenario(s, rotation(theta), shift);
  }
  validate(s);
  return s;
}

std::vector<Scenario> generate_synthetic(const GeneratorConfig& c, std::uint64_t seed) {
  validate(c);
  std::vector<Scenario> out;
  out.reserve(static_cast<std::size_t>(c.n_scenes));
  for (int i = 0; i < c.n_scenes; ++i) out.push_back(generate_scene(c, seed, i));
  return out;
}

}  // namespace heatcast
