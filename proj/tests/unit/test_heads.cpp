#include "helpers.hpp"

#include "heatcast/model.hpp"
#include "heatcast/synthetic.hpp"

#include <numeric>

using namespace heatcast;

namespace {

ModelConfig small_model(HeadKind head) {
  ModelConfig c;
  c.encoder.hidden_dim = 8;
  c.encoder.rel_hidden = 4;
  c.head = head;
  return c;
}

void zero_prefix(ParamSet& p, const std::string& prefix) {
  for (const auto& [name, t] : p)
    if (name.starts_with(prefix)) {
      Tensor shared = t;
      shared.mutable_value().setZero();
    }
}

void jitter_biases(ParamSet& p, std::uint64_t seed) {
  Rng rng(seed, 5);
  for (const auto& [name, t] : p)
    if (name.ends_with(".b")) {
      Tensor shared = t;
      shared.mutable_value() = test::random_matrix(rng, t.rows(), t.cols(), 0.2);
    }
}

Scenario normalized_scene(std::uint64_t seed, int index = 0) {
  GeneratorConfig g;
  g.n_scenes = index + 1;
  return normalize(generate_scene(g, seed, index)).first;
}

GoalCandidate candidate(int id, Vec2 pos, double arclength = 0.0) {
  GoalCandidate c;
  c.node_id = id;
  c.position = pos;
  c.arclength = arclength;
  return c;
}

ScoredCandidate scored(Vec2 pos, double p) {
  ScoredCandidate s;
  s.refined_position = pos;
  s.probability = p;
  return s;
}

Matrix straight_trajs(const std::vector<Vec2>& ends) {
  Matrix m(static_cast<Eigen::Index>(ends.size()), kTrajWidth);
  for (std::size_t i = 0; i < ends.size(); ++i)
    m.row(static_cast<Eigen::Index>(i)) = ends[i].transpose() * ramp_matrix();
  return m;
}

double max_diff(const Tensor& a, const Tensor& b) { return (a.value() - b.value()).cwiseAbs().maxCoeff(); }

}  // namespace

TEST_CASE("ramp matrix and trajectory decoder base") {
  Matrix goal(1, 2);
  goal << 30, 0;
  const Matrix base = goal * ramp_matrix();
  for (int t = 0; t < kFutureLength; ++t) {
    CHECK(base(0, 2 * t) == doctest::Approx(t + 1.0));
    CHECK(base(0, 2 * t + 1) == 0.0);
  }

  Model m = init_model(small_model(HeadKind::distribution), 1);
  zero_prefix(m.params, "head.decode");
  const Tensor target = Tensor::constant(Matrix::Ones(1, 8), {8});
  const Tensor out = decode_trajectory(m.params, target, Tensor::constant(goal));
  REQUIRE(out.rows() == 1);
  REQUIRE(out.cols() == kTrajWidth);
  CHECK((out.value() - base).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("scoring head") {
  Model m = init_model(small_model(HeadKind::distribution), 2);
  jitter_biases(m.params, 2);
  const Scenario s = normalized_scene(4);
  const auto cands = generate_candidates(s);
  REQUIRE(cands.goals.size() > 3);
  const SceneFeatures f = encode_scene(m.params, m.config.encoder, s);

  SUBCASE("single candidate has probability one") {
    const auto h = score_and_refine(m.params, f, s, {cands.goals[1]}, cands.kinematics);
    CHECK(h.probs.value()(0, 0) == 1.0);
  }
  SUBCASE("no candidates falls back to the constant-velocity goal") {
    Kinematics k;
    k.speed = 8;
    const auto h = score_and_refine(m.params, f, s, {}, k);
    REQUIRE(h.candidates.size() == 1);
    CHECK(h.candidates[0].node_id == -1);
    CHECK(h.candidates[0].position.isApprox(Vec2(24, 0)));
    CHECK(h.probs.value()(0, 0) == 1.0);
  }
  SUBCASE("zero weights give uniform probabilities and zero offsets") {
    zero_prefix(m.params, "head.score");
    const auto h = score_and_refine(m.params, f, s, cands.goals, cands.kinematics);
    const double n = static_cast<double>(cands.goals.size());
    CHECK((h.probs.value().array() - 1.0 / n).abs().maxCoeff() < 1e-15);
    CHECK(h.offsets.value().cwiseAbs().maxCoeff() == 0.0);
  }
  SUBCASE("heatmap sums to one and ignores input order") {
    const auto h = score_and_refine(m.params, f, s, cands.goals, cands.kinematics);
    CHECK(std::abs(h.probs.value().sum() - 1.0) < 1e-12);
    const GoalHeatmap a = to_heatmap(h);
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      auto shuffled = cands.goals;
      Rng rng(seed, 8);
      for (std::size_t i = shuffled.size(); i > 1; --i) std::swap(shuffled[i - 1], shuffled[rng.index(i)]);
      const GoalHeatmap b = to_heatmap(score_and_refine(m.params, f, s, shuffled, cands.kinematics));
      REQUIRE(a.size() == b.size());
      for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].candidate.node_id == b[i].candidate.node_id);
        CHECK(std::abs(a[i].probability - b[i].probability) < 1e-12);
      }
    }
  }
}

TEST_CASE("positive labels use a closed 3 m radius") {
  const Vec2 gt(30, 0);
  const auto labels = assign_labels(
      {candidate(0, Vec2(31, 0)), candidate(1, Vec2(35, 0)), candidate(2, Vec2(30, 3)), candidate(3, Vec2(27, 0))},
      gt);
  CHECK(labels[0].is_positive);
  CHECK(labels[0].target_offset == Vec2(-1, 0));
  CHECK_FALSE(labels[1].is_positive);
  CHECK(labels[1].target_offset == Vec2::Zero());
  CHECK(labels[2].is_positive);
  CHECK(labels[3].is_positive);
}

TEST_CASE("top-k selection") {
  HeatmapTensors h;
  Matrix logits(1, 100);
  Matrix offsets = Matrix::Zero(100, 2);
  for (int i = 0; i < 100; ++i) {
    h.candidates.push_back(candidate(i, Vec2(i, 0), 100.0 - i));
    logits(0, i) = (i % 10 == 0) ? 0.0 : 0.01 * i;
  }
  h.logits = Tensor::constant(logits, {100});
  h.probs = softmax(h.logits);
  h.offsets = Tensor::constant(offsets);
  h.refined = Tensor::constant(offsets);
  const GoalHeatmap heat = to_heatmap(h);
  CHECK(top_k(heat).size() == 70);
  CHECK(top_k(heat, 40).size() == 40);
  CHECK(top_k(GoalHeatmap(heat.begin(), heat.begin() + 40)).size() == 40);
  // Ten tied zero logits sit at the bottom, ordered by arclength.
  for (int i = 0; i < 10; ++i) CHECK(heat[90 + i].candidate.node_id == 90 - 10 * i);
  for (std::size_t i = 1; i < heat.size(); ++i) CHECK(heat[i].probability <= heat[i - 1].probability);
}

TEST_CASE("distribution regression") {
  Model m = init_model(small_model(HeadKind::distribution), 3);
  jitter_biases(m.params, 3);
  const HeadConfig hc = m.config.head_config();
  const ForwardPass pass = forward(m, normalized_scene(6, 2));
  const auto k = static_cast<Eigen::Index>(pass.top_rows.size());
  REQUIRE(k > 5);
  const GoalSetTensors base = regress_distribution(m.params, hc, pass.heatmap, pass.top_rows, pass.top_trajs);
  CHECK(std::abs(base.probs.value().sum() - 1.0) < 1e-12);
  CHECK(base.goals.rows() == kNumModes);

  SUBCASE("exactly invariant to point order") {
    double worst = 0.0;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
      std::vector<Eigen::Index> perm(static_cast<std::size_t>(k));
      std::iota(perm.begin(), perm.end(), 0);
      Rng rng(seed, 11);
      for (std::size_t i = perm.size(); i > 1; --i) std::swap(perm[i - 1], perm[rng.index(i)]);
      std::vector<Eigen::Index> rows;
      for (auto i : perm) rows.push_back(pass.top_rows[static_cast<std::size_t>(i)]);
      const Tensor trajs = gather_rows(pass.top_trajs, perm);
      const auto g = regress_distribution(m.params, hc, pass.heatmap, rows, trajs);
      worst = std::max({worst, max_diff(g.goals, base.goals), max_diff(g.logits, base.logits)});
    }
    CHECK(worst <= 1e-12);
  }
  SUBCASE("single point input") {
    const std::vector<Eigen::Index> one{pass.top_rows[0]};
    const auto g = regress_distribution(m.params, hc, pass.heatmap, one, slice_rows(pass.top_trajs, 0, 1));
    CHECK(g.goals.value().allFinite());
    CHECK(std::abs(g.probs.value().sum() - 1.0) < 1e-12);
    CHECK_THROWS_AS(regress_distribution(m.params, hc, pass.heatmap, {}, pass.top_trajs), std::invalid_argument);
  }
}

TEST_CASE("trajectory attachment") {
  Model m = init_model(small_model(HeadKind::distribution), 4);
  SUBCASE("nearest endpoint wins, ties go to the more probable candidate") {
    Matrix goals(2, 2);
    goals << 30, 0, 10, 1;
    const Matrix trajs = straight_trajs({Vec2(29, 0), Vec2(20, 0), Vec2(10, 0), Vec2(10, 2)});
    Matrix probs(1, 4);
    probs << 0.1, 0.2, 0.3, 0.4;
    CHECK(nearest_trajectories(goals, trajs, probs) == std::vector<Eigen::Index>{0, 3});
    probs << 0.1, 0.2, 0.4, 0.3;
    CHECK(nearest_trajectories(goals, trajs, probs) == std::vector<Eigen::Index>{0, 2});
  }
  SUBCASE("zero residual pins the endpoint to the goal") {
    zero_prefix(m.params, "head.attach");
    Matrix cand = straight_trajs({Vec2(29, 0), Vec2(20, 0)});
    cand(0, 20) += 0.7;  // a bend in the middle survives the blend
    GoalSetTensors g;
    Matrix goals(2, 2);
    goals << 30, 0, 20, 0;
    g.goals = Tensor::constant(goals);
    const auto out = attach_trajectories(m.params, g, Tensor::constant(cand), Tensor::vector({0.6, 0.4}));
    CHECK(std::abs(out.trajs.value()(0, kTrajWidth - 2) - 30.0) < 1e-9);
    CHECK(std::abs(out.trajs.value()(0, kTrajWidth - 1)) < 1e-9);
    CHECK(std::abs(out.trajs.value()(0, 20) - (cand(0, 20) + 11.0 / 30.0)) < 1e-12);
    // Goal on a candidate endpoint: that trajectory comes back unchanged.
    CHECK((out.trajs.value().row(1) - cand.row(1)).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("goal refinement attention") {
  Model m = init_model(small_model(HeadKind::distribution), 5);
  jitter_biases(m.params, 5);
  const HeadConfig hc = m.config.head_config();
  const ForwardPass pass = forward(m, normalized_scene(7, 1));
  const Tensor points = point_features(hc, pass.heatmap, pass.top_rows, pass.top_trajs);
  const Tensor positions = gather_rows(pass.heatmap.refined, pass.top_rows);
  const GoalSetTensors& in = pass.before_refine;
  const GoalSetTensors base = refine_attention(m.params, in, points, positions);
  CHECK(std::abs(base.probs.value().sum() - 1.0) < 1e-12);
  CHECK((base.probs.value().array() > 0).all());

  SUBCASE("invariant to candidate order") {
    std::vector<Eigen::Index> perm(static_cast<std::size_t>(points.rows()));
    std::iota(perm.rbegin(), perm.rend(), 0);
    const auto g = refine_attention(m.params, in, gather_rows(points, perm), gather_rows(positions, perm));
    CHECK(max_diff(g.goals, base.goals) < 1e-12);
    CHECK(max_diff(g.logits, base.logits) < 1e-12);
  }
  SUBCASE("equivariant in the goals") {
    const std::vector<Eigen::Index> perm{3, 0, 5, 1, 4, 2};
    GoalSetTensors shuffled;
    shuffled.goals = gather_rows(in.goals, perm);
    shuffled.logits = reshape(gather_rows(reshape(in.logits, {kNumModes, 1}), perm), {kNumModes});
    shuffled.probs = softmax(shuffled.logits);
    shuffled.trajs = gather_rows(in.trajs, perm);
    const auto g = refine_attention(m.params, shuffled, points, positions);
    CHECK(max_diff(g.goals, gather_rows(base.goals, perm)) < 1e-12);
    CHECK(max_diff(g.trajs, gather_rows(base.trajs, perm)) < 1e-12);
  }
  SUBCASE("zero output layer is the identity") {
    zero_prefix(m.params, "head.refine_out");
    const auto g = refine_attention(m.params, in, points, positions);
    CHECK(max_diff(g.goals, in.goals) == 0.0);
    CHECK(max_diff(g.probs, in.probs) < 1e-15);
    CHECK(max_diff(g.trajs, in.trajs) == 0.0);
  }
}

TEST_CASE("non-maximum suppression") {
  SUBCASE("suppresses the near neighbor") {
    const GoalHeatmap h{scored(Vec2(0, 0), 0.9), scored(Vec2(0.5, 0), 0.8), scored(Vec2(10, 0), 0.7)};
    const auto picks = nms_select(h, 2.0, 2);
    REQUIRE(picks.size() == 2);
    CHECK(picks[0].heatmap_index == 0);
    CHECK(picks[1].heatmap_index == 2);
  }
  SUBCASE("five clustered candidates relax to all five, then pad") {
    // Spacing 0.3 m: radius 2 -> 1 -> 0.5 -> 0.25 accepts all five.
    GoalHeatmap h;
    for (int i = 0; i < 5; ++i) h.push_back(scored(Vec2(0.3 * i, 0), 0.5 - 0.1 * i));
    const auto picks = nms_select(h);
    REQUIRE(picks.size() == 6);
    for (int i = 0; i < 5; ++i) {
      CHECK(picks[i].heatmap_index == static_cast<std::size_t>(i));
      CHECK_FALSE(picks[i].duplicate);
    }
    CHECK(picks[5].heatmap_index == 0);
    CHECK(picks[5].duplicate);
  }
  SUBCASE("spread candidates give six picks at least 2 m apart") {
    GoalHeatmap h;
    Rng rng(12);
    for (int i = 0; i < 100; ++i) h.push_back(scored(Vec2(rng.uniform(0, 40), rng.uniform(-10, 10)), 1.0 - 0.005 * i));
    const auto picks = nms_select(h);
    REQUIRE(picks.size() == 6);
    for (std::size_t a = 0; a < 6; ++a) {
      CHECK_FALSE(picks[a].duplicate);
      for (std::size_t b = a + 1; b < 6; ++b)
        CHECK((h[picks[a].heatmap_index].refined_position - h[picks[b].heatmap_index].refined_position).norm() >= 2.0);
    }
  }
}

TEST_CASE("direct regression head") {
  Model m = init_model(small_model(HeadKind::direct), 6);
  Rng rng(6);
  const Tensor target = Tensor::constant(test::random_matrix(rng, 1, 8), {8});
  const auto g = direct_regress(m.params, target);
  CHECK(g.trajs.rows() == kNumModes);
  CHECK(g.trajs.cols() == kTrajWidth);
  CHECK(g.goals.value() == g.trajs.value().rightCols(2));
  zero_prefix(m.params, "head.direct");
  const auto z = direct_regress(m.params, target);
  CHECK(z.trajs.value().cwiseAbs().maxCoeff() == 0.0);
  CHECK((z.probs.value().array() - 1.0 / kNumModes).abs().maxCoeff() < 1e-15);
}

TEST_CASE("full head stacks match finite differences") {
  GradCheckOptions opt;
  opt.max_coords_per_tensor = 8;
  for (HeadKind head : {HeadKind::distribution, HeadKind::nms, HeadKind::direct}) {
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
      const std::string head_name = to_string(head);
      CAPTURE(head_name);
      CAPTURE(seed);
      Model m = init_model(small_model(head), seed);
      jitter_biases(m.params, seed);
      const Scenario s = normalized_scene(31, static_cast<int>(seed));
      const auto r = grad_check(
          [&] {
            const ForwardPass p = forward(m, s);
            Tensor loss = add(test::probe(p.goals.trajs, seed), test::probe(p.goals.goals, seed + 1));
            if (head == HeadKind::distribution) loss = add(loss, test::probe(p.goals.logits, seed + 2));
            if (head != HeadKind::direct) loss = add(loss, test::probe(p.heatmap.logits, seed + 3));
            return loss;
          },
          m.params, opt);
      CHECK_GRADIENT(r);
    }
  }
}

TEST_CASE("forward is deterministic, finite and emits valid forecasts") {
  GeneratorConfig g;
  g.n_scenes = 25;
  const auto scenes = generate_synthetic(g, 44);
  for (HeadKind head : {HeadKind::distribution, HeadKind::nms, HeadKind::direct}) {
    const std::string head_name = to_string(head);
      CAPTURE(head_name);
    const Model m = init_model(small_model(head), 7);
    for (const auto& s : scenes) {
      const Forecast a = predict(m, s);
      const Forecast b = predict(m, s);
      CHECK(validate_forecast(a).empty());
      CHECK(forecasts_to_jsonl({a}) == forecasts_to_jsonl({b}));
    }
  }
}
