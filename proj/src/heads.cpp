#include "heatcast/heads.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace heatcast {

namespace {

constexpr double kGoalScale = 1.0 / nn::kPositionScale;  // network units -> meters

Eigen::Index point_feature_width(const HeadConfig& c) {
  return 3 + (c.full_trajectory_points ? kTrajWidth : 6);
}

Tensor column(const Tensor& v) { return reshape(v, {v.size(), 1}); }
Tensor flat(const Tensor& col) { return reshape(col, {col.size()}); }

}  // namespace

const Matrix& ramp_matrix() {
  static const Matrix m = [] {
    Matrix r = Matrix::Zero(2, kTrajWidth);
    for (Eigen::Index t = 0; t < kFutureLength; ++t) {
      const double w = static_cast<double>(t + 1) / static_cast<double>(kFutureLength);
      r(0, 2 * t) = w;
      r(1, 2 * t + 1) = w;
    }
    return r;
  }();
  return m;
}

void init_scoring_head(ParamSet& params, const HeadConfig& c, Rng& rng) {
  const Eigen::Index d = c.hidden_dim;
  nn::init_mlp(params, "head.score", {2 * d + 2, d, d, 3}, rng);
}

void init_trajectory_decoder(ParamSet& params, const HeadConfig& c, Rng& rng) {
  const Eigen::Index d = c.hidden_dim;
  nn::init_mlp(params, "head.decode", {d + 2, d, kTrajWidth}, rng);
}

void init_distribution_head(ParamSet& params, const HeadConfig& c, Rng& rng) {
  const Eigen::Index d = c.hidden_dim;
  const Eigen::Index pf = point_feature_width(c);
  nn::init_linear(params, "head.pn0", pf, d, rng);
  nn::init_linear(params, "head.pn1", 2 * d, d, rng);
  nn::init_linear(params, "head.pn2", 2 * d, d, rng);
  nn::init_mlp(params, "head.pn_out", {d, d, 3 * kNumModes}, rng);
  nn::init_mlp(params, "head.attach", {kTrajWidth + 2, d, kTrajWidth}, rng);
  nn::init_mlp(params, "head.goal_token", {3, d, d}, rng);
  nn::init_mlp(params, "head.cand_token", {pf, d, d}, rng);
  nn::init_attention(params, "head.self", d, c.rel_hidden, rng);
  nn::init_attention(params, "head.cross", d, c.rel_hidden, rng);
  nn::init_linear(params, "head.refine_out", d, 3, rng);
}

void init_direct_head(ParamSet& params, const HeadConfig& c, Rng& rng) {
  const Eigen::Index d = c.hidden_dim;
  nn::init_mlp(params, "head.direct", {d, d, kNumModes * (kTrajWidth + 1)}, rng);
}

GoalCandidate constant_velocity_candidate(const Kinematics& kin) {
  GoalCandidate g;
  g.node_id = -1;
  g.position = kin.speed * kHorizonSeconds * kin.heading;
  g.arclength = kin.speed * kHorizonSeconds;
  return g;
}

HeatmapTensors score_and_refine(const ParamSet& params, const SceneFeatures& f, const Scenario& s,
                                std::vector<GoalCandidate> candidates, const Kinematics& kin) {
  if (candidates.empty()) candidates.push_back(constant_velocity_candidate(kin));
  const auto n = static_cast<Eigen::Index>(candidates.size());
  const Eigen::Index d = f.target.cols();

  Matrix pos(n, 2);
  std::vector<Eigen::Index> lane_rows;
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& c = candidates[static_cast<std::size_t>(i)];
    pos.row(i) = c.position.transpose();
    if (c.node_id >= 0) lane_rows.push_back(static_cast<Eigen::Index>(s.lane_graph.index_of(c.node_id)));
  }
  Tensor lane;
  if (static_cast<Eigen::Index>(lane_rows.size()) == n) {
    lane = gather_rows(f.lanes, lane_rows);
  } else {
    // Fallback candidates carry a zero lane feature.
    std::vector<Tensor> rows;
    const Tensor zero = Tensor::constant(Matrix::Zero(1, d));
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto& c = candidates[static_cast<std::size_t>(i)];
      if (c.node_id < 0) {
        rows.push_back(zero);
      } else {
        const Eigen::Index r = static_cast<Eigen::Index>(s.lane_graph.index_of(c.node_id));
        rows.push_back(slice_rows(f.lanes, r, 1));
      }
    }
    lane = concat_rows(rows);
  }

  const Tensor input = concat_cols(
      {tile_rows(f.target, n), lane, Tensor::constant(Matrix(pos * nn::kPositionScale))});
  const Tensor out = nn::mlp(params, "head.score", input, 3);

  HeatmapTensors h;
  h.candidates = std::move(candidates);
  h.logits = flat(slice_cols(out, 0, 1));
  h.probs = softmax(h.logits);
  h.offsets = slice_cols(out, 1, 2);
  h.refined = add(Tensor::constant(pos), h.offsets);
  return h;
}

GoalHeatmap to_heatmap(const HeatmapTensors& h) {
  GoalHeatmap out;
  out.reserve(h.candidates.size());
  for (std::size_t i = 0; i < h.candidates.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    ScoredCandidate c;
    c.candidate = h.candidates[i];
    c.logit = h.logits.value()(0, r);
    c.probability = h.probs.value()(0, r);
    c.offset = h.offsets.value().row(r).transpose();
    c.refined_position = h.refined.value().row(r).transpose();
    c.index = i;
    out.push_back(c);
  }
  std::sort(out.begin(), out.end(), [](const ScoredCandidate& a, const ScoredCandidate& b) {
    if (a.probability != b.probability) return a.probability > b.probability;
    if (a.candidate.arclength != b.candidate.arclength)
      return a.candidate.arclength < b.candidate.arclength;
    return a.candidate.node_id < b.candidate.node_id;
  });
  return out;
}

std::vector<PositiveLabel> assign_labels(const std::vector<GoalCandidate>& candidates,
                                         const Vec2& gt_goal) {
  std::vector<PositiveLabel> out;
  out.reserve(candidates.size());
  for (const auto& c : candidates) {
    PositiveLabel l;
    l.is_positive = (c.position - gt_goal).norm() <= kPositiveRadius;
    if (l.is_positive) l.target_offset = gt_goal - c.position;
    out.push_back(l);
  }
  return out;
}

GoalHeatmap top_k(const GoalHeatmap& heatmap, std::size_t k) {
  const std::size_t n = std::min(k, heatmap.size());
  return GoalHeatmap(heatmap.begin(), heatmap.begin() + static_cast<std::ptrdiff_t>(n));
}

Tensor decode_trajectory(const ParamSet& params, const Tensor& target, const Tensor& goals) {
  const Eigen::Index m = goals.rows();
  const Tensor base = matmul(goals, Tensor::constant(ramp_matrix()));
  const Tensor input = concat_cols({tile_rows(target, m), mul(goals, nn::kPositionScale)});
  return add(base, nn::mlp(params, "head.decode", input, 2));
}

Tensor point_features(const HeadConfig& c, const HeatmapTensors& h,
                      std::span<const Eigen::Index> rows, const Tensor& trajs) {
  std::vector<Tensor> parts = {mul(gather_rows(h.refined, rows), nn::kPositionScale),
                               gather_rows(column(h.probs), rows)};
  if (c.full_trajectory_points) {
    parts.push_back(mul(trajs, nn::kPositionScale));
  } else {
    for (Eigen::Index step : {10, 20, 30})
      parts.push_back(mul(slice_cols(trajs, 2 * (step - 1), 2), nn::kPositionScale));
  }
  return concat_cols(parts);
}

GoalSetTensors regress_distribution(const ParamSet& params, const HeadConfig& c,
                                    const HeatmapTensors& h, std::span<const Eigen::Index> rows,
                                    const Tensor& trajs) {
  if (rows.empty()) throw std::invalid_argument("regress_distribution: no input points");
  const auto k = static_cast<Eigen::Index>(rows.size());
  Tensor x = relu(nn::linear(params, "head.pn0", point_features(c, h, rows, trajs)));
  for (const char* layer : {"head.pn1", "head.pn2"})
    x = relu(nn::linear(params, layer, concat_cols({x, tile_rows(reduce_max_over_set(x), k)})));
  const Tensor out =
      reshape(nn::mlp(params, "head.pn_out", reduce_max_over_set(x), 2), {kNumModes, 3});

  GoalSetTensors g;
  g.goals = mul(slice_cols(out, 0, 2), kGoalScale);
  g.logits = flat(slice_cols(out, 2, 1));
  g.probs = softmax(g.logits);
  return g;
}

std::vector<Eigen::Index> nearest_trajectories(const Matrix& goals, const Matrix& trajs,
                                               const Matrix& probs) {
  std::vector<Eigen::Index> out;
  for (Eigen::Index i = 0; i < goals.rows(); ++i) {
    Eigen::Index best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < trajs.rows(); ++j) {
      const double dx = trajs(j, kTrajWidth - 2) - goals(i, 0);
      const double dy = trajs(j, kTrajWidth - 1) - goals(i, 1);
      const double dist = dx * dx + dy * dy;
      if (dist < best_d || (dist == best_d && probs(0, j) > probs(0, best))) {
        best_d = dist;
        best = j;
      }
    }
    out.push_back(best);
  }
  return out;
}

GoalSetTensors attach_trajectories(const ParamSet& params, const GoalSetTensors& g,
                                   const Tensor& cand_trajs, const Tensor& cand_probs) {
  const auto idx = nearest_trajectories(g.goals.value(), cand_trajs.value(), cand_probs.value());
  const Tensor picked = gather_rows(cand_trajs, idx);
  const Tensor shift = sub(g.goals, slice_cols(picked, kTrajWidth - 2, 2));
  const Tensor blended = add(picked, matmul(shift, Tensor::constant(ramp_matrix())));
  const Tensor input = concat_cols({mul(picked, nn::kPositionScale), mul(g.goals, nn::kPositionScale)});
  GoalSetTensors out = g;
  out.trajs = add(blended, nn::mlp(params, "head.attach", input, 2));
  return out;
}

GoalSetTensors refine_attention(const ParamSet& params, const GoalSetTensors& g,
                                const Tensor& cand_points, const Tensor& cand_positions) {
  const Eigen::Index m = g.goals.rows();
  const Eigen::Index n = cand_positions.rows();
  const Tensor tokens = nn::mlp(
      params, "head.goal_token",
      concat_cols({mul(g.goals, nn::kPositionScale), column(g.probs)}), 2);
  const Tensor cands = nn::mlp(params, "head.cand_token", cand_points, 2);

  std::vector<Tensor> updated;
  for (Eigen::Index i = 0; i < m; ++i) {
    const Tensor q = slice_rows(tokens, i, 1);
    const Tensor here = slice_rows(g.goals, i, 1);
    const Tensor self_off = sub(g.goals, tile_rows(here, m));
    const Tensor u = add(q, nn::attend(params, "head.self", q, tokens, self_off).output);
    const Tensor cross_off = sub(cand_positions, tile_rows(here, n));
    updated.push_back(add(u, nn::attend(params, "head.cross", u, cands, cross_off).output));
  }
  const Tensor delta = nn::linear(params, "head.refine_out", concat_rows(updated));
  const Tensor dpos = slice_cols(delta, 0, 2);

  GoalSetTensors out;
  out.goals = add(g.goals, dpos);
  out.logits = add(g.logits, flat(slice_cols(delta, 2, 1)));
  out.probs = softmax(out.logits);
  out.trajs = add(g.trajs, matmul(dpos, Tensor::constant(ramp_matrix())));
  return out;
}

std::vector<NmsPick> nms_select(const GoalHeatmap& heatmap, double radius, std::size_t k) {
  std::vector<NmsPick> picks;
  if (heatmap.empty() || k == 0) return picks;
  std::vector<std::size_t> accepted;
  for (double r = radius;; r *= 0.5) {
    accepted.clear();
    for (std::size_t i = 0; i < heatmap.size() && accepted.size() < k; ++i) {
      const Vec2& p = heatmap[i].refined_position;
      const bool clear = std::all_of(accepted.begin(), accepted.end(), [&](std::size_t a) {
        return (heatmap[a].refined_position - p).norm() >= r;
      });
      if (clear) accepted.push_back(i);
    }
    if (accepted.size() >= k || accepted.size() == heatmap.size() || r < 1e-6) break;
  }
  for (auto a : accepted) picks.push_back({a, false});
  // Suppressed entries first (they coincide with a pick), then repeats of the picks.
  for (std::size_t i = 0; i < heatmap.size() && picks.size() < k; ++i)
    if (std::find(accepted.begin(), accepted.end(), i) == accepted.end()) picks.push_back({i, true});
  for (std::size_t i = 0; picks.size() < k; ++i) picks.push_back({accepted[i % accepted.size()], true});
  return picks;
}

GoalSetTensors direct_regress(const ParamSet& params, const Tensor& target) {
  const Tensor out =
      reshape(nn::mlp(params, "head.direct", target, 2), {kNumModes, kTrajWidth + 1});
  GoalSetTensors g;
  g.trajs = mul(slice_cols(out, 0, kTrajWidth), kGoalScale);
  g.goals = slice_cols(g.trajs, kTrajWidth - 2, 2);
  g.logits = flat(slice_cols(out, kTrajWidth, 1));
  g.probs = softmax(g.logits);
  return g;
}

GoalSet6 to_goal_set(const GoalSetTensors& g) {
  const Eigen::Index m = g.goals.rows();
  GoalSet6 out;
  for (Eigen::Index i = 0; i < m; ++i) {
    GoalEntry e;
    e.position = g.goals.value().row(i).transpose();
    e.probability = g.probs.value()(0, i);
    e.trajectory = Eigen::Map<const Points>(g.trajs.value().row(i).data(), kFutureLength, 2);
    out.push_back(std::move(e));
  }
  std::stable_sort(out.begin(), out.end(), [](const GoalEntry& a, const GoalEntry& b) {
    return a.probability > b.probability;
  });
  return out;
}

}  // namespace heatcast
