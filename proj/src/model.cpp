#include "heatcast/model.hpp"

#include <stdexcept>

namespace heatcast {

using nlohmann::json;

const char* to_string(HeadKind h) {
  switch (h) {
    case HeadKind::distribution: return "distribution";
    case HeadKind::nms: return "nms";
    case HeadKind::direct: return "direct";
  }
  return "?";
}

HeadKind head_kind_from_string(const std::string& s) {
  if (s == "distribution") return HeadKind::distribution;
  if (s == "nms") return HeadKind::nms;
  if (s == "direct") return HeadKind::direct;
  throw std::invalid_argument("unknown head: " + s + " (expected distribution, nms or direct)");
}

HeadConfig ModelConfig::head_config() const {
  HeadConfig h;
  h.hidden_dim = encoder.hidden_dim;
  h.rel_hidden = encoder.rel_hidden;
  h.top_k = top_k;
  h.full_trajectory_points = full_trajectory_points;
  return h;
}

json ModelConfig::to_json() const {
  return {{"encoder", encoder.to_json()},
          {"head", to_string(head)},
          {"top_k", top_k},
          {"full_trajectory_points", full_trajectory_points}};
}

ModelConfig ModelConfig::from_json(const json& doc) {
  ModelConfig c;
  if (doc.contains("encoder")) c.encoder = EncoderConfig::from_json(doc.at("encoder"));
  if (doc.contains("head")) c.head = head_kind_from_string(doc.at("head").get<std::string>());
  c.top_k = doc.value("top_k", c.top_k);
  c.full_trajectory_points = doc.value("full_trajectory_points", c.full_trajectory_points);
  if (c.top_k < 1) throw std::invalid_argument("top_k must be >= 1");
  return c;
}

Model init_model(const ModelConfig& config, std::uint64_t seed) {
  Model m{config, {}};
  Rng rng(seed);
  init_encoder(m.params, config.encoder, rng);
  const HeadConfig hc = config.head_config();
  switch (config.head) {
    case HeadKind::distribution:
      init_scoring_head(m.params, hc, rng);
      init_trajectory_decoder(m.params, hc, rng);
      init_distribution_head(m.params, hc, rng);
      break;
    case HeadKind::nms:
      init_scoring_head(m.params, hc, rng);
      init_trajectory_decoder(m.params, hc, rng);
      break;
    case HeadKind::direct:
      init_direct_head(m.params, hc, rng);
      break;
  }
  return m;
}

ForwardPass forward(const Model& model, const Scenario& normalized) {
  ForwardPass p;
  p.scene = normalized;
  p.candidates = generate_candidates(p.scene);
  p.features = encode_scene(model.params, model.config.encoder, p.scene);
  const ParamSet& params = model.params;

  if (model.config.head == HeadKind::direct) {
    p.goals = direct_regress(params, p.features.target);
    return p;
  }

  p.heatmap = score_and_refine(params, p.features, p.scene, p.candidates.goals,
                               p.candidates.kinematics);
  p.sorted = to_heatmap(p.heatmap);

  if (model.config.head == HeadKind::nms) {
    p.nms = nms_select(p.sorted);
    std::vector<Eigen::Index> rows;
    Matrix probs(1, static_cast<Eigen::Index>(p.nms.size()));
    for (std::size_t i = 0; i < p.nms.size(); ++i) {
      const auto& e = p.sorted[p.nms[i].heatmap_index];
      rows.push_back(static_cast<Eigen::Index>(e.index));
      probs(0, static_cast<Eigen::Index>(i)) = e.probability;
    }
    probs /= probs.sum();
    p.goals.goals = gather_rows(p.heatmap.refined, rows);
    p.goals.trajs = decode_trajectory(params, p.features.target, p.goals.goals);
    p.goals.probs = Tensor::constant(probs, {probs.cols()});
    p.goals.logits = Tensor::constant(Matrix(probs.array().max(1e-300).log()), {probs.cols()});
    return p;
  }

  for (const auto& e : top_k(p.sorted, model.config.top_k))
    p.top_rows.push_back(static_cast<Eigen::Index>(e.index));
  const Tensor top_goals = gather_rows(p.heatmap.refined, p.top_rows);
  p.top_trajs = decode_trajectory(params, p.features.target, top_goals);

  const HeadConfig hc = model.config.head_config();
  const Tensor top_probs = gather_rows(reshape(p.heatmap.probs, {p.heatmap.probs.size(), 1}),
                                       p.top_rows);
  GoalSetTensors regressed = regress_distribution(params, hc, p.heatmap, p.top_rows, p.top_trajs);
  p.before_refine = attach_trajectories(params, regressed, p.top_trajs,
                                        reshape(top_probs, {top_probs.size()}));
  const Tensor points = point_features(hc, p.heatmap, p.top_rows, p.top_trajs);
  p.goals = refine_attention(params, p.before_refine, points, top_goals);
  return p;
}

Forecast forecast_from(const ForwardPass& pass, const std::string& scenario_id) {
  Forecast f;
  f.scenario_id = scenario_id;
  for (auto& g : to_goal_set(pass.goals)) f.modes.push_back({std::move(g.trajectory), g.probability});
  sort_modes(f);
  return f;
}

Forecast predict(const Model& model, const Scenario& scenario) {
  const auto [local, pose] = normalize(scenario);
  return to_world(forecast_from(forward(model, local), scenario.id), pose);
}

Forecast constant_velocity_forecast(const Scenario& scenario) {
  const Kinematics k = estimate_kinematics(scenario.target);
  const Vec2 origin = scenario.target.current();
  Points traj(kFutureLength, 2);
  for (Eigen::Index t = 0; t < kFutureLength; ++t)
    traj.row(t) = (origin + k.speed * kStepSeconds * static_cast<double>(t + 1) * k.heading).transpose();
  Forecast f;
  f.scenario_id = scenario.id;
  for (int i = 0; i < kNumModes; ++i) f.modes.push_back({traj, 1.0 / kNumModes});
  return f;
}

}  // namespace heatcast
