#pragma once

#include "heatcast/heads.hpp"

#include <json.hpp>

#include <optional>
#include <string>

namespace heatcast {

enum class HeadKind { distribution, nms, direct };

const char* to_string(HeadKind h);
/// Throws std::invalid_argument on an unknown name.
HeadKind head_kind_from_string(const std::string& s);

struct ModelConfig {
  EncoderConfig encoder;
  HeadKind head = HeadKind::distribution;
  std::size_t top_k = kTopK;
  bool full_trajectory_points = false;

  HeadConfig head_config() const;
  nlohmann::json to_json() const;
  static ModelConfig from_json(const nlohmann::json& doc);
};

struct Model {
  ModelConfig config;
  ParamSet params;
};

/// Fresh parameters for the encoder and the selected head.
Model init_model(const ModelConfig& config, std::uint64_t seed);

/// Everything computed on one scenario; tensors stay on the tape for training.
struct ForwardPass {
  Scenario scene;  // normalized frame
  CandidateSet candidates;
  SceneFeatures features;
  // Scoring stage (distribution and nms heads)
  HeatmapTensors heatmap;
  GoalHeatmap sorted;
  std::vector<Eigen::Index> top_rows;  // heatmap rows of the top-k candidates
  Tensor top_trajs;                    // [k x 60]
  // Six-goal stage
  GoalSetTensors before_refine;  // distribution head only
  GoalSetTensors goals;          // final, all heads
  std::vector<NmsPick> nms;      // nms head only
};

/// Runs the model on a scenario already in the target-centric frame.
ForwardPass forward(const Model& model, const Scenario& normalized);

/// Modes of a forward pass in the normalized frame, sorted by probability.
Forecast forecast_from(const ForwardPass& pass, const std::string& scenario_id);

/// Normalize, run, map back to world coordinates.
Forecast predict(const Model& model, const Scenario& scenario);

/// Six copies of the constant-velocity extrapolation, equal probabilities.
Forecast constant_velocity_forecast(const Scenario& scenario);

}  // namespace heatcast
