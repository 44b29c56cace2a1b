#pragma once

#include "heatcast/nn.hpp"
#include "heatcast/preprocess.hpp"
#include "heatcast/scene.hpp"

#include <json.hpp>

namespace heatcast {

struct EncoderConfig {
  Eigen::Index hidden_dim = 64;
  int conv_layers = 2;  // kernel 3, same padding
  int gcn_layers = 2;
  Eigen::Index rel_hidden = 16;  // relative-position MLP width in attention blocks

  nlohmann::json to_json() const;
  static EncoderConfig from_json(const nlohmann::json& doc);
};

/// Throws std::invalid_argument on hidden_dim < 8 or non-positive layer counts.
void validate(const EncoderConfig& config);

struct SceneFeatures {
  Tensor target;   // [d]
  Tensor lanes;    // [n_nodes x d]; undefined when the graph is empty
  Tensor context;  // [n_ctx x d]; undefined without context agents
  Matrix lane_positions;     // [n_nodes x 2]
  Matrix context_positions;  // [n_ctx x 2], current positions
};

inline constexpr Eigen::Index kLaneAttributeCount = 8;

void init_encoder(ParamSet& params, const EncoderConfig& config, Rng& rng);

/// Per-node raw attributes, scaled to order one:
/// [direction(2), segment_length/2, is_turn, is_intersection, speed_limit/10, position*0.1 (2)].
Matrix lane_attributes(const LaneGraph& graph);

/// D^-1 (A + I) with A the union of all four relations, symmetrized.
SparseMatrix normalized_adjacency(const LaneGraph& graph);

Tensor encode_history(const ParamSet& params, const EncoderConfig& config, const MotionVectors& mv);

/// Throws std::invalid_argument on an empty graph.
Tensor encode_lanes(const ParamSet& params, const EncoderConfig& config, const LaneGraph& graph);

/// Residual map->target then target->target attention. Either stage is
/// skipped when it has no tokens.
Tensor fuse(const ParamSet& params, const Tensor& target, const SceneFeatures& scene);

/// Full backbone on a normalized scenario.
SceneFeatures encode_scene(const ParamSet& params, const EncoderConfig& config,
                           const Scenario& normalized);

}  // namespace heatcast
