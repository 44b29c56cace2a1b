#pragma once

#include "heatcast/model.hpp"

#include <json.hpp>

#include <filesystem>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace heatcast {

struct LossWeights {
  double score = 1.0;
  double offset = 1.0;
  double traj = 1.0;
  double wta = 2.0;
  double aux = 0.5;  // WTA terms on the goal set before attention refinement
};

struct LossReport {
  double total = 0.0;
  double score_bce = 0.0;
  double offset_l1 = 0.0;
  double traj_l1 = 0.0;
  double wta_goal = 0.0;
  double wta_traj = 0.0;
  double wta_cls = 0.0;
  double aux = 0.0;  // wta_goal + wta_traj + wta_cls before refinement

  LossReport& operator+=(const LossReport& o);
  LossReport& operator*=(double s);
};

struct AugmentConfig {
  bool enabled = true;
  double probability = 0.5;  // per sample
  bool flip = true;
  double max_rotation = 0.2;  // rad
  double scale_min = 0.9;
  double scale_max = 1.1;
  double dropout_rate = 0.1;

  nlohmann::json to_json() const;
  static AugmentConfig from_json(const nlohmann::json& doc);
};

struct TrainConfig {
  int epochs = 30;
  int batch_size = 16;
  double learning_rate = 1e-3;
  double grad_clip = 5.0;
  std::uint64_t seed = 0;
  LossWeights weights;
  AugmentConfig augment;

  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& doc);
};

/// Throws std::invalid_argument on non-positive epochs/batch size or a negative rate.
void validate(const TrainConfig& config);

/// Mean binary CE of sigmoid(logit) against the labels, and smooth-L1 of the
/// offsets over positives (zero scalar when there are none).
std::pair<Tensor, Tensor> scoring_loss(const HeatmapTensors& heatmap,
                                       const std::vector<PositiveLabel>& labels);

struct WtaTerms {
  Tensor goal;
  Tensor traj;
  Tensor cls;
  Eigen::Index winner = 0;
};

/// Winner = goal nearest the ground-truth goal (first on ties).
WtaTerms wta_loss(const GoalSetTensors& goals, const Vec2& gt_goal, const Points& gt_future);

/// Index of the goal nearest `gt_goal`, first on ties.
Eigen::Index wta_winner(const Matrix& goals, const Vec2& gt_goal);

struct SampleLoss {
  Tensor total;
  LossReport report;
};

/// Head-appropriate loss of one forward pass. Requires a ground-truth future.
SampleLoss sample_loss(const Model& model, const ForwardPass& pass, const LossWeights& weights);

/// First and second moment estimates per parameter, in ParamSet order.
class Adam {
 public:
  Adam(const ParamSet& params, double learning_rate, double beta1 = 0.9, double beta2 = 0.999,
       double eps = 1e-8);
  /// Clips the global gradient norm to `clip` (if > 0), then updates in place.
  /// Returns the pre-clip norm.
  double step(ParamSet& params, double clip);
  long steps() const { return t_; }

 private:
  double lr_, b1_, b2_, eps_;
  long t_ = 0;
  std::vector<Matrix> m_, v_;
};

double gradient_norm(const ParamSet& params);

class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TrainResult {
  std::vector<LossReport> curve;  // one entry per completed epoch
  bool diverged = false;
  int first_epoch = 0;  // epoch offset when resuming
};

using EpochCallback = std::function<void(int epoch, const LossReport&)>;

/// Trains `model.params` in place. On a non-finite loss the parameters of the
/// last completed epoch are restored and `diverged` is set.
TrainResult train(Model& model, const std::vector<Scenario>& dataset, const TrainConfig& config,
                  int first_epoch = 0, const EpochCallback& on_epoch = {});

/// CSV with a header row: epoch and every loss component.
std::string curve_csv(const TrainResult& result);

// ---------------------------------------------------------------------------
// Checkpoints

inline constexpr int kCheckpointVersion = 1;

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Checkpoint {
  ModelConfig config;
  ParamSet params;
  int epoch = 0;
  std::string config_hash;
};

/// FNV-1a 64 of the serialized model config, as 16 hex digits.
std::string config_hash(const ModelConfig& config);

void save_checkpoint(const Model& model, int epoch, const std::filesystem::path& path);

/// Throws CheckpointError on a version mismatch, a malformed document or an
/// unreadable file. A stored hash that disagrees with the stored config is
/// reported through `warning` and otherwise ignored.
Checkpoint load_checkpoint(const std::filesystem::path& path, std::string* warning = nullptr);

}  // namespace heatcast
