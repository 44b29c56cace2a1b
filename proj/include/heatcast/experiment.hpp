#pragma once

#include "heatcast/ensemble.hpp"
#include "heatcast/metrics.hpp"
#include "heatcast/training.hpp"

#include <json.hpp>

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace heatcast {

enum class FusionMethod { none, hungarian, kmeans };

const char* to_string(FusionMethod m);
/// Accepts "none", "hungarian" (alias "bipartite") and "kmeans".
FusionMethod fusion_method_from_string(const std::string& s);

struct EnsembleSettings {
  FusionMethod method = FusionMethod::kmeans;
  std::uint64_t seed = 0;
  std::vector<double> weights;
  TrajectoryFusion trajectories = TrajectoryFusion::average;
};

/// One JSON document. Relative paths inside it resolve against the file's
/// directory; command-line flags override file values.
struct ExperimentConfig {
  std::filesystem::path dataset;
  std::filesystem::path val_dataset;
  std::filesystem::path checkpoint;
  std::filesystem::path output_dir;
  ModelConfig model;
  TrainConfig train;
  EnsembleSettings ensemble;
  std::vector<std::uint64_t> seeds = {0, 1, 2};  // ensemble members in the ablation
  std::uint64_t seed = 0;

  nlohmann::json to_json() const;
  static ExperimentConfig from_json(const nlohmann::json& doc,
                                    const std::filesystem::path& base_dir = {});
};

ExperimentConfig load_experiment_config(const std::filesystem::path& path);

/// Worker count from HEATCAST_THREADS, else the available cores (at least 1).
unsigned worker_count();

/// Calls fn(i) for i in [0, n) on up to `workers` threads.
void parallel_for(std::size_t n, unsigned workers, const std::function<void(std::size_t)>& fn);

/// Forecasts in dataset order; identical for any worker count.
std::vector<Forecast> predict_all(const Model& model, const std::vector<Scenario>& dataset,
                                  unsigned workers = 1);
std::vector<Forecast> constant_velocity_all(const std::vector<Scenario>& dataset);

/// Fuses per-model forecast lists scenario by scenario. Every list must cover
/// the same ids (IdMismatchError otherwise). `none` returns the first list.
std::vector<Forecast> fuse_all(const std::vector<std::vector<Forecast>>& per_model,
                               const EnsembleSettings& settings);

struct AblationRow {
  std::string method;
  EvalReport report;
};

struct AblationResult {
  std::vector<AblationRow> heads;     // direct, nms, distribution
  std::vector<AblationRow> ensemble;  // none, bipartite, kmeans
  std::vector<AblationRow> members;   // one row per ensemble seed
  EvalReport constant_velocity;
  std::vector<double> train_seconds;  // per trained model, heads first

  nlohmann::json to_json() const;
  std::string head_table() const;
  std::string ensemble_table() const;
};

using Log = std::function<void(const std::string&)>;

/// Trains the three heads with config.seed, then the distribution head for
/// every extra ensemble seed, evaluates on the validation split and fuses.
/// The "none" ensemble row is the best single member by Brier-minFDE.
/// Writes checkpoints and forecasts under `out_dir` when it is non-empty.
AblationResult run_ablation(const ExperimentConfig& config, const std::vector<Scenario>& train_set,
                            const std::vector<Scenario>& val_set,
                            const std::filesystem::path& out_dir = {}, const Log& log = {});

}  // namespace heatcast
