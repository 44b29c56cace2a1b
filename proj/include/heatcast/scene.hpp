#pragma once

#include <Eigen/Core>
#include <json.hpp>

#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace heatcast {

using Vec2 = Eigen::Vector2d;
/// N x 2 point list, one (x, y) per row.
using Points = Eigen::Matrix<double, Eigen::Dynamic, 2, Eigen::RowMajor>;

inline constexpr int kHistoryLength = 20;
inline constexpr int kFutureLength = 30;
inline constexpr double kStepSeconds = 0.1;
inline constexpr double kHorizonSeconds = 3.0;
inline constexpr int kNumModes = 6;

/// A document did not parse; `what()` carries the JSON field path.
class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A parsed object broke a data-model invariant; `what()` names the invariant.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// File could not be read or written.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct LaneNode {
  int id = 0;
  Vec2 position = Vec2::Zero();
  Vec2 direction = Vec2::UnitX();
  double segment_length = 1.0;
  bool is_turn = false;
  bool is_intersection = false;
  double speed_limit = 13.9;

  bool operator==(const LaneNode&) const = default;
};

using Edge = std::pair<int, int>;

struct Adjacency {
  std::vector<Edge> successor;
  std::vector<Edge> predecessor;
  std::vector<Edge> left;
  std::vector<Edge> right;

  bool operator==(const Adjacency&) const = default;
};

/// Lane nodes plus four-relation adjacency. Immutable once built; the
/// constructor validates ids and relations and builds index lookups.
class LaneGraph {
 public:
  LaneGraph() = default;
  LaneGraph(std::vector<LaneNode> nodes, Adjacency adjacency);

  const std::vector<LaneNode>& nodes() const { return nodes_; }
  const Adjacency& adjacency() const { return adjacency_; }
  std::size_t size() const { return nodes_.size(); }
  bool empty() const { return nodes_.empty(); }

  /// Index into nodes() for a node id; throws std::out_of_range.
  std::size_t index_of(int id) const;
  const LaneNode& node(int id) const { return nodes_[index_of(id)]; }

  // Neighbor lists by node index.
  const std::vector<std::size_t>& successors(std::size_t i) const { return succ_[i]; }
  const std::vector<std::size_t>& predecessors(std::size_t i) const { return pred_[i]; }
  const std::vector<std::size_t>& lefts(std::size_t i) const { return left_[i]; }
  const std::vector<std::size_t>& rights(std::size_t i) const { return right_[i]; }

  bool operator==(const LaneGraph& o) const {
    return nodes_ == o.nodes_ && adjacency_ == o.adjacency_;
  }

 private:
  std::vector<LaneNode> nodes_;
  Adjacency adjacency_;
  std::vector<std::pair<int, std::size_t>> id_index_;  // sorted by id
  std::vector<std::vector<std::size_t>> succ_, pred_, left_, right_;
};

struct AgentTrack {
  Points history;                 // 20 x 2, t = -1.9 .. 0.0 s
  std::optional<Points> future;   // 30 x 2, t = 0.1 .. 3.0 s

  Vec2 current() const { return history.row(history.rows() - 1).transpose(); }
  bool operator==(const AgentTrack& o) const {
    return history == o.history && future.has_value() == o.future.has_value() &&
           (!future || *future == *o.future);
  }
};

struct Scenario {
  std::string id;
  LaneGraph lane_graph;
  AgentTrack target;
  std::vector<AgentTrack> context;
  nlohmann::json meta = nlohmann::json::object();

  bool operator==(const Scenario&) const = default;
};

struct Mode {
  Points trajectory;  // 30 x 2
  double probability = 0.0;
};

struct Forecast {
  std::string scenario_id;
  std::vector<Mode> modes;
};

/// Throws ValidationError naming the first broken invariant.
void validate(const AgentTrack& track, bool require_future, const std::string& what);
void validate(const Scenario& scenario);

/// Returns the list of violated invariants; empty means valid.
std::vector<std::string> validate_forecast(const Forecast& forecast);

/// Sorts modes by descending probability (stable).
void sort_modes(Forecast& forecast);

// Scenario documents

nlohmann::json to_json(const Scenario& scenario);
Scenario scenario_from_json(const nlohmann::json& doc);

Scenario load_scenario(const std::filesystem::path& path);
void save_scenario(const Scenario& scenario, const std::filesystem::path& path);

/// Dataset = directory of "<id>.json" scenario files plus "index.json" listing ids.
std::vector<Scenario> load_dataset(const std::filesystem::path& dir);
void save_dataset(const std::vector<Scenario>& scenarios, const std::filesystem::path& dir);

// Forecast JSON Lines

nlohmann::json to_json(const Forecast& forecast);
Forecast forecast_from_json(const nlohmann::json& doc);
std::vector<Forecast> load_forecasts(const std::filesystem::path& path);
void save_forecasts(const std::vector<Forecast>& forecasts, const std::filesystem::path& path);
std::string forecasts_to_jsonl(const std::vector<Forecast>& forecasts);

/// Writes through a temporary sibling and renames over the target.
void write_file_atomic(const std::filesystem::path& path, const std::string& contents);
std::string read_file(const std::filesystem::path& path);

}  // namespace heatcast
