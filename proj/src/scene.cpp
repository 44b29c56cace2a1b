#include "heatcast/scene.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace heatcast {

using nlohmann::json;

// ---------------------------------------------------------------------------
// LaneGraph

LaneGraph::LaneGraph(std::vector<LaneNode> nodes, Adjacency adjacency)
    : nodes_(std::move(nodes)), adjacency_(std::move(adjacency)) {
  id_index_.reserve(nodes_.size());
  for (std::size_t i = 0; i < nodes_.size(); ++i) id_index_.emplace_back(nodes_[i].id, i);
  std::sort(id_index_.begin(), id_index_.end());
  for (std::size_t i = 1; i < id_index_.size(); ++i)
    if (id_index_[i].first == id_index_[i - 1].first)
      throw ValidationError("lane node ids unique: duplicate id " +
                            std::to_string(id_index_[i].first));

  for (const auto& n : nodes_) {
    const std::string who = "lane node " + std::to_string(n.id);
    if (!n.position.allFinite() || !n.direction.allFinite())
      throw ValidationError(who + ": finite coordinates");
    if (std::abs(n.direction.norm() - 1.0) > 1e-9)
      throw ValidationError(who + ": direction unit norm");
    if (!(n.segment_length > 0.0 && n.segment_length <= 10.0))
      throw ValidationError(who + ": segment_length in (0, 10]");
    if (!(n.speed_limit > 0.0)) throw ValidationError(who + ": speed_limit positive");
  }

  const auto n = nodes_.size();
  succ_.assign(n, {});
  pred_.assign(n, {});
  left_.assign(n, {});
  right_.assign(n, {});
  auto fill = [&](const std::vector<Edge>& edges, std::vector<std::vector<std::size_t>>& out,
                  const char* rel) {
    for (const auto& [a, b] : edges) {
      if (a == b)
        throw ValidationError(std::string("no self-edges: ") + rel + " edge on node " +
                              std::to_string(a));
      std::size_t ia, ib;
      try {
        ia = index_of(a);
        ib = index_of(b);
      } catch (const std::out_of_range&) {
        throw ValidationError(std::string("edge endpoints valid: ") + rel + " edge (" +
                              std::to_string(a) + ", " + std::to_string(b) +
                              ") references an unknown node id");
      }
      out[ia].push_back(ib);
    }
  };
  fill(adjacency_.successor, succ_, "successor");
  fill(adjacency_.predecessor, pred_, "predecessor");
  fill(adjacency_.left, left_, "left");
  fill(adjacency_.right, right_, "right");

  std::set<Edge> succ(adjacency_.successor.begin(), adjacency_.successor.end());
  std::set<Edge> pred_t;
  for (const auto& [a, b] : adjacency_.predecessor) pred_t.emplace(b, a);
  if (succ != pred_t)
    throw ValidationError("successor/predecessor are mutual transposes");
}

std::size_t LaneGraph::index_of(int id) const {
  auto it = std::lower_bound(id_index_.begin(), id_index_.end(), std::make_pair(id, std::size_t{0}));
  if (it == id_index_.end() || it->first != id)
    throw std::out_of_range("unknown lane node id " + std::to_string(id));
  return it->second;
}

// ---------------------------------------------------------------------------
// Validation

void validate(const AgentTrack& track, bool require_future, const std::string& what) {
  if (track.history.rows() != kHistoryLength)
    throw ValidationError(what + ": history length must be " + std::to_string(kHistoryLength) +
                          ", got " + std::to_string(track.history.rows()));
  if (!track.history.allFinite()) throw ValidationError(what + ": history finite coordinates");
  if (track.future) {
    if (track.future->rows() != kFutureLength)
      throw ValidationError(what + ": future length must be " + std::to_string(kFutureLength) +
                            ", got " + std::to_string(track.future->rows()));
    if (!track.future->allFinite()) throw ValidationError(what + ": future finite coordinates");
  } else if (require_future) {
    throw ValidationError(what + ": future required");
  }
}

void validate(const Scenario& scenario) {
  if (scenario.id.empty()) throw ValidationError("scenario id non-empty");
  validate(scenario.target, false, "target");
  for (std::size_t i = 0; i < scenario.context.size(); ++i) {
    validate(scenario.context[i], false, "context[" + std::to_string(i) + "]");
    if (scenario.context[i].future)
      throw ValidationError("context[" + std::to_string(i) + "]: context agents carry no future");
  }
}

std::vector<std::string> validate_forecast(const Forecast& forecast) {
  std::vector<std::string> out;
  if (static_cast<int>(forecast.modes.size()) != kNumModes)
    out.push_back("mode count: expected " + std::to_string(kNumModes) + ", got " +
                  std::to_string(forecast.modes.size()));
  double total = 0.0;
  bool finite = true, in_range = true, lengths = true, sorted = true;
  for (std::size_t i = 0; i < forecast.modes.size(); ++i) {
    const auto& m = forecast.modes[i];
    finite = finite && std::isfinite(m.probability) && m.trajectory.allFinite();
    in_range = in_range && m.probability >= 0.0 && m.probability <= 1.0;
    lengths = lengths && m.trajectory.rows() == kFutureLength;
    if (i > 0) sorted = sorted && forecast.modes[i - 1].probability >= m.probability;
    total += m.probability;
  }
  if (!finite) out.push_back("finite values");
  if (!in_range) out.push_back("probability range [0, 1]");
  if (!lengths) out.push_back("trajectory length " + std::to_string(kFutureLength));
  if (!(std::abs(total - 1.0) <= 1e-6))
    out.push_back("simplex: probabilities sum to " + std::to_string(total));
  if (!sorted) out.push_back("modes sorted by descending probability");
  return out;
}

void sort_modes(Forecast& forecast) {
  std::stable_sort(forecast.modes.begin(), forecast.modes.end(),
                   [](const Mode& a, const Mode& b) { return a.probability > b.probability; });
}

// ---------------------------------------------------------------------------
// JSON helpers

namespace {

const json& field(const json& obj, const std::string& key, const std::string& path) {
  if (!obj.is_object()) throw ParseError(path + ": expected an object");
  auto it = obj.find(key);
  if (it == obj.end()) throw ParseError(path + "." + key + ": missing field");
  return *it;
}

double number(const json& j, const std::string& path) {
  if (!j.is_number()) throw ParseError(path + ": expected a number");
  return j.get<double>();
}

int integer(const json& j, const std::string& path) {
  if (!j.is_number_integer()) throw ParseError(path + ": expected an integer");
  return j.get<int>();
}

bool boolean(const json& j, const std::string& path) {
  if (!j.is_boolean()) throw ParseError(path + ": expected a boolean");
  return j.get<bool>();
}

const json& array(const json& j, const std::string& path) {
  if (!j.is_array()) throw ParseError(path + ": expected an array");
  return j;
}

Vec2 vec2(const json& j, const std::string& path) {
  if (!j.is_array() || j.size() != 2) throw ParseError(path + ": expected [x, y]");
  return {number(j[0], path + "[0]"), number(j[1], path + "[1]")};
}

Points points(const json& j, const std::string& path) {
  const auto& arr = array(j, path);
  Points out(static_cast<Eigen::Index>(arr.size()), 2);
  for (std::size_t i = 0; i < arr.size(); ++i)
    out.row(static_cast<Eigen::Index>(i)) =
        vec2(arr[i], path + "[" + std::to_string(i) + "]").transpose();
  return out;
}

json to_json(const Vec2& v) { return json::array({v.x(), v.y()}); }

json to_json(const Points& p) {
  json out = json::array();
  for (Eigen::Index i = 0; i < p.rows(); ++i) out.push_back(json::array({p(i, 0), p(i, 1)}));
  return out;
}

json to_json(const std::vector<Edge>& edges) {
  json out = json::array();
  for (const auto& [a, b] : edges) out.push_back(json::array({a, b}));
  return out;
}

std::vector<Edge> edges(const json& j, const std::string& path) {
  const auto& arr = array(j, path);
  std::vector<Edge> out;
  out.reserve(arr.size());
  for (std::size_t i = 0; i < arr.size(); ++i) {
    const auto p = path + "[" + std::to_string(i) + "]";
    if (!arr[i].is_array() || arr[i].size() != 2) throw ParseError(p + ": expected [from, to]");
    out.emplace_back(integer(arr[i][0], p + "[0]"), integer(arr[i][1], p + "[1]"));
  }
  return out;
}

json track_to_json(const AgentTrack& t) {
  json out = {{"history", to_json(t.history)}};
  if (t.future) out["future"] = to_json(*t.future);
  return out;
}

AgentTrack track_from_json(const json& j, const std::string& path) {
  AgentTrack t;
  t.history = points(field(j, "history", path), path + ".history");
  if (j.contains("future") && !j.at("future").is_null())
    t.future = points(j.at("future"), path + ".future");
  return t;
}

json parse_json(const std::string& text, const std::string& where) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(where + ": " + e.what());
  }
}

}  // namespace

json to_json(const Scenario& s) {
  json lanes = json::array();
  for (const auto& n : s.lane_graph.nodes()) {
    lanes.push_back({{"id", n.id},
                     {"position", to_json(n.position)},
                     {"direction", to_json(n.direction)},
                     {"segment_length", n.segment_length},
                     {"is_turn", n.is_turn},
                     {"is_intersection", n.is_intersection},
                     {"speed_limit", n.speed_limit}});
  }
  const auto& adj = s.lane_graph.adjacency();
  json context = json::array();
  for (const auto& c : s.context) context.push_back(track_to_json(c));
  return {{"id", s.id},
          {"lanes", std::move(lanes)},
          {"adjacency",
           {{"successor", to_json(adj.successor)},
            {"predecessor", to_json(adj.predecessor)},
            {"left", to_json(adj.left)},
            {"right", to_json(adj.right)}}},
          {"target", track_to_json(s.target)},
          {"context", std::move(context)},
          {"meta", s.meta}};
}

Scenario scenario_from_json(const json& doc) {
  Scenario s;
  const auto& id = field(doc, "id", "$");
  if (!id.is_string()) throw ParseError("$.id: expected a string");
  s.id = id.get<std::string>();

  std::vector<LaneNode> nodes;
  const auto& lanes = array(field(doc, "lanes", "$"), "$.lanes");
  for (std::size_t i = 0; i < lanes.size(); ++i) {
    const auto p = "$.lanes[" + std::to_string(i) + "]";
    const auto& l = lanes[i];
    LaneNode n;
    n.id = integer(field(l, "id", p), p + ".id");
    n.position = vec2(field(l, "position", p), p + ".position");
    n.direction = vec2(field(l, "direction", p), p + ".direction");
    n.segment_length = number(field(l, "segment_length", p), p + ".segment_length");
    n.is_turn = boolean(field(l, "is_turn", p), p + ".is_turn");
    n.is_intersection = boolean(field(l, "is_intersection", p), p + ".is_intersection");
    n.speed_limit = number(field(l, "speed_limit", p), p + ".speed_limit");
    nodes.push_back(n);
  }
  const auto& adj = field(doc, "adjacency", "$");
  Adjacency a;
  a.successor = edges(field(adj, "successor", "$.adjacency"), "$.adjacency.successor");
  a.predecessor = edges(field(adj, "predecessor", "$.adjacency"), "$.adjacency.predecessor");
  a.left = edges(field(adj, "left", "$.adjacency"), "$.adjacency.left");
  a.right = edges(field(adj, "right", "$.adjacency"), "$.adjacency.right");
  s.lane_graph = LaneGraph(std::move(nodes), std::move(a));

  s.target = track_from_json(field(doc, "target", "$"), "$.target");
  if (doc.contains("context")) {
    const auto& ctx = array(doc.at("context"), "$.context");
    for (std::size_t i = 0; i < ctx.size(); ++i)
      s.context.push_back(track_from_json(ctx[i], "$.context[" + std::to_string(i) + "]"));
  }
  if (doc.contains("meta")) s.meta = doc.at("meta");
  validate(s);
  return s;
}

// ---------------------------------------------------------------------------
// Files

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file_atomic(const std::filesystem::path& path, const std::string& contents) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp.string());
    out << contents;
    if (!out) throw IoError("write failed for " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot rename " + tmp.string() + " to " + path.string() + ": " + ec.message());
}

Scenario load_scenario(const std::filesystem::path& path) {
  return scenario_from_json(parse_json(read_file(path), path.string()));
}

void save_scenario(const Scenario& scenario, const std::filesystem::path& path) {
  write_file_atomic(path, to_json(scenario).dump() + "\n");
}

std::vector<Scenario> load_dataset(const std::filesystem::path& dir) {
  const auto index_path = dir / "index.json";
  const json index = parse_json(read_file(index_path), index_path.string());
  const auto& ids = array(field(index, "ids", "$"), "$.ids");
  std::vector<Scenario> out;
  out.reserve(ids.size());
  std::set<std::string> seen;
  for (const auto& id : ids) {
    if (!id.is_string()) throw ParseError("$.ids: expected strings");
    const auto name = id.get<std::string>();
    if (!seen.insert(name).second) throw ValidationError("scenario ids unique: " + name);
    out.push_back(load_scenario(dir / (name + ".json")));
    if (out.back().id != name)
      throw ValidationError("scenario id matches index entry: " + name);
  }
  return out;
}

void save_dataset(const std::vector<Scenario>& scenarios, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  json ids = json::array();
  for (const auto& s : scenarios) {
    save_scenario(s, dir / (s.id + ".json"));
    ids.push_back(s.id);
  }
  write_file_atomic(dir / "index.json", json{{"ids", ids}}.dump() + "\n");
}

json to_json(const Forecast& f) {
  json modes = json::array();
  for (const auto& m : f.modes) modes.push_back({{"p", m.probability}, {"traj", to_json(m.trajectory)}});
  return {{"scenario_id", f.scenario_id}, {"modes", std::move(modes)}};
}

Forecast forecast_from_json(const json& doc) {
  Forecast f;
  const auto& id = field(doc, "scenario_id", "$");
  if (!id.is_string()) throw ParseError("$.scenario_id: expected a string");
  f.scenario_id = id.get<std::string>();
  const auto& modes = array(field(doc, "modes", "$"), "$.modes");
  for (std::size_t i = 0; i < modes.size(); ++i) {
    const auto p = "$.modes[" + std::to_string(i) + "]";
    Mode m;
    m.probability = number(field(modes[i], "p", p), p + ".p");
    m.trajectory = points(field(modes[i], "traj", p), p + ".traj");
    f.modes.push_back(std::move(m));
  }
  return f;
}

std::string forecasts_to_jsonl(const std::vector<Forecast>& forecasts) {
  std::string out;
  for (const auto& f : forecasts) {
    out += to_json(f).dump();
    out += '\n';
  }
  return out;
}

std::vector<Forecast> load_forecasts(const std::filesystem::path& path) {
  std::istringstream in(read_file(path));
  std::vector<Forecast> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    out.push_back(forecast_from_json(parse_json(line, path.string() + ":" + std::to_string(lineno))));
  }
  return out;
}

void save_forecasts(const std::vector<Forecast>& forecasts, const std::filesystem::path& path) {
  write_file_atomic(path, forecasts_to_jsonl(forecasts));
}

}  // namespace heatcast
