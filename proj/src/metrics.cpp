#include "heatcast/metrics.hpp"

#include <algorithm>
#include <cstdio>
#include <limits>
#include <map>
#include <sstream>

namespace heatcast {

using nlohmann::json;

namespace {

void check(const Forecast& f, const Points& gt) {
  if (f.modes.empty()) throw std::invalid_argument("forecast " + f.scenario_id + " has no modes");
  for (const auto& m : f.modes)
    if (m.trajectory.rows() != gt.rows() || m.trajectory.cols() != 2 || gt.rows() == 0)
      throw std::invalid_argument("trajectory length mismatch in forecast " + f.scenario_id + ": " +
                                  std::to_string(m.trajectory.rows()) + " vs " +
                                  std::to_string(gt.rows()));
}

}  // namespace

MinFde min_fde(const Forecast& f, const Points& gt) {
  check(f, gt);
  const Eigen::Index last = gt.rows() - 1;
  MinFde out{std::numeric_limits<double>::infinity(), 0};
  for (std::size_t i = 0; i < f.modes.size(); ++i) {
    const double d = (f.modes[i].trajectory.row(last) - gt.row(last)).norm();
    if (d < out.value) out = {d, i};
  }
  return out;
}

double min_ade(const Forecast& f, const Points& gt) {
  check(f, gt);
  double best = std::numeric_limits<double>::infinity();
  for (const auto& m : f.modes)
    best = std::min(best, (m.trajectory - gt).rowwise().norm().mean());
  return best;
}

bool is_miss(const Forecast& f, const Points& gt, double threshold) {
  return min_fde(f, gt).value > threshold;
}

double brier_min_fde(const Forecast& f, const Points& gt) {
  const MinFde m = min_fde(f, gt);
  const double q = 1.0 - f.modes[m.best_index].probability;
  return m.value + q * q;
}

json EvalReport::to_json() const {
  json rows = json::array();
  for (const auto& r : per_scenario)
    rows.push_back({{"scenario_id", r.scenario_id},
                    {"minADE", r.min_ade},
                    {"minFDE", r.min_fde},
                    {"miss", r.miss},
                    {"brier_minFDE", r.brier_min_fde}});
  return {{"per_scenario", std::move(rows)},
          {"aggregate",
           {{"minADE", min_ade}, {"minFDE", min_fde}, {"MR", miss_rate}, {"brier_minFDE", brier_min_fde}}},
          {"count", count}};
}

EvalReport evaluate(const std::vector<Forecast>& forecasts, const std::vector<Scenario>& dataset) {
  if (dataset.empty()) throw std::invalid_argument("evaluate: empty dataset");
  std::map<std::string, const Forecast*> by_id;
  std::vector<std::string> duplicate;
  for (const auto& f : forecasts)
    if (!by_id.emplace(f.scenario_id, &f).second) duplicate.push_back(f.scenario_id);
  if (!duplicate.empty())
    throw IdMismatchError("duplicate forecast ids: " + duplicate.front() +
                          (duplicate.size() > 1 ? " and " + std::to_string(duplicate.size() - 1) + " more" : ""));

  std::map<std::string, const Scenario*> scenes;
  for (const auto& s : dataset) scenes.emplace(s.id, &s);
  std::vector<std::string> missing, extra;
  for (const auto& [id, s] : scenes)
    if (!by_id.count(id)) missing.push_back(id);
  for (const auto& [id, f] : by_id)
    if (!scenes.count(id)) extra.push_back(id);
  if (!missing.empty() || !extra.empty()) {
    std::string msg = "scenario id mismatch;";
    auto list = [&](const char* what, const std::vector<std::string>& ids) {
      if (ids.empty()) return;
      msg += std::string(" ") + what + ":";
      for (std::size_t i = 0; i < ids.size() && i < 10; ++i) msg += " " + ids[i];
      if (ids.size() > 10) msg += " (+" + std::to_string(ids.size() - 10) + ")";
    };
    list("missing forecasts", missing);
    list("unknown ids", extra);
    throw IdMismatchError(msg);
  }

  EvalReport r;
  for (const auto& [id, s] : scenes) {
    if (!s->target.future) throw std::invalid_argument("scenario " + id + " has no ground-truth future");
    const Forecast& f = *by_id.at(id);
    const Points& gt = *s->target.future;
    ScenarioMetrics m;
    m.scenario_id = id;
    m.min_ade = min_ade(f, gt);
    m.min_fde = min_fde(f, gt).value;
    m.miss = m.min_fde > kMissThreshold;
    m.brier_min_fde = brier_min_fde(f, gt);
    r.min_ade += m.min_ade;
    r.min_fde += m.min_fde;
    r.miss_rate += m.miss ? 1.0 : 0.0;
    r.brier_min_fde += m.brier_min_fde;
    r.per_scenario.push_back(std::move(m));
  }
  r.count = r.per_scenario.size();
  const double n = static_cast<double>(r.count);
  r.min_ade /= n;
  r.min_fde /= n;
  r.miss_rate /= n;
  r.brier_min_fde /= n;
  return r;
}

std::string format_table(const std::vector<std::pair<std::string, EvalReport>>& rows) {
  std::size_t width = 6;
  for (const auto& [name, r] : rows) width = std::max(width, name.size());
  std::ostringstream out;
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-*s  %12s  %8s  %8s  %6s\n", static_cast<int>(width), "Method",
                "Brier-minFDE", "minFDE", "minADE", "MR");
  out << buf;
  for (const auto& [name, r] : rows) {
    std::snprintf(buf, sizeof buf, "%-*s  %12.4f  %8.4f  %8.4f  %6.3f\n", static_cast<int>(width),
                  name.c_str(), r.brier_min_fde, r.min_fde, r.min_ade, r.miss_rate);
    out << buf;
  }
  return out.str();
}

}  // namespace heatcast
