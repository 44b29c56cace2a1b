#include "heatcast/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <map>
#include <thread>

namespace heatcast {

using nlohmann::json;
namespace fs = std::filesystem;

const char* to_string(FusionMethod m) {
  switch (m) {
    case FusionMethod::none: return "none";
    case FusionMethod::hungarian: return "bipartite";
    case FusionMethod::kmeans: return "kmeans";
  }
  return "?";
}

FusionMethod fusion_method_from_string(const std::string& s) {
  if (s == "none") return FusionMethod::none;
  if (s == "hungarian" || s == "bipartite") return FusionMethod::hungarian;
  if (s == "kmeans") return FusionMethod::kmeans;
  throw std::invalid_argument("unknown fusion method: " + s + " (expected none, hungarian or kmeans)");
}

json ExperimentConfig::to_json() const {
  return {{"dataset", dataset.string()},
          {"val_dataset", val_dataset.string()},
          {"checkpoint", checkpoint.string()},
          {"output_dir", output_dir.string()},
          {"model", model.to_json()},
          {"train", train.to_json()},
          {"ensemble",
           {{"method", to_string(ensemble.method)},
            {"seed", ensemble.seed},
            {"weights", ensemble.weights},
            {"fuse_traj", ensemble.trajectories == TrajectoryFusion::select ? "select" : "average"}}},
          {"seeds", seeds},
          {"seed", seed}};
}

ExperimentConfig ExperimentConfig::from_json(const json& doc, const fs::path& base) {
  if (!doc.is_object()) throw std::invalid_argument("experiment config must be a JSON object");
  ExperimentConfig c;
  auto path = [&](const char* key, fs::path& out) {
    if (!doc.contains(key)) return;
    fs::path p = doc.at(key).get<std::string>();
    out = p.empty() || p.is_absolute() || base.empty() ? p : base / p;
  };
  path("dataset", c.dataset);
  path("val_dataset", c.val_dataset);
  path("checkpoint", c.checkpoint);
  path("output_dir", c.output_dir);
  if (doc.contains("model")) c.model = ModelConfig::from_json(doc.at("model"));
  if (doc.contains("train")) c.train = TrainConfig::from_json(doc.at("train"));
  if (doc.contains("ensemble")) {
    const auto& e = doc.at("ensemble");
    if (e.contains("method")) c.ensemble.method = fusion_method_from_string(e.at("method"));
    c.ensemble.seed = e.value("seed", c.ensemble.seed);
    c.ensemble.weights = e.value("weights", c.ensemble.weights);
    const std::string traj = e.value("fuse_traj", std::string("average"));
    if (traj != "average" && traj != "select")
      throw std::invalid_argument("fuse_traj must be average or select");
    c.ensemble.trajectories = traj == "select" ? TrajectoryFusion::select : TrajectoryFusion::average;
  }
  c.seeds = doc.value("seeds", c.seeds);
  c.seed = doc.value("seed", c.seed);
  c.train.seed = doc.contains("train") && doc.at("train").contains("seed") ? c.train.seed : c.seed;
  if (c.seeds.empty()) throw std::invalid_argument("seeds must not be empty");
  validate(c.train);
  validate(c.model.encoder);
  return c;
}

ExperimentConfig load_experiment_config(const fs::path& path) {
  const std::string text = read_file(path);
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
  return ExperimentConfig::from_json(doc, path.parent_path());
}

unsigned worker_count() {
  if (const char* env = std::getenv("HEATCAST_THREADS")) {
    const int n = std::atoi(env);
    if (n >= 1) return static_cast<unsigned>(n);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

void parallel_for(std::size_t n, unsigned workers, const std::function<void(std::size_t)>& fn) {
  workers = std::max(1u, std::min<unsigned>(workers, static_cast<unsigned>(std::max<std::size_t>(n, 1))));
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(workers);
  for (unsigned w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t i = w; i < n; i += workers) fn(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

std::vector<Forecast> predict_all(const Model& model, const std::vector<Scenario>& dataset,
                                  unsigned workers) {
  std::vector<Forecast> out(dataset.size());
  parallel_for(dataset.size(), workers, [&](std::size_t i) { out[i] = predict(model, dataset[i]); });
  return out;
}

std::vector<Forecast> constant_velocity_all(const std::vector<Scenario>& dataset) {
  std::vector<Forecast> out;
  out.reserve(dataset.size());
  for (const auto& s : dataset) out.push_back(constant_velocity_forecast(s));
  return out;
}

std::vector<Forecast> fuse_all(const std::vector<std::vector<Forecast>>& per_model,
                               const EnsembleSettings& settings) {
  if (per_model.empty()) throw std::invalid_argument("fuse_all: no forecast lists");
  std::vector<std::map<std::string, const Forecast*>> index(per_model.size());
  for (std::size_t m = 0; m < per_model.size(); ++m) {
    for (const auto& f : per_model[m])
      if (!index[m].emplace(f.scenario_id, &f).second)
        throw IdMismatchError("duplicate scenario id " + f.scenario_id + " in forecast list " +
                              std::to_string(m + 1));
    if (index[m].size() != index[0].size())
      throw IdMismatchError("forecast list " + std::to_string(m + 1) + " covers " +
                            std::to_string(index[m].size()) + " scenarios, list 1 covers " +
                            std::to_string(index[0].size()));
    for (const auto& [id, f] : index[m])
      if (!index[0].count(id))
        throw IdMismatchError("scenario " + id + " appears in forecast list " +
                              std::to_string(m + 1) + " but not in list 1");
  }
  if (settings.method == FusionMethod::none) return per_model.front();

  FusionOptions opts;
  opts.seed = settings.seed;
  opts.model_weights = settings.weights;
  opts.trajectories = settings.trajectories;
  std::vector<Forecast> out;
  for (const auto& f : per_model.front()) {
    std::vector<Forecast> group;
    for (const auto& idx : index) group.push_back(*idx.at(f.scenario_id));
    out.push_back(settings.method == FusionMethod::kmeans ? kmeans_fuse(group, opts)
                                                          : hungarian_fuse(group, opts));
  }
  return out;
}

json AblationResult::to_json() const {
  auto rows = [](const std::vector<AblationRow>& rs) {
    json a = json::array();
    for (const auto& r : rs) {
      json j = r.report.to_json();
      j.erase("per_scenario");
      j["method"] = r.method;
      a.push_back(std::move(j));
    }
    return a;
  };
  json cv = constant_velocity.to_json();
  cv.erase("per_scenario");
  return {{"heads", rows(heads)},
          {"ensemble", rows(ensemble)},
          {"members", rows(members)},
          {"constant_velocity", cv},
          {"train_seconds", train_seconds}};
}

namespace {

std::string table(const std::vector<AblationRow>& rows) {
  std::vector<std::pair<std::string, EvalReport>> t;
  for (const auto& r : rows) t.emplace_back(r.method, r.report);
  return format_table(t);
}

}  // namespace

std::string AblationResult::head_table() const { return table(heads); }
std::string AblationResult::ensemble_table() const { return table(ensemble); }

AblationResult run_ablation(const ExperimentConfig& config, const std::vector<Scenario>& train_set,
                            const std::vector<Scenario>& val_set, const fs::path& out_dir,
                            const Log& log) {
  AblationResult result;
  const unsigned workers = worker_count();
  auto note = [&](const std::string& s) {
    if (log) log(s);
  };
  if (!out_dir.empty()) fs::create_directories(out_dir);

  auto fit = [&](HeadKind head, std::uint64_t seed) {
    ModelConfig mc = config.model;
    mc.head = head;
    Model model = init_model(mc, seed);
    TrainConfig tc = config.train;
    tc.seed = seed;
    const auto t0 = std::chrono::steady_clock::now();
    const TrainResult tr = train(model, train_set, tc, 0, [&](int epoch, const LossReport& r) {
      note(std::string(to_string(head)) + " seed " + std::to_string(seed) + " epoch " +
           std::to_string(epoch) + " loss " + std::to_string(r.total));
    });
    if (tr.diverged)
      throw DivergenceError(std::string("training diverged: ") + to_string(head) + " seed " +
                            std::to_string(seed));
    result.train_seconds.push_back(
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
    const std::string tag = std::string(to_string(head)) + "_seed" + std::to_string(seed);
    std::vector<Forecast> fc = predict_all(model, val_set, workers);
    if (!out_dir.empty()) {
      save_checkpoint(model, tc.epochs, out_dir / (tag + ".ckpt.json"));
      save_forecasts(fc, out_dir / (tag + ".forecasts.jsonl"));
    }
    return fc;
  };

  result.constant_velocity = evaluate(constant_velocity_all(val_set), val_set);
  std::map<std::uint64_t, std::vector<Forecast>> members;
  for (HeadKind head : {HeadKind::direct, HeadKind::nms, HeadKind::distribution}) {
    auto fc = fit(head, config.seed);
    result.heads.push_back({to_string(head), evaluate(fc, val_set)});
    if (head == HeadKind::distribution) members[config.seed] = std::move(fc);
  }
  for (auto seed : config.seeds)
    if (!members.count(seed)) members[seed] = fit(HeadKind::distribution, seed);

  std::vector<std::vector<Forecast>> lists;
  const AblationRow* best = nullptr;
  for (auto seed : config.seeds) {
    lists.push_back(members.at(seed));
    result.members.push_back({"distribution_seed" + std::to_string(seed), evaluate(lists.back(), val_set)});
  }
  for (const auto& m : result.members)
    if (!best || m.report.brier_min_fde < best->report.brier_min_fde) best = &m;
  result.ensemble.push_back({"none", best->report});
  for (FusionMethod method : {FusionMethod::hungarian, FusionMethod::kmeans}) {
    EnsembleSettings s = config.ensemble;
    s.method = method;
    const auto fused = fuse_all(lists, s);
    if (!out_dir.empty())
      save_forecasts(fused, out_dir / (std::string("ensemble_") + to_string(method) + ".forecasts.jsonl"));
    result.ensemble.push_back({to_string(method), evaluate(fused, val_set)});
  }
  return result;
}

}  // namespace heatcast
