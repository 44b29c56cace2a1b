#include "heatcast/cli.hpp"

#include "heatcast/experiment.hpp"
#include "heatcast/plot.hpp"
#include "heatcast/preprocess.hpp"
#include "heatcast/synthetic.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <functional>
#include <optional>
#include <ostream>
#include <sstream>

namespace heatcast {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

SceneMix parse_mix(const std::string& text) {
  SceneMix mix{0.0, 0.0, 0.0, 0.0};
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto eq = item.find('=');
    if (eq == std::string::npos) throw UsageError("--mix expects type=fraction pairs, got '" + item + "'");
    const std::string key = item.substr(0, eq);
    double v = 0.0;
    try {
      std::size_t used = 0;
      v = std::stod(item.substr(eq + 1), &used);
      if (used != item.size() - eq - 1) throw std::invalid_argument("trailing characters");
    } catch (const std::exception&) {
      throw UsageError("--mix: bad fraction in '" + item + "'");
    }
    switch (scene_type_from_string(key)) {
      case SceneType::straight: mix.straight = v; break;
      case SceneType::curve: mix.curve = v; break;
      case SceneType::fork: mix.fork = v; break;
      case SceneType::merge: mix.merge = v; break;
    }
  }
  return mix;
}

ExperimentConfig config_or_default(const std::optional<std::string>& path) {
  if (!path) return {};
  try {
    return load_experiment_config(*path);
  } catch (const std::exception& e) {
    throw UsageError(std::string("config: ") + e.what());
  }
}

void require_path(const fs::path& p, const char* what) {
  if (p.empty()) throw UsageError(std::string(what) + " is required");
  if (!fs::exists(p)) throw UsageError(std::string(what) + " not found: " + p.string());
}

std::vector<Scenario> load_required_dataset(const fs::path& p, const char* what) {
  require_path(p, what);
  return load_dataset(p);
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  write_file_atomic(path, text);
}

// ---------------------------------------------------------------------------

struct GenArgs {
  int scenes = 100;
  std::optional<std::string> mix;
  std::uint64_t seed = 0;
  double noise = GeneratorConfig{}.noise_sigma;
  int max_context = GeneratorConfig{}.max_context;
  bool fixed_pose = false;
  std::string prefix = "scene";
  std::string out;
};

int cmd_gen(const GenArgs& a, std::ostream& out) {
  GeneratorConfig c;
  c.n_scenes = a.scenes;
  if (a.mix) c.mix = parse_mix(*a.mix);
  c.noise_sigma = a.noise;
  c.max_context = a.max_context;
  c.random_pose = !a.fixed_pose;
  c.id_prefix = a.prefix;
  try {
    validate(c);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  const auto scenes = generate_synthetic(c, a.seed);
  save_dataset(scenes, a.out);
  json gen = c.to_json();
  gen["seed"] = a.seed;
  write_text(fs::path(a.out) / "generator.json", gen.dump(2) + "\n");
  out << "wrote " << scenes.size() << " scenes to " << a.out << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct ModelOverrides {
  std::optional<std::string> head;
  std::optional<int> hidden_dim;
  bool full_trajectory_points = false;

  bool any() const { return head || hidden_dim || full_trajectory_points; }
  void apply(ModelConfig& m) const {
    if (head) m.head = head_kind_from_string(*head);
    if (hidden_dim) m.encoder.hidden_dim = *hidden_dim;
    if (full_trajectory_points) m.full_trajectory_points = true;
    validate(m.encoder);
  }
};

struct TrainOverrides {
  std::optional<int> epochs;
  std::optional<int> batch_size;
  std::optional<double> lr;
  bool no_augment = false;

  void apply(TrainConfig& t) const {
    if (epochs) t.epochs = *epochs;
    if (batch_size) t.batch_size = *batch_size;
    if (lr) t.learning_rate = *lr;
    if (no_augment) t.augment.enabled = false;
    validate(t);
  }
};

struct TrainArgs {
  std::optional<std::string> config;
  std::optional<std::string> dataset;
  std::optional<std::string> checkpoint;
  std::optional<std::string> curve;
  std::optional<std::string> resume;
  std::optional<std::uint64_t> seed;
  ModelOverrides model;
  TrainOverrides train;
};

int cmd_train(const TrainArgs& a, std::ostream& out, std::ostream& err) {
  ExperimentConfig c = config_or_default(a.config);
  bool model_given = false;
  if (a.config) {
    const json doc = json::parse(read_file(*a.config));
    model_given = doc.contains("model");
  }
  try {
    a.model.apply(c.model);
    a.train.apply(c.train);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  model_given = model_given || a.model.any();
  if (a.dataset) c.dataset = *a.dataset;
  if (a.checkpoint) c.checkpoint = *a.checkpoint;
  if (a.seed) c.seed = c.train.seed = *a.seed;
  if (c.checkpoint.empty()) throw UsageError("no checkpoint path (set \"checkpoint\" in the config or pass --checkpoint)");
  const fs::path curve_path = a.curve ? fs::path(*a.curve) : c.checkpoint.parent_path() / "curve.csv";
  const auto dataset = load_required_dataset(c.dataset, "dataset");

  Model model;
  int first_epoch = 0;
  if (a.resume) {
    std::string warning;
    Checkpoint ck = load_checkpoint(*a.resume, &warning);
    if (!warning.empty()) err << "warning: " << warning << "\n";
    if (model_given && config_hash(ck.config) != config_hash(c.model))
      throw CheckpointError("model config of " + *a.resume + " differs from the requested one");
    model = {ck.config, std::move(ck.params)};
    first_epoch = ck.epoch;
  } else {
    model = init_model(c.model, c.seed);
  }

  const TrainResult r = train(model, dataset, c.train, first_epoch, [&](int epoch, const LossReport& l) {
    char line[160];
    std::snprintf(line, sizeof line, "epoch %d loss %.6f\n", epoch, l.total);
    out << line << std::flush;
  });
  std::string csv = curve_csv(r);
  if (a.resume && fs::exists(curve_path)) csv = read_file(curve_path) + csv.substr(csv.find('\n') + 1);
  write_text(curve_path, csv);
  if (r.diverged) {
    err << "error: training diverged at epoch " << first_epoch + static_cast<int>(r.curve.size())
        << "; no checkpoint written\n";
    return kExitDivergence;
  }
  if (c.checkpoint.has_parent_path()) fs::create_directories(c.checkpoint.parent_path());
  save_checkpoint(model, first_epoch + static_cast<int>(r.curve.size()), c.checkpoint);
  out << "wrote " << c.checkpoint.string() << " and " << curve_path.string() << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct PredictArgs {
  std::optional<std::string> checkpoint;
  std::optional<std::string> dataset;
  std::optional<std::string> config;
  std::string out;
  bool constant_velocity = false;
};

int cmd_predict(const PredictArgs& a, std::ostream& out, std::ostream& err) {
  ExperimentConfig c = config_or_default(a.config);
  if (a.dataset) c.dataset = *a.dataset;
  if (a.checkpoint) c.checkpoint = *a.checkpoint;
  const auto dataset = load_required_dataset(c.dataset, "dataset");
  std::vector<Forecast> forecasts;
  if (a.constant_velocity) {
    forecasts = constant_velocity_all(dataset);
  } else {
    if (c.checkpoint.empty()) throw UsageError("--checkpoint is required");
    std::string warning;
    Checkpoint ck = load_checkpoint(c.checkpoint, &warning);
    if (!warning.empty()) err << "warning: " << warning << "\n";
    if (a.config && config_hash(ck.config) != config_hash(c.model))
      throw CheckpointError("checkpoint " + c.checkpoint.string() + " was trained with a different model config than " +
                            *a.config);
    const Model model{ck.config, std::move(ck.params)};
    forecasts = predict_all(model, dataset, worker_count());
  }
  for (const auto& f : forecasts) {
    const auto problems = validate_forecast(f);
    if (!problems.empty()) throw std::logic_error("invalid forecast for " + f.scenario_id + ": " + problems.front());
  }
  if (fs::path(a.out).has_parent_path()) fs::create_directories(fs::path(a.out).parent_path());
  save_forecasts(forecasts, a.out);
  out << "wrote " << forecasts.size() << " forecasts to " << a.out << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------

void report(const std::string& name, const EvalReport& r, const std::optional<std::string>& json_path,
            std::ostream& out) {
  out << format_table({{name, r}});
  if (json_path) write_text(*json_path, r.to_json().dump(2) + "\n");
}

struct EvalArgs {
  std::string dataset;
  std::string forecasts;
  std::string name = "model";
  std::optional<std::string> json_out;
};

int cmd_eval(const EvalArgs& a, std::ostream& out) {
  const auto dataset = load_required_dataset(a.dataset, "dataset");
  require_path(a.forecasts, "forecast file");
  report(a.name, evaluate(load_forecasts(a.forecasts), dataset), a.json_out, out);
  return kExitOk;
}

struct EnsembleArgs {
  std::vector<std::string> forecasts;
  std::string method = "kmeans";
  std::vector<double> weights;
  std::uint64_t seed = 0;
  std::string fuse_traj = "average";
  std::optional<std::string> out;
  std::optional<std::string> dataset;
  std::optional<std::string> json_out;
};

int cmd_ensemble(const EnsembleArgs& a, std::ostream& out) {
  EnsembleSettings s;
  try {
    s.method = fusion_method_from_string(a.method);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  s.seed = a.seed;
  s.weights = a.weights;
  s.trajectories = a.fuse_traj == "select" ? TrajectoryFusion::select : TrajectoryFusion::average;
  if (!s.weights.empty() && s.weights.size() != a.forecasts.size())
    throw UsageError("--weights needs one value per forecast file (" + std::to_string(a.forecasts.size()) + ")");
  std::vector<std::vector<Forecast>> lists;
  for (const auto& f : a.forecasts) {
    require_path(f, "forecast file");
    lists.push_back(load_forecasts(f));
  }
  const auto fused = fuse_all(lists, s);
  if (a.out) {
    save_forecasts(fused, *a.out);
    out << "wrote " << fused.size() << " fused forecasts to " << *a.out << "\n";
  }
  if (a.dataset) report(to_string(s.method), evaluate(fused, load_required_dataset(*a.dataset, "dataset")),
                        a.json_out, out);
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct AblateArgs {
  std::optional<std::string> config;
  std::optional<std::string> dataset;
  std::optional<std::string> val_dataset;
  std::optional<std::string> out;
  std::optional<std::uint64_t> seed;
  std::vector<std::uint64_t> seeds;
  ModelOverrides model;
  TrainOverrides train;
};

int cmd_ablate(const AblateArgs& a, std::ostream& out, std::ostream& err) {
  ExperimentConfig c = config_or_default(a.config);
  try {
    a.model.apply(c.model);
    a.train.apply(c.train);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  if (a.dataset) c.dataset = *a.dataset;
  if (a.val_dataset) c.val_dataset = *a.val_dataset;
  if (a.out) c.output_dir = *a.out;
  if (a.seed) c.seed = *a.seed;
  if (!a.seeds.empty()) c.seeds = a.seeds;
  if (c.output_dir.empty()) throw UsageError("no output directory (set \"output_dir\" or pass --out)");
  const auto train_set = load_required_dataset(c.dataset, "dataset");
  const auto val_set = load_required_dataset(c.val_dataset, "validation dataset");
  const AblationResult r = run_ablation(c, train_set, val_set, c.output_dir,
                                        [&](const std::string& line) { err << line << "\n" << std::flush; });
  const std::string heads = r.head_table(), ens = r.ensemble_table();
  write_text(c.output_dir / "heads.txt", heads);
  write_text(c.output_dir / "ensemble.txt", ens);
  write_text(c.output_dir / "ablation.json", r.to_json().dump(2) + "\n");
  out << "Prediction heads\n" << heads << "\nEnsemble methods\n" << ens;
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct PlotArgs {
  std::string scenario;
  std::optional<std::string> forecast;
  std::optional<std::string> checkpoint;
  std::string out;
};

int cmd_plot(const PlotArgs& a, std::ostream& out, std::ostream& err) {
  const Scenario s = load_scenario(a.scenario);
  std::optional<Forecast> forecast;
  if (a.forecast) {
    for (auto& f : load_forecasts(*a.forecast))
      if (f.scenario_id == s.id) forecast = std::move(f);
    if (!forecast) throw IdMismatchError("no forecast for scenario " + s.id + " in " + *a.forecast);
  }
  std::vector<HeatPoint> heat;
  if (a.checkpoint) {
    std::string warning;
    Checkpoint ck = load_checkpoint(*a.checkpoint, &warning);
    if (!warning.empty()) err << "warning: " << warning << "\n";
    heat = model_heatmap(Model{ck.config, std::move(ck.params)}, s);
  } else {
    heat = uniform_heatmap(s);
  }
  write_text(a.out, render_svg(s, forecast ? &*forecast : nullptr, heat));
  out << "wrote " << a.out << " (" << heat.size() << " candidates)\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------

int cmd_inspect(const std::string& path, std::ostream& out) {
  const Scenario s = load_scenario(path);
  const auto [local, pose] = normalize(s);
  const CandidateSet set = generate_candidates(local);
  json paths = json::array();
  for (const auto& p : set.paths)
    paths.push_back({{"node_ids", p.node_ids}, {"length", p.arclength.empty() ? 0.0 : p.arclength.back()},
                     {"lane_change", p.used_neighbor_hop}});
  json goals = json::array();
  for (const auto& g : set.goals) {
    const Vec2 w = pose.to_world(g.position);
    goals.push_back({{"node_id", g.node_id}, {"position", {w.x(), w.y()}}, {"arclength", g.arclength}});
  }
  const json doc = {{"scenario", s.id},
                    {"lane_nodes", s.lane_graph.size()},
                    {"context_agents", s.context.size()},
                    {"speed", set.kinematics.speed},
                    {"accel", set.kinematics.accel},
                    {"seeds", set.seeds},
                    {"window", {set.window.lo, set.window.hi}},
                    {"paths", paths},
                    {"candidates", goals}};
  out << doc.dump(2) << "\n";
  return kExitOk;
}

int guarded(const std::function<int()>& fn, std::ostream& err) {
  try {
    return fn();
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const IdMismatchError& e) {
    err << "error: " << e.what() << "\n";
    return kExitIdMismatch;
  } catch (const CheckpointError& e) {
    err << "error: " << e.what() << "\n";
    return kExitCheckpoint;
  } catch (const DivergenceError& e) {
    err << "error: " << e.what() << "\n";
    return kExitDivergence;
  } catch (const IoError& e) {
    err << "error: " << e.what() << "\n";
    return kExitIo;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return kExitIo;
  } catch (const ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kExitIo;
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << "\n";
    return kExitIo;
  } catch (const nlohmann::json::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitIo;
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << "\n";
    return kExitInternal;
  }
}

void add_model_flags(CLI::App* cmd, ModelOverrides& m) {
  cmd->add_option("--head", m.head, "Prediction head: distribution, nms or direct");
  cmd->add_option("--hidden-dim", m.hidden_dim, "Encoder and head width");
  cmd->add_flag("--full-trajectory-points", m.full_trajectory_points,
                "Feed all trajectory points (not only the goal) to the set regressor");
}

void add_train_flags(CLI::App* cmd, TrainOverrides& t) {
  cmd->add_option("--epochs", t.epochs, "Training epochs");
  cmd->add_option("--batch-size", t.batch_size, "Scenes per optimizer step");
  cmd->add_option("--lr", t.lr, "Learning rate");
  cmd->add_flag("--no-augment", t.no_augment, "Disable training-time augmentation");
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Goal-heatmap trajectory forecasting on synthetic lane scenes"};
  app.name("heatcast");
  app.require_subcommand(1);
  app.footer(
      "Settings precedence: built-in defaults < --config file < command-line flags.\n"
      "Exit codes: 0 ok, 2 invalid arguments/config, 3 I/O, 4 divergence, 5 checkpoint, 6 scenario id "
      "mismatch.\nHEATCAST_THREADS caps the prediction worker count.");

  GenArgs gen;
  auto* c_gen = app.add_subcommand("gen", "Generate a synthetic scenario dataset");
  c_gen->add_option("--scenes", gen.scenes, "Number of scenes")->capture_default_str();
  c_gen->add_option("--mix", gen.mix, "Scene-type fractions, e.g. straight=0.2,curve=0.25,fork=0.4,merge=0.15");
  c_gen->add_option("--seed", gen.seed, "Generator seed")->capture_default_str();
  c_gen->add_option("--noise", gen.noise, "Std-dev (m) of noise on observed histories")->capture_default_str();
  c_gen->add_option("--max-context", gen.max_context, "Maximum context agents per scene")->capture_default_str();
  c_gen->add_flag("--fixed-pose", gen.fixed_pose, "Keep scenes in their local frame (no random rotation/shift)");
  c_gen->add_option("--prefix", gen.prefix, "Scenario id prefix")->capture_default_str();
  c_gen->add_option("--out", gen.out, "Output dataset directory")->required();

  TrainArgs tr;
  auto* c_train = app.add_subcommand("train", "Train one model and write a checkpoint plus loss curve");
  c_train->add_option("--config", tr.config, "Experiment config JSON");
  c_train->add_option("--dataset", tr.dataset, "Training dataset directory");
  c_train->add_option("--checkpoint", tr.checkpoint, "Checkpoint to write");
  c_train->add_option("--curve", tr.curve, "Loss curve CSV (default: curve.csv next to the checkpoint)");
  c_train->add_option("--resume", tr.resume, "Continue from this checkpoint; epochs count on from its epoch");
  c_train->add_option("--seed", tr.seed, "Initialization and shuffling seed");
  add_model_flags(c_train, tr.model);
  add_train_flags(c_train, tr.train);

  PredictArgs pr;
  auto* c_pred = app.add_subcommand("predict", "Write six-mode forecasts for every scenario of a dataset");
  c_pred->add_option("--checkpoint", pr.checkpoint, "Trained checkpoint");
  c_pred->add_option("--dataset", pr.dataset, "Dataset directory");
  c_pred->add_option("--config", pr.config, "Experiment config; its model section must match the checkpoint");
  c_pred->add_option("--out", pr.out, "Forecast JSON Lines output")->required();
  c_pred->add_flag("--constant-velocity", pr.constant_velocity, "Emit the constant-velocity baseline instead");

  EvalArgs ev;
  auto* c_eval = app.add_subcommand("eval", "Score forecasts against a dataset");
  c_eval->add_option("--dataset", ev.dataset, "Dataset directory with ground-truth futures")->required();
  c_eval->add_option("--forecasts", ev.forecasts, "Forecast JSON Lines file")->required();
  c_eval->add_option("--name", ev.name, "Row label in the table")->capture_default_str();
  c_eval->add_option("--json", ev.json_out, "Also write the report as JSON");

  EnsembleArgs en;
  auto* c_ens = app.add_subcommand("ensemble", "Fuse forecast files from several models");
  c_ens->add_option("--forecasts", en.forecasts, "Forecast files, one per model")->required()->expected(1, -1);
  c_ens->add_option("--method", en.method, "none, hungarian (alias bipartite) or kmeans")->capture_default_str();
  c_ens->add_option("--weights", en.weights, "Per-model weights (default uniform)")->expected(1, -1);
  c_ens->add_option("--seed", en.seed, "k-means seeding seed")->capture_default_str();
  c_ens->add_option("--fuse-traj", en.fuse_traj, "Trajectory per fused mode: average or select")
      ->check(CLI::IsMember({"average", "select"}))
      ->capture_default_str();
  c_ens->add_option("--out", en.out, "Fused forecast output");
  c_ens->add_option("--dataset", en.dataset, "Evaluate the fused forecasts on this dataset");
  c_ens->add_option("--json", en.json_out, "Also write the evaluation as JSON");

  AblateArgs ab;
  auto* c_abl = app.add_subcommand("ablate", "Train all heads and ensemble members; emit comparison tables");
  c_abl->add_option("--config", ab.config, "Experiment config JSON");
  c_abl->add_option("--dataset", ab.dataset, "Training dataset directory");
  c_abl->add_option("--val-dataset", ab.val_dataset, "Validation dataset directory");
  c_abl->add_option("--out", ab.out, "Output directory for checkpoints, forecasts and tables");
  c_abl->add_option("--seed", ab.seed, "Seed of the head comparison");
  c_abl->add_option("--seeds", ab.seeds, "Ensemble member seeds")->expected(1, -1);
  add_model_flags(c_abl, ab.model);
  add_train_flags(c_abl, ab.train);

  PlotArgs pl;
  auto* c_plot = app.add_subcommand("plot", "Render a scenario, its goal heatmap and forecast modes as SVG");
  c_plot->add_option("--scenario", pl.scenario, "Scenario JSON file")->required();
  c_plot->add_option("--forecast", pl.forecast, "Forecast JSON Lines file");
  c_plot->add_option("--checkpoint", pl.checkpoint, "Model whose heatmap to draw (default: uniform over candidates)");
  c_plot->add_option("--out", pl.out, "SVG output")->required();

  std::string inspect_path;
  auto* c_insp = app.add_subcommand("inspect", "Print kinematics, lane seeds, paths and goal candidates of a scenario");
  c_insp->add_option("--scenario", inspect_path, "Scenario JSON file")->required();

  std::vector<std::string> rev(args.rbegin(), args.rend());
  try {
    app.parse(rev);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  if (c_gen->parsed()) return guarded([&] { return cmd_gen(gen, out); }, err);
  if (c_train->parsed()) return guarded([&] { return cmd_train(tr, out, err); }, err);
  if (c_pred->parsed()) return guarded([&] { return cmd_predict(pr, out, err); }, err);
  if (c_eval->parsed()) return guarded([&] { return cmd_eval(ev, out); }, err);
  if (c_ens->parsed()) return guarded([&] { return cmd_ensemble(en, out); }, err);
  if (c_abl->parsed()) return guarded([&] { return cmd_ablate(ab, out, err); }, err);
  if (c_plot->parsed()) return guarded([&] { return cmd_plot(pl, out, err); }, err);
  if (c_insp->parsed()) return guarded([&] { return cmd_inspect(inspect_path, out); }, err);
  return kExitUsage;
}

}  // namespace heatcast
