#include "helpers.hpp"

#include "heatcast/experiment.hpp"
#include "heatcast/synthetic.hpp"

#include <atomic>
#include <fstream>

using namespace heatcast;
namespace fs = std::filesystem;

namespace {

std::vector<Scenario> scenes(int n, std::uint64_t seed) {
  GeneratorConfig g;
  g.n_scenes = n;
  return generate_synthetic(g, seed);
}

ModelConfig small_model(HeadKind head = HeadKind::distribution) {
  ModelConfig c;
  c.encoder.hidden_dim = 8;
  c.encoder.rel_hidden = 4;
  c.head = head;
  return c;
}

}  // namespace

TEST_CASE("experiment config") {
  SUBCASE("relative paths resolve against the config directory") {
    const nlohmann::json doc = {{"dataset", "data/train"},
                                {"val_dataset", "/abs/val"},
                                {"output_dir", "out"},
                                {"seed", 7},
                                {"seeds", {3, 4}},
                                {"model", {{"head", "nms"}, {"encoder", {{"hidden_dim", 16}}}}},
                                {"train", {{"epochs", 2}}},
                                {"ensemble", {{"method", "bipartite"}, {"weights", {1.0, 2.0}}, {"fuse_traj", "select"}}}};
    const auto c = ExperimentConfig::from_json(doc, "/cfg/dir");
    CHECK(c.dataset == fs::path("/cfg/dir/data/train"));
    CHECK(c.val_dataset == fs::path("/abs/val"));
    CHECK(c.output_dir == fs::path("/cfg/dir/out"));
    CHECK(c.model.head == HeadKind::nms);
    CHECK(c.model.encoder.hidden_dim == 16);
    CHECK(c.train.epochs == 2);
    CHECK(c.train.seed == 7);
    CHECK(c.seeds == std::vector<std::uint64_t>{3, 4});
    CHECK(c.ensemble.method == FusionMethod::hungarian);
    CHECK(c.ensemble.trajectories == TrajectoryFusion::select);
    CHECK(c.ensemble.weights == std::vector<double>{1.0, 2.0});
    const auto back = ExperimentConfig::from_json(c.to_json());
    CHECK(back.to_json() == c.to_json());
  }
  SUBCASE("an explicit train seed wins over the top-level seed") {
    const auto c = ExperimentConfig::from_json({{"seed", 7}, {"train", {{"seed", 2}}}});
    CHECK(c.train.seed == 2);
  }
  SUBCASE("invalid values") {
    CHECK_THROWS_AS(ExperimentConfig::from_json({{"seeds", nlohmann::json::array()}}), std::invalid_argument);
    CHECK_THROWS_AS(ExperimentConfig::from_json({{"train", {{"epochs", 0}}}}), std::invalid_argument);
    CHECK_THROWS_AS(ExperimentConfig::from_json({{"ensemble", {{"method", "vote"}}}}), std::invalid_argument);
    CHECK_THROWS_AS(ExperimentConfig::from_json({{"ensemble", {{"fuse_traj", "max"}}}}), std::invalid_argument);
    CHECK_THROWS_AS(ExperimentConfig::from_json(nlohmann::json::array()), std::invalid_argument);
  }
  SUBCASE("files") {
    const auto dir = test::scratch_dir("expcfg");
    std::ofstream(dir / "bad.json") << "{ \"seed\": ";
    CHECK_THROWS_AS(load_experiment_config(dir / "bad.json"), ParseError);
    CHECK_THROWS_AS(load_experiment_config(dir / "missing.json"), IoError);
    std::ofstream(dir / "ok.json") << R"({"dataset": "d"})";
    CHECK(load_experiment_config(dir / "ok.json").dataset == dir / "d");
  }
  CHECK(fusion_method_from_string("kmeans") == FusionMethod::kmeans);
  CHECK(std::string(to_string(FusionMethod::hungarian)) == "bipartite");
}

TEST_CASE("parallel_for") {
  for (unsigned workers : {1u, 2u, 5u}) {
    std::vector<std::atomic<int>> hits(37);
    parallel_for(hits.size(), workers, [&](std::size_t i) { ++hits[i]; });
    for (const auto& h : hits) CHECK(h.load() == 1);
  }
  CHECK_THROWS_AS(parallel_for(10, 3,
                               [](std::size_t i) {
                                 if (i == 7) throw std::runtime_error("boom");
                               }),
                  std::runtime_error);
  parallel_for(0, 4, [](std::size_t) { FAIL("no work expected"); });
}

TEST_CASE("predictions do not depend on the worker count") {
  const auto data = scenes(9, 14);
  const Model m = init_model(small_model(), 3);
  const auto one = predict_all(m, data, 1);
  const auto three = predict_all(m, data, 3);
  REQUIRE(one.size() == data.size());
  for (std::size_t i = 0; i < data.size(); ++i) CHECK(one[i].scenario_id == data[i].id);
  CHECK(forecasts_to_jsonl(one) == forecasts_to_jsonl(three));
  const auto cv = constant_velocity_all(data);
  for (const auto& f : cv) CHECK(validate_forecast(f).empty());
}

TEST_CASE("fuse_all") {
  const auto data = scenes(4, 2);
  const auto a = predict_all(init_model(small_model(), 1), data);
  const auto b = predict_all(init_model(small_model(), 2), data);
  EnsembleSettings s;
  SUBCASE("none returns the first list") {
    s.method = FusionMethod::none;
    CHECK(forecasts_to_jsonl(fuse_all({a, b}, s)) == forecasts_to_jsonl(a));
  }
  SUBCASE("fused lists keep ids and validity") {
    for (FusionMethod m : {FusionMethod::hungarian, FusionMethod::kmeans}) {
      s.method = m;
      const auto out = fuse_all({a, std::vector<Forecast>(b.rbegin(), b.rend())}, s);
      REQUIRE(out.size() == a.size());
      for (std::size_t i = 0; i < out.size(); ++i) {
        CHECK(out[i].scenario_id == a[i].scenario_id);
        CHECK(validate_forecast(out[i]).empty());
      }
    }
  }
  SUBCASE("id mismatches") {
    auto short_b = b;
    short_b.pop_back();
    CHECK_THROWS_AS(fuse_all({a, short_b}, s), IdMismatchError);
    auto renamed = b;
    renamed[0].scenario_id = "elsewhere";
    CHECK_THROWS_AS(fuse_all({a, renamed}, s), IdMismatchError);
    auto twice = b;
    twice[1].scenario_id = twice[0].scenario_id;
    CHECK_THROWS_AS(fuse_all({a, twice}, s), IdMismatchError);
  }
}

TEST_CASE("ablation runs every head and fusion and writes its artifacts") {
  const auto train_set = scenes(6, 30);
  const auto val_set = scenes(4, 31);
  ExperimentConfig c;
  c.model = small_model();
  c.train.epochs = 1;
  c.train.batch_size = 3;
  c.seeds = {0, 1};
  const auto dir = test::scratch_dir("ablation");
  std::vector<std::string> log;
  const AblationResult r = run_ablation(c, train_set, val_set, dir, [&](const std::string& s) { log.push_back(s); });

  REQUIRE(r.heads.size() == 3);
  CHECK(r.heads[0].method == "direct");
  CHECK(r.heads[1].method == "nms");
  CHECK(r.heads[2].method == "distribution");
  REQUIRE(r.ensemble.size() == 3);
  CHECK(r.ensemble[0].method == "none");
  CHECK(r.members.size() == 2);
  CHECK(r.train_seconds.size() == 4);
  for (const auto& row : r.heads) CHECK(row.report.count == val_set.size());
  double best_member = 1e300;
  for (const auto& row : r.members) best_member = std::min(best_member, row.report.brier_min_fde);
  CHECK(r.ensemble[0].report.brier_min_fde == best_member);

  CHECK(fs::exists(dir / "distribution_seed0.ckpt.json"));
  CHECK(fs::exists(dir / "distribution_seed1.forecasts.jsonl"));
  CHECK(fs::exists(dir / "ensemble_kmeans.forecasts.jsonl"));
  const auto fused = load_forecasts(dir / "ensemble_kmeans.forecasts.jsonl");
  CHECK(fused.size() == val_set.size());
  CHECK(r.head_table().find("distribution") != std::string::npos);
  CHECK(r.ensemble_table().find("kmeans") != std::string::npos);
  CHECK(r.to_json().contains("heads"));
  CHECK_FALSE(log.empty());
}
