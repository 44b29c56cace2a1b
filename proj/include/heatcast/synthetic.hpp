#pragma once

#include "heatcast/scene.hpp"

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace heatcast {

enum class SceneType { straight, curve, fork, merge };

const char* to_string(SceneType t);
SceneType scene_type_from_string(const std::string& s);

struct SceneMix {
  double straight = 0.2;
  double curve = 0.25;
  double fork = 0.4;
  double merge = 0.15;

  std::array<double, 4> fractions() const { return {straight, curve, fork, merge}; }
};

struct GeneratorConfig {
  int n_scenes = 100;
  SceneMix mix;
  double noise_sigma = 0.05;  // m, applied to observed histories only
  double speed_min = 3.0;
  double speed_max = 15.0;
  double accel_min = -1.5;
  double accel_max = 1.5;
  double radius_min = 15.0;
  double radius_max = 80.0;
  int max_context = 4;
  bool random_pose = true;  // random global rotation/translation of each scene
  std::string id_prefix = "scene";

  nlohmann::json to_json() const;
  static GeneratorConfig from_json(const nlohmann::json& doc);
};

/// Throws std::invalid_argument on n_scenes < 1 or a mix that does not sum to one.
void validate(const GeneratorConfig& config);

/// Scene type of item `index`: stratified over the cumulative mix, so each
/// type's count matches its fraction within rounding.
SceneType scene_type_for(const GeneratorConfig& config, int index);

Scenario generate_scene(const GeneratorConfig& config, std::uint64_t seed, int index);

/// Deterministic in (config, seed); scene i draws from stream (seed, i).
std::vector<Scenario> generate_synthetic(const GeneratorConfig& config, std::uint64_t seed);

}  // namespace heatcast
