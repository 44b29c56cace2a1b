#pragma once

#include "heatcast/tensor.hpp"

#include <json.hpp>

#include <map>
#include <string>

namespace heatcast {

class Rng;

/// Named trainable tensors, iterated in lexicographic name order.
class ParamSet {
 public:
  using Map = std::map<std::string, Tensor>;

  /// Registers a parameter; throws if the name is taken.
  Tensor& add(const std::string& name, Matrix values, Shape shape);
  /// Glorot-uniform weight matrix [fan_in x fan_out].
  Tensor& add_weight(const std::string& name, Eigen::Index fan_in, Eigen::Index fan_out, Rng& rng);
  Tensor& add_bias(const std::string& name, Eigen::Index n);

  const Tensor& at(const std::string& name) const;
  bool contains(const std::string& name) const { return params_.count(name) > 0; }
  std::size_t size() const { return params_.size(); }
  std::size_t scalar_count() const;

  Map::const_iterator begin() const { return params_.begin(); }
  Map::const_iterator end() const { return params_.end(); }

  void zero_grad();
  void fill(double v);

  /// Deep copy: new nodes with copied values and zeroed grads.
  ParamSet clone() const;

  bool values_equal(const ParamSet& other) const;

  /// {name: {shape: [...], data: [...]}} with keys in sorted order.
  nlohmann::json to_json() const;
  static ParamSet from_json(const nlohmann::json& doc);

 private:
  Map params_;
};

}  // namespace heatcast
