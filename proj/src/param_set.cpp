#include "heatcast/param_set.hpp"

#include "heatcast/rng.hpp"

#include <cmath>
#include <stdexcept>

namespace heatcast {

Tensor& ParamSet::add(const std::string& name, Matrix values, Shape shape) {
  auto [it, inserted] = params_.emplace(name, Tensor());
  if (!inserted) throw std::invalid_argument("duplicate parameter name: " + name);
  it->second = Tensor::parameter(std::move(values), std::move(shape));
  return it->second;
}

Tensor& ParamSet::add_weight(const std::string& name, Eigen::Index fan_in, Eigen::Index fan_out,
                             Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  Matrix w(fan_in, fan_out);
  for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = rng.uniform(-limit, limit);
  return add(name, std::move(w), Shape{fan_in, fan_out});
}

Tensor& ParamSet::add_bias(const std::string& name, Eigen::Index n) {
  return add(name, Matrix::Zero(1, n), Shape{n});
}

const Tensor& ParamSet::at(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw std::out_of_range("unknown parameter: " + name);
  return it->second;
}

std::size_t ParamSet::scalar_count() const {
  std::size_t n = 0;
  for (const auto& [name, t] : params_) n += static_cast<std::size_t>(t.size());
  return n;
}

void ParamSet::zero_grad() {
  for (auto& [name, t] : params_) t.zero_grad();
}

void ParamSet::fill(double v) {
  for (auto& [name, t] : params_) t.mutable_value().setConstant(v);
}

ParamSet ParamSet::clone() const {
  ParamSet out;
  for (const auto& [name, t] : params_) out.add(name, t.value(), t.shape());
  return out;
}

bool ParamSet::values_equal(const ParamSet& other) const {
  if (params_.size() != other.params_.size()) return false;
  for (const auto& [name, t] : params_) {
    auto it = other.params_.find(name);
    if (it == other.params_.end() || it->second.shape() != t.shape() ||
        it->second.value() != t.value())
      return false;
  }
  return true;
}

nlohmann::json ParamSet::to_json() const {
  nlohmann::json doc = nlohmann::json::object();
  for (const auto& [name, t] : params_) {
    nlohmann::json shape = nlohmann::json::array();
    for (auto e : t.shape()) shape.push_back(e);
    std::vector<double> data(t.value().data(), t.value().data() + t.size());
    doc[name] = {{"shape", std::move(shape)}, {"data", std::move(data)}};
  }
  return doc;
}

ParamSet ParamSet::from_json(const nlohmann::json& doc) {
  if (!doc.is_object()) throw std::runtime_error("parameter document must be an object");
  ParamSet out;
  for (const auto& [name, entry] : doc.items()) {
    const auto where = "parameter '" + name + "'";
    if (!entry.contains("shape") || !entry.contains("data"))
      throw std::runtime_error(where + ": missing shape or data");
    Shape shape = entry.at("shape").get<Shape>();
    const auto data = entry.at("data").get<std::vector<double>>();
    Eigen::Index rows = shape.size() == 2 ? shape[0] : 1;
    Eigen::Index cols = shape.size() == 2 ? shape[1] : (shape.size() == 1 ? shape[0] : 1);
    if (shape.size() > 2 || rows <= 0 || cols <= 0 ||
        static_cast<Eigen::Index>(data.size()) != rows * cols)
      throw std::runtime_error(where + ": data length does not match shape");
    Matrix values = Eigen::Map<const Matrix>(data.data(), rows, cols);
    out.add(name, std::move(values), std::move(shape));
  }
  return out;
}

}  // namespace heatcast
