#include "heatcast/encoder.hpp"

#include <algorithm>
#include <stdexcept>

namespace heatcast {

using nlohmann::json;

json EncoderConfig::to_json() const {
  return {{"hidden_dim", hidden_dim},
          {"conv_layers", conv_layers},
          {"gcn_layers", gcn_layers},
          {"rel_hidden", rel_hidden}};
}

EncoderConfig EncoderConfig::from_json(const json& doc) {
  EncoderConfig c;
  c.hidden_dim = doc.value("hidden_dim", c.hidden_dim);
  c.conv_layers = doc.value("conv_layers", c.conv_layers);
  c.gcn_layers = doc.value("gcn_layers", c.gcn_layers);
  c.rel_hidden = doc.value("rel_hidden", c.rel_hidden);
  return c;
}

void validate(const EncoderConfig& c) {
  if (c.hidden_dim < 8) throw std::invalid_argument("encoder hidden_dim must be >= 8");
  if (c.conv_layers < 1 || c.gcn_layers < 1)
    throw std::invalid_argument("encoder layer counts must be >= 1");
  if (c.rel_hidden < 1) throw std::invalid_argument("encoder rel_hidden must be >= 1");
}

void init_encoder(ParamSet& params, const EncoderConfig& c, Rng& rng) {
  validate(c);
  const Eigen::Index d = c.hidden_dim;
  nn::init_linear(params, "enc.hist.embed", 2, d, rng);
  for (int i = 0; i < c.conv_layers; ++i)
    nn::init_linear(params, "enc.hist.conv" + std::to_string(i), 3 * d, d, rng);
  nn::init_linear(params, "enc.lane.embed", kLaneAttributeCount, d, rng);
  for (int i = 0; i < c.gcn_layers; ++i) {
    const std::string p = "enc.lane.gcn" + std::to_string(i);
    nn::init_linear(params, p + ".nbr", d, d, rng);
    params.add_weight(p + ".self", d, d, rng);
  }
  nn::init_attention(params, "enc.fuse.map", d, c.rel_hidden, rng);
  nn::init_attention(params, "enc.fuse.ctx", d, c.rel_hidden, rng);
}

Matrix lane_attributes(const LaneGraph& g) {
  Matrix x(static_cast<Eigen::Index>(g.size()), kLaneAttributeCount);
  for (std::size_t i = 0; i < g.size(); ++i) {
    const LaneNode& n = g.nodes()[i];
    const auto r = static_cast<Eigen::Index>(i);
    x.row(r) << n.direction.x(), n.direction.y(), 0.5 * n.segment_length, n.is_turn ? 1.0 : 0.0,
        n.is_intersection ? 1.0 : 0.0, 0.1 * n.speed_limit, nn::kPositionScale * n.position.x(),
        nn::kPositionScale * n.position.y();
  }
  return x;
}

SparseMatrix normalized_adjacency(const LaneGraph& g) {
  const auto n = static_cast<Eigen::Index>(g.size());
  std::vector<std::vector<Eigen::Index>> nbrs(g.size());
  for (std::size_t i = 0; i < g.size(); ++i) {
    nbrs[i].push_back(static_cast<Eigen::Index>(i));
    for (const auto* rel : {&g.successors(i), &g.predecessors(i), &g.lefts(i), &g.rights(i)})
      for (auto j : *rel) {
        nbrs[i].push_back(static_cast<Eigen::Index>(j));
        nbrs[j].push_back(static_cast<Eigen::Index>(i));
      }
  }
  std::vector<Eigen::Triplet<double>> trips;
  for (std::size_t i = 0; i < g.size(); ++i) {
    auto& v = nbrs[i];
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
    const double w = 1.0 / static_cast<double>(v.size());
    for (auto j : v) trips.emplace_back(static_cast<Eigen::Index>(i), j, w);
  }
  SparseMatrix a(n, n);
  a.setFromTriplets(trips.begin(), trips.end());
  return a;
}

Tensor encode_history(const ParamSet& params, const EncoderConfig& c, const MotionVectors& mv) {
  if (mv.rows() != kHistoryLength - 1 || mv.cols() != 2)
    throw DimensionError("encode_history: expected 19 x 2 motion vectors");
  Tensor h = relu(nn::linear(params, "enc.hist.embed", Tensor::constant(Matrix(mv))));
  for (int i = 0; i < c.conv_layers; ++i) {
    const Tensor window = concat_cols({shift_rows(h, 1), h, shift_rows(h, -1)});
    h = relu(nn::linear(params, "enc.hist.conv" + std::to_string(i), window));
  }
  return reduce_max_over_set(h);
}

Tensor encode_lanes(const ParamSet& params, const EncoderConfig& c, const LaneGraph& g) {
  if (g.empty()) throw std::invalid_argument("encode_lanes: empty lane graph");
  const SparseMatrix a = normalized_adjacency(g);
  Tensor h = relu(nn::linear(params, "enc.lane.embed", Tensor::constant(lane_attributes(g))));
  for (int i = 0; i < c.gcn_layers; ++i) {
    const std::string p = "enc.lane.gcn" + std::to_string(i);
    h = relu(add(sparse_matmul(a, nn::linear(params, p + ".nbr", h)),
                 matmul(h, params.at(p + ".self"))));
  }
  return h;
}

Tensor fuse(const ParamSet& params, const Tensor& target, const SceneFeatures& s) {
  // Queries sit at the target's position, which is the origin of the normalized frame.
  Tensor t = target;
  if (s.lanes.defined() && s.lanes.rows() > 0)
    t = add(t, reshape(nn::attend(params, "enc.fuse.map", t, s.lanes, s.lane_positions).output,
                       t.shape()));
  if (s.context.defined() && s.context.rows() > 0)
    t = add(t, reshape(nn::attend(params, "enc.fuse.ctx", t, s.context, s.context_positions).output,
                       t.shape()));
  return t;
}

SceneFeatures encode_scene(const ParamSet& params, const EncoderConfig& c, const Scenario& s) {
  SceneFeatures f;
  const Tensor target = encode_history(params, c, discretize(s.target));
  if (!s.lane_graph.empty()) {
    f.lanes = encode_lanes(params, c, s.lane_graph);
    f.lane_positions.resize(static_cast<Eigen::Index>(s.lane_graph.size()), 2);
    for (std::size_t i = 0; i < s.lane_graph.size(); ++i)
      f.lane_positions.row(static_cast<Eigen::Index>(i)) =
          s.lane_graph.nodes()[i].position.transpose();
  }
  if (!s.context.empty()) {
    std::vector<Tensor> rows;
    f.context_positions.resize(static_cast<Eigen::Index>(s.context.size()), 2);
    for (std::size_t i = 0; i < s.context.size(); ++i) {
      rows.push_back(reshape(encode_history(params, c, discretize(s.context[i])),
                             {1, c.hidden_dim}));
      f.context_positions.row(static_cast<Eigen::Index>(i)) = s.context[i].current().transpose();
    }
    f.context = concat_rows(rows);
  }
  f.target = fuse(params, target, f);
  return f;
}

}  // namespace heatcast
