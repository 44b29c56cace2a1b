#pragma once

#include "heatcast/grad_check.hpp"
#include "heatcast/ops.hpp"
#include "heatcast/rng.hpp"
#include "heatcast/scene.hpp"

#include <doctest.h>

#include <filesystem>
#include <string>

namespace heatcast::test {

inline Matrix random_matrix(Rng& rng, Eigen::Index r, Eigen::Index c, double scale = 1.0) {
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(-scale, scale);
  return m;
}

/// Scalar probe of a tensor: sum(w * x) with fixed random weights.
inline Tensor probe(const Tensor& x, std::uint64_t seed) {
  Rng rng(seed, 99);
  return sum(mul(x, Tensor::constant(random_matrix(rng, x.rows(), x.cols()), x.shape())));
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto p = std::filesystem::temp_directory_path() / ("heatcast_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

/// Target moving along +x at `speed`, currently at the origin.
inline AgentTrack straight_track(double speed) {
  AgentTrack t;
  t.history.resize(kHistoryLength, 2);
  for (int i = 0; i < kHistoryLength; ++i) t.history.row(i) << -speed * 0.1 * (kHistoryLength - 1 - i), 0.0;
  Points f(kFutureLength, 2);
  for (int i = 0; i < kFutureLength; ++i) f.row(i) << speed * 0.1 * (i + 1), 0.0;
  t.future = f;
  return t;
}

/// Lane graph from nodes and successor / left / right edges; predecessors are mirrored.
inline LaneGraph graph_from(std::vector<LaneNode> nodes, std::vector<Edge> succ,
                            std::vector<Edge> left = {}, std::vector<Edge> right = {}) {
  Adjacency a;
  a.successor = succ;
  for (const auto& [x, y] : succ) a.predecessor.emplace_back(y, x);
  a.left = std::move(left);
  a.right = std::move(right);
  return LaneGraph(std::move(nodes), std::move(a));
}

/// Straight chain of `n` nodes along +x starting at `x0`, `spacing` apart, ids from `first_id`.
inline std::vector<LaneNode> chain(int n, double x0, double y, double spacing, int first_id) {
  std::vector<LaneNode> out;
  for (int i = 0; i < n; ++i) {
    LaneNode node;
    node.id = first_id + i;
    node.position = Vec2(x0 + spacing * i, y);
    node.segment_length = spacing;
    out.push_back(node);
  }
  return out;
}

inline std::vector<Edge> chain_edges(int n, int first_id) {
  std::vector<Edge> e;
  for (int i = 0; i + 1 < n; ++i) e.emplace_back(first_id + i, first_id + i + 1);
  return e;
}

inline constexpr double kGradTolerance = 1e-5;

#define CHECK_GRADIENT(result)                             \
  do {                                                     \
    const auto gc_ = (result);                             \
    CHECK(gc_.checked > 0);                                \
    CHECK(gc_.max_rel_error <= ::heatcast::test::kGradTolerance); \
  } while (0)

}  // namespace heatcast::test
