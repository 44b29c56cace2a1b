#include "heatcast/ensemble.hpp"

#include "heatcast/rng.hpp"

#include <algorithm>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace heatcast {

double weighted_sse(const Points& points, const std::vector<double>& weights,
                    const Points& centers, const std::vector<std::size_t>& labels) {
  double sse = 0.0;
  for (Eigen::Index i = 0; i < points.rows(); ++i) {
    const auto u = static_cast<std::size_t>(i);
    sse += weights[u] * (points.row(i) - centers.row(static_cast<Eigen::Index>(labels[u]))).squaredNorm();
  }
  return sse;
}

namespace {

std::size_t nearest_center(const Points& centers, const Eigen::RowVector2d& p, double* dist2 = nullptr) {
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (Eigen::Index c = 0; c < centers.rows(); ++c) {
    const double d = (centers.row(c) - p).squaredNorm();
    if (d < best_d) {
      best_d = d;
      best = static_cast<std::size_t>(c);
    }
  }
  if (dist2) *dist2 = best_d;
  return best;
}

std::size_t sample_index(const std::vector<double>& mass, Rng& rng) {
  const double total = std::accumulate(mass.begin(), mass.end(), 0.0);
  double u = rng.uniform() * total;
  std::size_t last_positive = 0;
  for (std::size_t i = 0; i < mass.size(); ++i) {
    if (mass[i] <= 0.0) continue;
    last_positive = i;
    if (u < mass[i]) return i;
    u -= mass[i];
  }
  return last_positive;
}

}  // namespace

KMeansResult weighted_kmeans(const Points& points, const std::vector<double>& weights_in,
                             std::size_t k, std::uint64_t seed) {
  const auto n = static_cast<std::size_t>(points.rows());
  if (n == 0 || k == 0) throw std::invalid_argument("weighted_kmeans: need points and k >= 1");
  if (weights_in.size() != n) throw std::invalid_argument("weighted_kmeans: weight count mismatch");
  std::vector<double> w = weights_in;
  for (double x : w)
    if (!(x >= 0.0)) throw std::invalid_argument("weighted_kmeans: weights must be non-negative");
  if (std::accumulate(w.begin(), w.end(), 0.0) <= 0.0) std::fill(w.begin(), w.end(), 1.0);

  Rng rng(seed);
  KMeansResult r;
  r.centers.resize(static_cast<Eigen::Index>(k), 2);
  std::vector<char> taken(n, 0);
  std::vector<double> d2(n, std::numeric_limits<double>::infinity());
  for (std::size_t c = 0; c < k; ++c) {
    std::vector<double> mass(n);
    for (std::size_t i = 0; i < n; ++i) mass[i] = c == 0 ? w[i] : w[i] * d2[i];
    std::size_t pick;
    if (std::accumulate(mass.begin(), mass.end(), 0.0) > 0.0) {
      pick = sample_index(mass, rng);
    } else {
      // Every remaining point coincides with a center: take the first unused one.
      pick = static_cast<std::size_t>(std::find(taken.begin(), taken.end(), 0) - taken.begin());
      if (pick == n) pick = c % n;
    }
    taken[pick] = 1;
    r.centers.row(static_cast<Eigen::Index>(c)) = points.row(static_cast<Eigen::Index>(pick));
    for (std::size_t i = 0; i < n; ++i)
      d2[i] = std::min(d2[i], (points.row(static_cast<Eigen::Index>(i)) -
                               r.centers.row(static_cast<Eigen::Index>(c))).squaredNorm());
  }

  r.labels.assign(n, 0);
  auto assign = [&] {
    for (std::size_t i = 0; i < n; ++i)
      r.labels[i] = nearest_center(r.centers, points.row(static_cast<Eigen::Index>(i)));
  };
  assign();
  r.sse_history.push_back(weighted_sse(points, w, r.centers, r.labels));

  for (int it = 0; it < 100; ++it) {
    Points next = Points::Zero(static_cast<Eigen::Index>(k), 2);
    std::vector<double> mass(k, 0.0);
    std::vector<std::size_t> count(k, 0);
    for (std::size_t i = 0; i < n; ++i) {
      mass[r.labels[i]] += w[i];
      ++count[r.labels[i]];
      next.row(static_cast<Eigen::Index>(r.labels[i])) += w[i] * points.row(static_cast<Eigen::Index>(i));
    }
    for (std::size_t c = 0; c < k; ++c) {
      const auto ci = static_cast<Eigen::Index>(c);
      if (mass[c] > 0.0) {
        next.row(ci) /= mass[c];
      } else if (count[c] > 0) {
        next.row(ci).setZero();
        for (std::size_t i = 0; i < n; ++i)
          if (r.labels[i] == c) next.row(ci) += points.row(static_cast<Eigen::Index>(i));
        next.row(ci) /= static_cast<double>(count[c]);
      } else {
        next.row(ci) = r.centers.row(ci);
      }
    }
    // Empty clusters move to the point farthest from its nearest center.
    for (std::size_t c = 0; c < k; ++c) {
      if (count[c] > 0) continue;
      std::size_t far = 0;
      double far_d = -1.0;
      for (std::size_t i = 0; i < n; ++i) {
        double d;
        nearest_center(next, points.row(static_cast<Eigen::Index>(i)), &d);
        if (d > far_d) {
          far_d = d;
          far = i;
        }
      }
      next.row(static_cast<Eigen::Index>(c)) = points.row(static_cast<Eigen::Index>(far));
    }
    const double shift = (next - r.centers).rowwise().norm().maxCoeff();
    r.centers = next;
    r.sse_history.push_back(weighted_sse(points, w, r.centers, r.labels));
    assign();
    r.sse_history.push_back(weighted_sse(points, w, r.centers, r.labels));
    r.iterations = it + 1;
    if (shift < 1e-9) break;
  }
  return r;
}

std::vector<std::size_t> solve_assignment(const Eigen::MatrixXd& cost) {
  // Shortest augmenting path with row/column potentials, O(n^2 m).
  const auto n = static_cast<std::size_t>(cost.rows());
  const auto m = static_cast<std::size_t>(cost.cols());
  if (n > m) throw std::invalid_argument("solve_assignment: more rows than columns");
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(m + 1, 0.0);
  std::vector<std::size_t> p(m + 1, 0), way(m + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    p[0] = i;
    std::size_t j0 = 0;
    std::vector<double> minv(m + 1, inf);
    std::vector<char> used(m + 1, 0);
    do {
      used[j0] = 1;
      const std::size_t i0 = p[j0];
      double delta = inf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= m; ++j) {
        if (used[j]) continue;
        const double cur = cost(static_cast<Eigen::Index>(i0 - 1), static_cast<Eigen::Index>(j - 1)) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= m; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<std::size_t> out(n, 0);
  for (std::size_t j = 1; j <= m; ++j)
    if (p[j] != 0) out[p[j] - 1] = j - 1;
  return out;
}

namespace {

std::vector<double> checked_weights(const std::vector<Forecast>& fs, const FusionOptions& o) {
  if (fs.empty()) throw std::invalid_argument("fusion needs at least one forecast");
  const std::size_t modes = fs.front().modes.size();
  if (modes == 0) throw std::invalid_argument("fusion: forecast without modes");
  for (const auto& f : fs) {
    if (f.scenario_id != fs.front().scenario_id)
      throw std::invalid_argument("fusion: mixed scenario ids " + fs.front().scenario_id + " and " +
                                  f.scenario_id);
    if (f.modes.size() != modes) throw std::invalid_argument("fusion: mode counts differ");
  }
  std::vector<double> w = o.model_weights;
  if (w.empty()) w.assign(fs.size(), 1.0);
  if (w.size() != fs.size())
    throw std::invalid_argument("fusion: " + std::to_string(w.size()) + " weights for " +
                                std::to_string(fs.size()) + " models");
  double total = 0.0;
  for (double x : w) {
    if (!(x >= 0.0)) throw std::invalid_argument("fusion: model weights must be non-negative");
    total += x;
  }
  if (!(total > 0.0)) throw std::invalid_argument("fusion: model weights sum to zero");
  return w;
}

Vec2 endpoint(const Mode& m) { return m.trajectory.row(m.trajectory.rows() - 1).transpose(); }

// Lexicographic order over probabilities then trajectory values; makes the
// fused result independent of the order models are listed in.
bool model_less(const Forecast& a, const Forecast& b) {
  for (std::size_t i = 0; i < a.modes.size(); ++i) {
    if (a.modes[i].probability != b.modes[i].probability)
      return a.modes[i].probability < b.modes[i].probability;
  }
  for (std::size_t i = 0; i < a.modes.size(); ++i) {
    const auto& x = a.modes[i].trajectory;
    const auto& y = b.modes[i].trajectory;
    for (Eigen::Index r = 0; r < x.rows(); ++r)
      for (Eigen::Index c = 0; c < 2; ++c)
        if (x(r, c) != y(r, c)) return x(r, c) < y(r, c);
  }
  return false;
}

void normalize_probabilities(Forecast& f) {
  double total = 0.0;
  for (const auto& m : f.modes) total += m.probability;
  if (total > 0.0) {
    for (auto& m : f.modes) m.probability /= total;
  } else {
    for (auto& m : f.modes) m.probability = 1.0 / static_cast<double>(f.modes.size());
  }
}

}  // namespace

Forecast kmeans_fuse(const std::vector<Forecast>& in, const FusionOptions& o) {
  const std::vector<double> w_in = checked_weights(in, o);
  if (in.size() == 1) {
    Forecast f = in.front();
    sort_modes(f);
    return f;
  }
  std::vector<std::size_t> order(in.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return model_less(in[a], in[b]); });

  struct Member {
    const Mode* mode;
    double weight;
  };
  std::vector<Member> members;
  for (auto m : order)
    for (const auto& mode : in[m].modes) members.push_back({&mode, mode.probability * w_in[m]});
  Points pts(static_cast<Eigen::Index>(members.size()), 2);
  std::vector<double> weights;
  for (std::size_t i = 0; i < members.size(); ++i) {
    pts.row(static_cast<Eigen::Index>(i)) = endpoint(*members[i].mode).transpose();
    weights.push_back(members[i].weight);
  }
  const KMeansResult km = weighted_kmeans(pts, weights, o.clusters, o.seed);

  Forecast out;
  out.scenario_id = in.front().scenario_id;
  const Eigen::Index steps = in.front().modes.front().trajectory.rows();
  for (std::size_t c = 0; c < o.clusters; ++c) {
    std::vector<std::size_t> idx;
    double mass = 0.0;
    for (std::size_t i = 0; i < members.size(); ++i)
      if (km.labels[i] == c) {
        idx.push_back(i);
        mass += members[i].weight;
      }
    Mode mode;
    if (idx.empty()) {
      // Fewer distinct endpoints than clusters: repeat the heaviest member at zero probability.
      const auto heavy = static_cast<std::size_t>(
          std::max_element(weights.begin(), weights.end()) - weights.begin());
      mode.trajectory = members[heavy].mode->trajectory;
      mode.probability = 0.0;
      out.modes.push_back(std::move(mode));
      continue;
    }
    const Vec2 center = km.centers.row(static_cast<Eigen::Index>(c)).transpose();
    if (o.trajectories == TrajectoryFusion::select) {
      std::size_t best = idx.front();
      for (auto i : idx)
        if ((endpoint(*members[i].mode) - center).norm() < (endpoint(*members[best].mode) - center).norm())
          best = i;
      mode.trajectory = members[best].mode->trajectory;
    } else {
      mode.trajectory = Points::Zero(steps, 2);
      for (auto i : idx)
        mode.trajectory += (mass > 0.0 ? members[i].weight / mass : 1.0 / static_cast<double>(idx.size())) *
                           members[i].mode->trajectory;
    }
    mode.probability = mass;
    out.modes.push_back(std::move(mode));
  }
  normalize_probabilities(out);
  sort_modes(out);
  return out;
}

Forecast hungarian_fuse(const std::vector<Forecast>& in, const FusionOptions& o) {
  const std::vector<double> w = checked_weights(in, o);
  if (in.size() == 1) {
    Forecast f = in.front();
    sort_modes(f);
    return f;
  }
  const Forecast& ref = in.front();
  const std::size_t k = ref.modes.size();
  Forecast out;
  out.scenario_id = ref.scenario_id;
  for (const auto& m : ref.modes) out.modes.push_back({w[0] * m.trajectory, w[0] * m.probability});
  double total_w = w[0];
  for (std::size_t mi = 1; mi < in.size(); ++mi) {
    Eigen::MatrixXd cost(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(k));
    for (std::size_t i = 0; i < k; ++i)
      for (std::size_t j = 0; j < k; ++j)
        cost(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
            (endpoint(ref.modes[i]) - endpoint(in[mi].modes[j])).norm();
    const auto match = solve_assignment(cost);
    for (std::size_t i = 0; i < k; ++i) {
      out.modes[i].trajectory += w[mi] * in[mi].modes[match[i]].trajectory;
      out.modes[i].probability += w[mi] * in[mi].modes[match[i]].probability;
    }
    total_w += w[mi];
  }
  for (auto& m : out.modes) {
    m.trajectory /= total_w;
    m.probability /= total_w;
  }
  normalize_probabilities(out);
  sort_modes(out);
  return out;
}

}  // namespace heatcast
