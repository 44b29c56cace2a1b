#include "heatcast/plot.hpp"

#include "heatcast/preprocess.hpp"

#include <algorithm>
#include <cstdio>
#include <limits>
#include <sstream>

namespace heatcast {

std::vector<HeatPoint> model_heatmap(const Model& model, const Scenario& scenario) {
  const auto [local, pose] = normalize(scenario);
  const ForwardPass pass = forward(model, local);
  std::vector<HeatPoint> out;
  for (const auto& c : pass.sorted) out.push_back({pose.to_world(c.candidate.position), c.probability});
  return out;
}

std::vector<HeatPoint> uniform_heatmap(const Scenario& scenario) {
  const auto [local, pose] = normalize(scenario);
  const CandidateSet set = generate_candidates(local);
  std::vector<HeatPoint> out;
  const double p = set.goals.empty() ? 0.0 : 1.0 / static_cast<double>(set.goals.size());
  for (const auto& g : set.goals) out.push_back({pose.to_world(g.position), p});
  return out;
}

namespace {

constexpr double kCanvas = 800.0;
constexpr double kMargin = 20.0;

const char* const kModeColors[] = {"#d62728", "#ff7f0e", "#2ca02c", "#9467bd", "#8c564b", "#e377c2"};

class Frame {
 public:
  explicit Frame(const std::vector<Vec2>& pts) {
    Vec2 lo = Vec2::Constant(std::numeric_limits<double>::infinity());
    Vec2 hi = -lo;
    for (const auto& p : pts) {
      lo = lo.cwiseMin(p);
      hi = hi.cwiseMax(p);
    }
    if (pts.empty()) lo = hi = Vec2::Zero();
    const double span = std::max({hi.x() - lo.x(), hi.y() - lo.y(), 1.0});
    scale_ = (kCanvas - 2 * kMargin) / span;
    lo_ = lo;
    hi_ = hi;
  }

  // SVG y grows downwards.
  std::string xy(const Vec2& p) const {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.2f,%.2f", kMargin + (p.x() - lo_.x()) * scale_,
                  kMargin + (hi_.y() - p.y()) * scale_);
    return buf;
  }
  std::string attr(const Vec2& p, const char* xn, const char* yn) const {
    char buf[96];
    std::snprintf(buf, sizeof buf, "%s=\"%.2f\" %s=\"%.2f\"", xn, kMargin + (p.x() - lo_.x()) * scale_,
                  yn, kMargin + (hi_.y() - p.y()) * scale_);
    return buf;
  }
  double width() const { return 2 * kMargin + (hi_.x() - lo_.x()) * scale_; }
  double height() const { return 2 * kMargin + (hi_.y() - lo_.y()) * scale_; }

 private:
  Vec2 lo_, hi_;
  double scale_ = 1.0;
};

std::string polyline(const Frame& f, const Points& pts, const std::string& cls, const char* color) {
  std::string s = "<polyline class=\"" + cls + "\" fill=\"none\" stroke=\"" + color + "\" points=\"";
  for (Eigen::Index i = 0; i < pts.rows(); ++i) {
    if (i) s += ' ';
    s += f.xy(pts.row(i).transpose());
  }
  return s + "\"/>\n";
}

std::string fmt(const char* pattern, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, pattern, v);
  return buf;
}

}  // namespace

std::string render_svg(const Scenario& scenario, const Forecast* forecast,
                       const std::vector<HeatPoint>& heatmap) {
  std::vector<Vec2> extent;
  for (const auto& n : scenario.lane_graph.nodes()) extent.push_back(n.position);
  for (Eigen::Index i = 0; i < scenario.target.history.rows(); ++i)
    extent.push_back(scenario.target.history.row(i).transpose());
  if (scenario.target.future)
    for (Eigen::Index i = 0; i < scenario.target.future->rows(); ++i)
      extent.push_back(scenario.target.future->row(i).transpose());
  for (const auto& h : heatmap) extent.push_back(h.position);
  if (forecast)
    for (const auto& m : forecast->modes)
      for (Eigen::Index i = 0; i < m.trajectory.rows(); ++i) extent.push_back(m.trajectory.row(i).transpose());
  const Frame f(extent);

  std::ostringstream svg;
  svg << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
      << "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"" << fmt("%.0f", f.width())
      << "\" height=\"" << fmt("%.0f", f.height()) << "\">\n"
      << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";

  const LaneGraph& g = scenario.lane_graph;
  svg << "<g class=\"lanes\" stroke=\"#bbbbbb\" stroke-width=\"2\">\n";
  for (std::size_t i = 0; i < g.size(); ++i)
    for (std::size_t j : g.successors(i))
      svg << "<line class=\"lane\" " << f.attr(g.nodes()[i].position, "x1", "y1") << ' '
          << f.attr(g.nodes()[j].position, "x2", "y2") << "/>\n";
  svg << "</g>\n";

  double pmax = 0.0;
  for (const auto& h : heatmap) pmax = std::max(pmax, h.probability);
  svg << "<g class=\"heatmap\" fill=\"#1f77b4\">\n";
  for (const auto& h : heatmap) {
    const double opacity = pmax > 0.0 ? 0.05 + 0.95 * h.probability / pmax : 0.05;
    svg << "<circle class=\"candidate\" " << f.attr(h.position, "cx", "cy") << " r=\"3\" fill-opacity=\""
        << fmt("%.3f", opacity) << "\"><title>" << fmt("%.6f", h.probability) << "</title></circle>\n";
  }
  svg << "</g>\n";

  svg << polyline(f, scenario.target.history, "history", "#000000");
  if (scenario.target.future) svg << polyline(f, *scenario.target.future, "ground-truth", "#17becf");

  if (forecast) {
    svg << "<g class=\"modes\" stroke-width=\"2\">\n";
    for (std::size_t k = 0; k < forecast->modes.size(); ++k) {
      const Mode& m = forecast->modes[k];
      const char* color = kModeColors[k % std::size(kModeColors)];
      svg << polyline(f, m.trajectory, "mode", color);
      const Vec2 end = m.trajectory.row(m.trajectory.rows() - 1).transpose();
      svg << "<text class=\"mode-label\" " << f.attr(end, "x", "y") << " font-size=\"11\" fill=\"" << color
          << "\">" << fmt("%.2f", m.probability) << "</text>\n";
    }
    svg << "</g>\n";
  }
  svg << "</svg>\n";
  return svg.str();
}

}  // namespace heatcast
