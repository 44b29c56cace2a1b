#include "heatcast/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace heatcast {

Centerline Centerline::from_polyline(const Points& polyline) {
  if (polyline.rows() < 2) throw std::invalid_argument("polyline needs at least two points");
  Centerline c(polyline.row(0).transpose(), 0.0);
  for (Eigen::Index i = 0; i + 1 < polyline.rows(); ++i) {
    const Vec2 a = polyline.row(i).transpose();
    const Vec2 d = polyline.row(i + 1).transpose() - a;
    const double len = d.norm();
    if (len <= 0.0) continue;
    if (c.pieces_.empty()) c.start_heading_ = std::atan2(d.y(), d.x());
    c.pieces_.push_back({a, std::atan2(d.y(), d.x()), len, 0.0});
    c.total_ += len;
  }
  return c;
}

Centerline& Centerline::straight(double length) {
  if (!(length > 0.0)) throw std::invalid_argument("straight piece needs positive length");
  const Vec2 start = pieces_.empty() ? start_ : end_point();
  const double heading = pieces_.empty() ? start_heading_ : end_heading();
  pieces_.push_back({start, heading, length, 0.0});
  total_ += length;
  return *this;
}

Centerline& Centerline::arc(double radius, double sweep) {
  if (!(radius > 0.0) || sweep == 0.0) throw std::invalid_argument("arc needs radius > 0, sweep != 0");
  const Vec2 start = pieces_.empty() ? start_ : end_point();
  const double heading = pieces_.empty() ? start_heading_ : end_heading();
  const double len = radius * std::abs(sweep);
  pieces_.push_back({start, heading, len, (sweep > 0 ? 1.0 : -1.0) / radius});
  total_ += len;
  return *this;
}

const Centerline::Piece& Centerline::piece_at(double s, double& local) const {
  if (pieces_.empty()) throw std::logic_error("empty centerline");
  s = std::clamp(s, 0.0, total_);
  for (const auto& p : pieces_) {
    if (s <= p.length) {
      local = s;
      return p;
    }
    s -= p.length;
  }
  local = pieces_.back().length;
  return pieces_.back();
}

Vec2 Centerline::eval(const Piece& p, double local) {
  if (p.curvature == 0.0) return p.start + local * Vec2(std::cos(p.heading), std::sin(p.heading));
  const double r = 1.0 / p.curvature;  // signed
  const double h1 = p.heading + local * p.curvature;
  return p.start + r * Vec2(std::sin(h1) - std::sin(p.heading), std::cos(p.heading) - std::cos(h1));
}

Vec2 Centerline::point_at(double s) const {
  double local = 0.0;
  const Piece& p = piece_at(s, local);
  return eval(p, local);
}

Vec2 Centerline::tangent_at(double s) const {
  double local = 0.0;
  const Piece& p = piece_at(s, local);
  const double h = p.heading + local * p.curvature;
  return {std::cos(h), std::sin(h)};
}

double Centerline::end_heading() const {
  if (pieces_.empty()) return start_heading_;
  const auto& p = pieces_.back();
  return p.heading + p.length * p.curvature;
}

Points Centerline::sample(double step) const {
  const auto n = static_cast<Eigen::Index>(std::ceil(total_ / step - 1e-9));
  Points out(n + 1, 2);
  for (Eigen::Index i = 0; i < n; ++i) out.row(i) = point_at(static_cast<double>(i) * step).transpose();
  out.row(n) = end_point().transpose();
  return out;
}

}  // namespace heatcast
