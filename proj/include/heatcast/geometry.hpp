#pragma once

#include "heatcast/scene.hpp"

#include <Eigen/Core>

#include <cmath>
#include <vector>

namespace heatcast {

inline Eigen::Matrix2d rotation(double theta) {
  Eigen::Matrix2d r;
  r << std::cos(theta), -std::sin(theta), std::sin(theta), std::cos(theta);
  return r;
}

/// Rotation whose first column is `heading` (unit), i.e. maps +x onto heading.
inline Eigen::Matrix2d rotation_to(const Vec2& heading) {
  Eigen::Matrix2d r;
  r << heading.x(), -heading.y(), heading.y(), heading.x();
  return r;
}

inline double cross(const Vec2& a, const Vec2& b) { return a.x() * b.y() - a.y() * b.x(); }

/// Applies p -> A p + t to every row.
template <typename Derived>
Points transform_points(const Eigen::MatrixBase<Derived>& pts, const Eigen::Matrix2d& linear,
                        const Vec2& translation) {
  Points out = pts * linear.transpose();
  out.rowwise() += translation.transpose();
  return out;
}

/// Lane centerline built from straight and circular-arc pieces, evaluated
/// analytically by arclength.
class Centerline {
 public:
  Centerline(const Vec2& start, double heading) : start_(start), start_heading_(heading) {}

  /// Polyline as a chain of straight pieces (zero-length segments skipped).
  static Centerline from_polyline(const Points& polyline);

  Centerline& straight(double length);
  /// sweep > 0 turns left (counter-clockwise).
  Centerline& arc(double radius, double sweep);

  double length() const { return total_; }
  Vec2 point_at(double s) const;
  Vec2 tangent_at(double s) const;
  Vec2 end_point() const { return point_at(total_); }
  double end_heading() const;

  /// Dense polyline sampled every `step` meters, endpoint included.
  Points sample(double step) const;

 private:
  struct Piece {
    Vec2 start;
    double heading;
    double length;
    double curvature;  // signed, 0 for straight
  };
  const Piece& piece_at(double s, double& local) const;
  static Vec2 eval(const Piece& p, double local);

  Vec2 start_;
  double start_heading_;
  std::vector<Piece> pieces_;
  double total_ = 0.0;
};

}  // namespace heatcast
