#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <cmath>
#include <numbers>

namespace baseplace {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;

/// Wraps an angle to (-pi, pi].
inline double normalize_angle(double a) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  a = std::fmod(a, two_pi);
  if (a <= -std::numbers::pi) a += two_pi;
  if (a > std::numbers::pi) a -= two_pi;
  return a;
}

/// Absolute angular difference in [0, pi].
inline double angle_between(double a, double b) { return std::abs(normalize_angle(a - b)); }

/// Unsigned angle between two planar vectors, in [0, pi].
inline double angle_between(const Vec2& u, const Vec2& v) {
  double cross = u.x() * v.y() - u.y() * v.x();
  return std::abs(std::atan2(cross, u.dot(v)));
}

inline double bearing(const Vec2& v) { return std::atan2(v.y(), v.x()); }

inline Vec2 unit_at(double theta) { return {std::cos(theta), std::sin(theta)}; }

inline constexpr double deg(double d) { return d * std::numbers::pi / 180.0; }

/// True when `p` lies within `half_angle` of `direction` as seen from
/// `apex`.  The apex itself counts as inside.
inline bool within_sector(const Vec2& p, const Vec2& apex, const Vec2& direction, double half_angle) {
  Vec2 v = p - apex;
  if (v.squaredNorm() == 0.0) return true;
  return angle_between(v, direction) <= half_angle + 1e-12;
}

/// Planar robot pose: position in meters, heading CCW from world +x.
struct Pose2D {
  double x = 0.0;
  double y = 0.0;
  double theta = 0.0;

  Pose2D() = default;
  Pose2D(double x_, double y_, double theta_) : x(x_), y(y_), theta(normalize_angle(theta_)) {}
  Pose2D(const Vec2& p, double theta_) : Pose2D(p.x(), p.y(), theta_) {}

  Vec2 position() const { return {x, y}; }

  /// World point -> robot-aligned frame (+x forward).
  Vec2 to_local(const Vec2& world) const {
    Vec2 d = world - position();
    double c = std::cos(theta), s = std::sin(theta);
    return {c * d.x() + s * d.y(), -s * d.x() + c * d.y()};
  }

  Vec2 to_world(const Vec2& local) const {
    double c = std::cos(theta), s = std::sin(theta);
    return {x + c * local.x() - s * local.y(), y + s * local.x() + c * local.y()};
  }

  friend bool operator==(const Pose2D&, const Pose2D&) = default;
};

/// Pose at `p` facing `target`.
inline Pose2D facing(const Vec2& p, const Vec2& target) {
  Vec2 d = target - p;
  double th = d.squaredNorm() > 0.0 ? bearing(d) : 0.0;
  return Pose2D(p, th);
}

}  // namespace baseplace
