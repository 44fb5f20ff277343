#pragma once

#include <algorithm>
#include <cmath>

namespace ahand {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  Vec2() = default;
  Vec2(double x_, double y_) : x(x_), y(y_) {}

  Vec2 operator+(const Vec2& o) const { return {x + o.x, y + o.y}; }
  Vec2 operator-(const Vec2& o) const { return {x - o.x, y - o.y}; }
  Vec2 operator*(double s) const { return {x * s, y * s}; }
  Vec2 operator-() const { return {-x, -y}; }
  Vec2& operator+=(const Vec2& o) {
    x += o.x;
    y += o.y;
    return *this;
  }
  Vec2& operator-=(const Vec2& o) {
    x -= o.x;
    y -= o.y;
    return *this;
  }

  double dot(const Vec2& o) const { return x * o.x + y * o.y; }
  double cross(const Vec2& o) const { return x * o.y - y * o.x; }
  double norm() const { return std::sqrt(x * x + y * y); }
  double norm2() const { return x * x + y * y; }
  // 90 degree CCW rotation
  Vec2 perp() const { return {-y, x}; }
};

inline Vec2 operator*(double s, const Vec2& v) { return {s * v.x, s * v.y}; }

inline Vec2 dir(double angle) { return {std::cos(angle), std::sin(angle)}; }

// planar rotation of v by angle
inline Vec2 rotate(const Vec2& v, double angle) {
  const double c = std::cos(angle), s = std::sin(angle);
  return {c * v.x - s * v.y, s * v.x + c * v.y};
}

// wrap angle to (-pi, pi]
inline double wrap_angle(double a) {
  const double two_pi = 6.283185307179586476925286766559;
  a = std::fmod(a, two_pi);
  if (a > 3.14159265358979323846) a -= two_pi;
  if (a <= -3.14159265358979323846) a += two_pi;
  return a;
}

// closest point on segment [a, b] to p; returns the parameter t in [0,1]
inline double closest_param_on_segment(const Vec2& p, const Vec2& a, const Vec2& b) {
  const Vec2 ab = b - a;
  const double len2 = ab.norm2();
  if (len2 <= 0.0) return 0.0;
  return std::clamp((p - a).dot(ab) / len2, 0.0, 1.0);
}

struct Pose2 {
  Vec2 pos;
  double ang = 0.0;

  Vec2 apply(const Vec2& local) const { return pos + rotate(local, ang); }
  Vec2 apply_dir(const Vec2& local) const { return rotate(local, ang); }
  Vec2 inv_apply(const Vec2& world) const { return rotate(world - pos, -ang); }
};

}  // namespace ahand
