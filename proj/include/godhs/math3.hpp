#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>

namespace godhs {

inline constexpr double kPi = 3.14159265358979323846;

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  Vec2 operator+(const Vec2& o) const { return {x + o.x, y + o.y}; }
  Vec2 operator-(const Vec2& o) const { return {x - o.x, y - o.y}; }
  Vec2 operator*(double s) const { return {x * s, y * s}; }
  double norm() const { return std::sqrt(x * x + y * y); }
};

inline double distance(const Vec2& a, const Vec2& b) { return (a - b).norm(); }

struct Vec3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
  Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
  Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
  Vec3& operator+=(const Vec3& o) {
    x += o.x;
    y += o.y;
    z += o.z;
    return *this;
  }
  double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
  Vec3 cross(const Vec3& o) const {
    return {y * o.z - z * o.y, z * o.x - x * o.z, x * o.y - y * o.x};
  }
  double norm() const { return std::sqrt(dot(*this)); }
  Vec3 normalized() const {
    const double n = norm();
    return n > 0.0 ? Vec3{x / n, y / n, z / n} : Vec3{};
  }
  Vec2 xy() const { return {x, y}; }
};

inline double distance(const Vec3& a, const Vec3& b) { return (a - b).norm(); }

/// Wraps an angle into (-pi, pi].
inline double normalize_angle(double a) {
  a = std::fmod(a + kPi, 2.0 * kPi);
  if (a <= 0.0) a += 2.0 * kPi;
  return a - kPi;
}

/// Row-major 3x3 matrix, used for rotations.
struct Mat3 {
  std::array<std::array<double, 3>, 3> m{{{1, 0, 0}, {0, 1, 0}, {0, 0, 1}}};

  static Mat3 identity() { return {}; }

  static Mat3 rot_x(double a) {
    Mat3 r;
    const double c = std::cos(a), s = std::sin(a);
    r.m = {{{1, 0, 0}, {0, c, -s}, {0, s, c}}};
    return r;
  }
  static Mat3 rot_y(double a) {
    Mat3 r;
    const double c = std::cos(a), s = std::sin(a);
    r.m = {{{c, 0, s}, {0, 1, 0}, {-s, 0, c}}};
    return r;
  }
  static Mat3 rot_z(double a) {
    Mat3 r;
    const double c = std::cos(a), s = std::sin(a);
    r.m = {{{c, -s, 0}, {s, c, 0}, {0, 0, 1}}};
    return r;
  }

  /// Rodrigues rotation about a unit axis.
  static Mat3 axis_angle(const Vec3& axis, double a) {
    const double c = std::cos(a), s = std::sin(a), t = 1.0 - c;
    const double x = axis.x, y = axis.y, z = axis.z;
    Mat3 r;
    r.m = {{{t * x * x + c, t * x * y - s * z, t * x * z + s * y},
            {t * x * y + s * z, t * y * y + c, t * y * z - s * x},
            {t * x * z - s * y, t * y * z + s * x, t * z * z + c}}};
    return r;
  }

  Mat3 operator*(const Mat3& o) const {
    Mat3 r;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) {
        double s = 0.0;
        for (int k = 0; k < 3; ++k) s += m[i][k] * o.m[k][j];
        r.m[i][j] = s;
      }
    return r;
  }

  Vec3 operator*(const Vec3& v) const {
    return {m[0][0] * v.x + m[0][1] * v.y + m[0][2] * v.z,
            m[1][0] * v.x + m[1][1] * v.y + m[1][2] * v.z,
            m[2][0] * v.x + m[2][1] * v.y + m[2][2] * v.z};
  }

  Mat3 transposed() const {
    Mat3 r;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) r.m[i][j] = m[j][i];
    return r;
  }

  double trace() const { return m[0][0] + m[1][1] + m[2][2]; }

  /// Rotation vector (axis * angle) of this rotation matrix.
  Vec3 log() const {
    const double cos_a = std::clamp((trace() - 1.0) * 0.5, -1.0, 1.0);
    const double a = std::acos(cos_a);
    if (a < 1e-12) return {};
    if (kPi - a < 1e-6) {
      // Near pi the off-diagonal extraction degenerates; recover the axis
      // from the diagonal.
      Vec3 axis{std::sqrt(std::max(0.0, (m[0][0] + 1.0) * 0.5)),
                std::sqrt(std::max(0.0, (m[1][1] + 1.0) * 0.5)),
                std::sqrt(std::max(0.0, (m[2][2] + 1.0) * 0.5))};
      if (m[0][1] + m[1][0] < 0) axis.y = -axis.y;
      if (m[0][2] + m[2][0] < 0) axis.z = -axis.z;
      return axis.normalized() * a;
    }
    const double s = 0.5 / std::sin(a);
    return Vec3{(m[2][1] - m[1][2]) * s, (m[0][2] - m[2][0]) * s,
                (m[1][0] - m[0][1]) * s} *
           a;
  }
};

/// Solves A x = b for a dense n x n system (n <= 8) with partial pivoting.
/// a and b are clobbered by the elimination. Returns false when the matrix
/// is numerically singular.
bool solve_dense(int n, double* a, double* b, double* x);

}  // namespace godhs
