#pragma once

#include <Eigen/Dense>
#include <cmath>

namespace leap {

// First-order dual number for forward-mode derivatives through the
// kinematics chain. One directional derivative per pass.
struct Dual {
  double v = 0.0;
  double d = 0.0;

  Dual() = default;
  Dual(double value) : v(value) {}  // NOLINT: implicit from constants
  Dual(double value, double deriv) : v(value), d(deriv) {}
};

inline Dual operator+(Dual a, Dual b) { return {a.v + b.v, a.d + b.d}; }
inline Dual operator-(Dual a, Dual b) { return {a.v - b.v, a.d - b.d}; }
inline Dual operator-(Dual a) { return {-a.v, -a.d}; }
inline Dual operator*(Dual a, Dual b) { return {a.v * b.v, a.d * b.v + a.v * b.d}; }
inline Dual operator/(Dual a, Dual b) {
  return {a.v / b.v, (a.d * b.v - a.v * b.d) / (b.v * b.v)};
}
inline Dual& operator+=(Dual& a, Dual b) { a = a + b; return a; }
inline Dual& operator-=(Dual& a, Dual b) { a = a - b; return a; }
inline Dual& operator*=(Dual& a, Dual b) { a = a * b; return a; }
inline Dual sin(Dual a) { return {std::sin(a.v), std::cos(a.v) * a.d}; }
inline Dual cos(Dual a) { return {std::cos(a.v), -std::sin(a.v) * a.d}; }
inline Dual sqrt(Dual a) {
  const double s = std::sqrt(a.v);
  return {s, a.d / (2.0 * s)};
}
inline Dual exp(Dual a) {
  const double e = std::exp(a.v);
  return {e, e * a.d};
}
inline double value(double x) { return x; }
inline double value(Dual x) { return x.v; }
inline double deriv(double) { return 0.0; }
inline double deriv(Dual x) { return x.d; }

// Minimal fixed-size vector/rotation templates so the kinematics code can be
// instantiated with double or Dual without Eigen scalar plumbing.
template <typename T>
struct Vec3T {
  T x{}, y{}, z{};

  static Vec3T zero() { return {T(0.0), T(0.0), T(0.0)}; }

  Vec3T operator+(const Vec3T& o) const { return {x + o.x, y + o.y, z + o.z}; }
  Vec3T operator-(const Vec3T& o) const { return {x - o.x, y - o.y, z - o.z}; }
  Vec3T operator*(T s) const { return {x * s, y * s, z * s}; }
  Vec3T& operator+=(const Vec3T& o) {
    x += o.x; y += o.y; z += o.z;
    return *this;
  }
  Vec3T cross(const Vec3T& o) const {
    return {y * o.z - z * o.y, z * o.x - x * o.z, x * o.y - y * o.x};
  }
  T dot(const Vec3T& o) const { return x * o.x + y * o.y + z * o.z; }
};

template <typename T>
struct Mat3T {
  // column-major 3x3
  Vec3T<T> c0, c1, c2;

  Vec3T<T> operator*(const Vec3T<T>& v) const {
    return {c0.x * v.x + c1.x * v.y + c2.x * v.z,
            c0.y * v.x + c1.y * v.y + c2.y * v.z,
            c0.z * v.x + c1.z * v.y + c2.z * v.z};
  }
  Mat3T operator*(const Mat3T& o) const { return {(*this) * o.c0, (*this) * o.c1, (*this) * o.c2}; }
  Vec3T<T> transpose_mul(const Vec3T<T>& v) const {
    return {c0.dot(v), c1.dot(v), c2.dot(v)};
  }

  static Mat3T identity() {
    return {{T(1.0), T(0.0), T(0.0)}, {T(0.0), T(1.0), T(0.0)}, {T(0.0), T(0.0), T(1.0)}};
  }
  static Mat3T rot_x(T a) {
    using std::cos, std::sin;
    const T c = cos(a), s = sin(a);
    return {{T(1.0), T(0.0), T(0.0)}, {T(0.0), c, s}, {T(0.0), T(0.0) - s, c}};
  }
  static Mat3T rot_y(T a) {
    using std::cos, std::sin;
    const T c = cos(a), s = sin(a);
    return {{c, T(0.0), T(0.0) - s}, {T(0.0), T(1.0), T(0.0)}, {s, T(0.0), c}};
  }
  static Mat3T rot_z(T a) {
    using std::cos, std::sin;
    const T c = cos(a), s = sin(a);
    return {{c, s, T(0.0)}, {T(0.0) - s, c, T(0.0)}, {T(0.0), T(0.0), T(1.0)}};
  }
};

inline Eigen::Vector3d to_eigen(const Vec3T<double>& v) { return {v.x, v.y, v.z}; }
inline Vec3T<double> from_eigen(const Eigen::Vector3d& v) { return {v.x(), v.y(), v.z()}; }

inline double wrap_angle(double a) {
  a = std::fmod(a + M_PI, 2.0 * M_PI);
  if (a < 0.0) a += 2.0 * M_PI;
  return a - M_PI;
}

}  // namespace leap
