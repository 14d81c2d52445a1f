#pragma once

#include <cmath>
#include <ostream>

namespace ictp {

/// Forward-mode dual number v + d*eps with eps^2 = 0.
///
/// Running the reverse-mode model code with Dual scalars yields directional
/// derivatives of gradients (forward-over-reverse), which is how the force
/// term of the training loss is differentiated with respect to parameters.
struct Dual {
  double v = 0.0;
  double d = 0.0;

  constexpr Dual() = default;
  constexpr Dual(double value) : v(value) {}  // NOLINT(google-explicit-constructor)
  constexpr Dual(double value, double tangent) : v(value), d(tangent) {}

  constexpr Dual& operator+=(const Dual& o) {
    v += o.v;
    d += o.d;
    return *this;
  }
  constexpr Dual& operator-=(const Dual& o) {
    v -= o.v;
    d -= o.d;
    return *this;
  }
  constexpr Dual& operator*=(const Dual& o) {
    d = d * o.v + v * o.d;
    v *= o.v;
    return *this;
  }
  constexpr Dual& operator/=(const Dual& o) {
    d = (d * o.v - v * o.d) / (o.v * o.v);
    v /= o.v;
    return *this;
  }
};

constexpr Dual operator-(const Dual& a) { return {-a.v, -a.d}; }
constexpr Dual operator+(Dual a, const Dual& b) { return a += b; }
constexpr Dual operator-(Dual a, const Dual& b) { return a -= b; }
constexpr Dual operator*(Dual a, const Dual& b) { return a *= b; }
constexpr Dual operator/(Dual a, const Dual& b) { return a /= b; }
constexpr Dual operator+(Dual a, double b) { return {a.v + b, a.d}; }
constexpr Dual operator+(double b, Dual a) { return {a.v + b, a.d}; }
constexpr Dual operator-(Dual a, double b) { return {a.v - b, a.d}; }
constexpr Dual operator-(double b, Dual a) { return {b - a.v, -a.d}; }
constexpr Dual operator*(Dual a, double b) { return {a.v * b, a.d * b}; }
constexpr Dual operator*(double b, Dual a) { return {a.v * b, a.d * b}; }
constexpr Dual operator/(Dual a, double b) { return {a.v / b, a.d / b}; }
constexpr Dual operator/(double b, const Dual& a) { return Dual(b) / a; }

constexpr bool operator<(const Dual& a, const Dual& b) { return a.v < b.v; }
constexpr bool operator>(const Dual& a, const Dual& b) { return a.v > b.v; }
constexpr bool operator<=(const Dual& a, const Dual& b) { return a.v <= b.v; }
constexpr bool operator>=(const Dual& a, const Dual& b) { return a.v >= b.v; }

inline Dual sin(const Dual& a) { return {std::sin(a.v), a.d * std::cos(a.v)}; }
inline Dual cos(const Dual& a) { return {std::cos(a.v), -a.d * std::sin(a.v)}; }
inline Dual exp(const Dual& a) {
  const double e = std::exp(a.v);
  return {e, a.d * e};
}
inline Dual sqrt(const Dual& a) {
  const double s = std::sqrt(a.v);
  return {s, a.d / (2.0 * s)};
}
inline Dual abs(const Dual& a) { return a.v < 0 ? -a : a; }

inline double value_of(double x) { return x; }
inline double value_of(float x) { return x; }
inline double value_of(const Dual& x) { return x.v; }

inline std::ostream& operator<<(std::ostream& os, const Dual& a) { return os << a.v << "+" << a.d << "e"; }

}  // namespace ictp
