#pragma once

// Minimal real spherical harmonics and Clebsch-Gordan coupling (degree <= 4),
// kept as a dense-loop baseline for benchmarks and one cross-check.

#include <span>
#include <vector>

#include "ictp/core.hpp"

namespace ictp {

inline constexpr int kMaxSphericalDegree = 4;

/// 2l+1 real components ordered m = -l..l.
class SphVector {
 public:
  explicit SphVector(int degree);
  SphVector(int degree, std::vector<double> components);

  int degree() const { return degree_; }
  std::size_t size() const { return data_.size(); }
  double operator[](int m) const { return data_[static_cast<std::size_t>(m + degree_)]; }
  double& operator[](int m) { return data_[static_cast<std::size_t>(m + degree_)]; }
  std::span<const double> components() const { return data_; }
  std::span<double> components() { return data_; }
  double norm2() const;

 private:
  int degree_;
  std::vector<double> data_;
};

/// Complex-basis Condon-Shortley coefficient <l1 m1 l2 m2 | l3 m3> (Racah formula).
double cg_complex(int l1, int m1, int l2, int m2, int l3, int m3);

/// Real-basis coupling coefficient; zero when selection rules fail.
double cg_coefficient(int l1, int m1, int l2, int m2, int l3, int m3);

/// Dense real coefficient table, indexed [(m1+l1)][(m2+l2)][(m3+l3)], cached.
const std::vector<double>& cg_table(int l1, int l2, int l3);

/// w_{m3} = sum_{m1,m2} C^{l3 m3}_{l1 m1, l2 m2} u_{m1} v_{m2}
SphVector cg_product(const SphVector& u, const SphVector& v, int l3);

/// Span form used by benchmarks: w += C (u (x) v), dense triple loop.
void cg_accumulate(int l1, int l2, int l3, const double* u, const double* v, double* w);

/// Orthonormal real spherical harmonics Y_{lm}(r_hat), l <= 4.
SphVector real_sh(int l, const UnitVector& r_hat);

}  // namespace ictp
