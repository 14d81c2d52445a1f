#include "ictp/spherical.hpp"

#include <cmath>
#include <complex>
#include <cstdlib>
#include <mutex>
#include <numbers>

#include "ictp/error.hpp"
#include "ictp/product.hpp"

namespace ictp {

SphVector::SphVector(int degree) : degree_(degree) {
  if (degree < 0) throw InvalidArgument("SphVector: negative degree");
  data_.assign(static_cast<std::size_t>(2 * degree + 1), 0.0);
}

SphVector::SphVector(int degree, std::vector<double> components) : degree_(degree), data_(std::move(components)) {
  if (degree < 0 || data_.size() != static_cast<std::size_t>(2 * degree + 1))
    throw InvalidArgument("SphVector: expected 2l+1 components");
}

double SphVector::norm2() const {
  double s = 0.0;
  for (double v : data_) s += v * v;
  return s;
}

namespace {

double fac(int n) { return static_cast<double>(factorial(n)); }

using cplx = std::complex<double>;

// Row m (real), column mu (complex), both offset by l.
cplx real_from_complex(int m, int mu) {
  const double h = 1.0 / std::numbers::sqrt2;
  if (m == 0) return mu == 0 ? cplx(1.0) : cplx(0.0);
  if (m > 0) {
    if (mu == m) return cplx((m % 2 == 0 ? 1.0 : -1.0) * h);
    if (mu == -m) return cplx(h);
    return {};
  }
  const int a = -m;
  if (mu == m) return cplx(0.0, h);
  if (mu == a) return cplx(0.0, -(a % 2 == 0 ? 1.0 : -1.0) * h);
  return {};
}

}  // namespace

double cg_complex(int l1, int m1, int l2, int m2, int l3, int m3) {
  if (std::abs(m1) > l1 || std::abs(m2) > l2 || std::abs(m3) > l3) return 0.0;
  if (m1 + m2 != m3) return 0.0;
  if (l3 < std::abs(l1 - l2) || l3 > l1 + l2) return 0.0;
  const double pre = std::sqrt((2.0 * l3 + 1.0) * fac(l3 + l1 - l2) * fac(l3 - l1 + l2) * fac(l1 + l2 - l3) /
                               fac(l1 + l2 + l3 + 1));
  const double mfac = std::sqrt(fac(l3 + m3) * fac(l3 - m3) * fac(l1 - m1) * fac(l1 + m1) * fac(l2 - m2) *
                                fac(l2 + m2));
  double sum = 0.0;
  for (int k = 0; k <= l1 + l2 - l3; ++k) {
    const int d[] = {l1 + l2 - l3 - k, l1 - m1 - k, l2 + m2 - k, l3 - l2 + m1 + k, l3 - l1 - m2 + k};
    bool ok = true;
    for (int v : d) ok = ok && v >= 0;
    if (!ok) continue;
    double den = fac(k);
    for (int v : d) den *= fac(v);
    sum += (k % 2 == 0 ? 1.0 : -1.0) / den;
  }
  return pre * mfac * sum;
}

double cg_coefficient(int l1, int m1, int l2, int m2, int l3, int m3) {
  if (std::abs(m1) > l1 || std::abs(m2) > l2 || std::abs(m3) > l3) return 0.0;
  if (l3 < std::abs(l1 - l2) || l3 > l1 + l2) return 0.0;
  cplx acc{};
  for (int mu1 = -l1; mu1 <= l1; ++mu1) {
    const cplx u1 = std::conj(real_from_complex(m1, mu1));
    if (u1 == cplx{}) continue;
    for (int mu2 = -l2; mu2 <= l2; ++mu2) {
      const cplx u2 = std::conj(real_from_complex(m2, mu2));
      if (u2 == cplx{}) continue;
      const int mu3 = mu1 + mu2;
      if (std::abs(mu3) > l3) continue;
      const cplx u3 = real_from_complex(m3, mu3);
      if (u3 == cplx{}) continue;
      acc += u3 * u1 * u2 * cg_complex(l1, mu1, l2, mu2, l3, mu3);
    }
  }
  // Even l1+l2+l3 couplings are real; odd ones are purely imaginary.
  return (l1 + l2 + l3) % 2 == 0 ? acc.real() : acc.imag();
}

const std::vector<double>& cg_table(int l1, int l2, int l3) {
  constexpr int kMax = kMaxSphericalDegree;
  if (l1 < 0 || l2 < 0 || l3 < 0 || l1 > kMax || l2 > kMax || l3 > 2 * kMax)
    throw InvalidArgument("cg_table: degree out of range");
  if (l3 < std::abs(l1 - l2) || l3 > l1 + l2) throw InvalidArgument("cg_table: triangle violation");
  static std::once_flag flags[kMax + 1][kMax + 1][2 * kMax + 1];
  static std::vector<double> tables[kMax + 1][kMax + 1][2 * kMax + 1];
  std::call_once(flags[l1][l2][l3], [=] {
    auto& t = tables[l1][l2][l3];
    const int n1 = 2 * l1 + 1, n2 = 2 * l2 + 1, n3 = 2 * l3 + 1;
    t.assign(static_cast<std::size_t>(n1 * n2 * n3), 0.0);
    for (int a = 0; a < n1; ++a)
      for (int b = 0; b < n2; ++b)
        for (int c = 0; c < n3; ++c)
          t[static_cast<std::size_t>((a * n2 + b) * n3 + c)] = cg_coefficient(l1, a - l1, l2, b - l2, l3, c - l3);
  });
  return tables[l1][l2][l3];
}

void cg_accumulate(int l1, int l2, int l3, const double* u, const double* v, double* w) {
  const auto& t = cg_table(l1, l2, l3);
  const int n1 = 2 * l1 + 1, n2 = 2 * l2 + 1, n3 = 2 * l3 + 1;
  auto& tally = op_tally();
  ++tally.products;
  const auto madds = static_cast<std::uint64_t>(n1) * static_cast<std::uint64_t>(n2) * static_cast<std::uint64_t>(n3);
  tally.madds += madds;
  tally.contraction_madds += madds;
  for (int a = 0; a < n1; ++a)
    for (int b = 0; b < n2; ++b) {
      const double uv = u[a] * v[b];
      const double* row = t.data() + static_cast<std::size_t>((a * n2 + b) * n3);
      for (int c = 0; c < n3; ++c) w[c] += row[c] * uv;
    }
}

SphVector cg_product(const SphVector& u, const SphVector& v, int l3) {
  const int l1 = u.degree(), l2 = v.degree();
  if (l3 < std::abs(l1 - l2) || l3 > l1 + l2) throw InvalidArgument("cg_product: triangle violation");
  SphVector w(l3);
  cg_accumulate(l1, l2, l3, u.components().data(), v.components().data(), w.components().data());
  return w;
}

SphVector real_sh(int l, const UnitVector& r_hat) {
  if (l < 0 || l > kMaxSphericalDegree) throw InvalidArgument("real_sh: degree must be in 0..4");
  const double x = r_hat[0], y = r_hat[1], z = r_hat[2];
  SphVector out(l);
  for (int m = 0; m <= l; ++m) {
    // Q_l^m(z) = P_l^m(z) / (1 - z^2)^{m/2}, no Condon-Shortley phase.
    double q_mm = static_cast<double>(double_factorial(2 * m - 1));
    double q = q_mm;
    if (l > m) {
      double q_prev = q_mm;
      double q_cur = z * (2.0 * m + 1.0) * q_mm;
      for (int n = m + 2; n <= l; ++n) {
        const double q_next = ((2.0 * n - 1.0) * z * q_cur - (n + m - 1.0) * q_prev) / (n - m);
        q_prev = q_cur;
        q_cur = q_next;
      }
      q = q_cur;
    }
    const double norm = std::sqrt((2.0 * l + 1.0) / (4.0 * std::numbers::pi) * fac(l - m) / fac(l + m));
    // Re/Im of (x + i y)^m
    std::complex<double> w(1.0, 0.0);
    for (int k = 0; k < m; ++k) w *= std::complex<double>(x, y);
    if (m == 0) {
      out[0] = norm * q;
    } else {
      out[m] = std::numbers::sqrt2 * norm * q * w.real();
      out[-m] = std::numbers::sqrt2 * norm * q * w.imag();
    }
  }
  return out;
}

}  // namespace ictp
