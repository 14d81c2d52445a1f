#pragma once

#include "ictp/detail/kernels.hpp"
#include "ictp/product.hpp"

namespace ictp::detail {

/// Q[i, rx, ry] = sum_{p,q} eps_{ipq} P[p, rx, q, ry] with |rx| = a-1, |ry| = b-1.
template <class T>
void epsilon_reduce(const T* p, int a, int b, T* q) {
  const std::size_t ra = pow3(a - 1), rb = pow3(b - 1), nb = pow3(b);
  const std::size_t nq = 3 * ra * rb;
  for (std::size_t i = 0; i < nq; ++i) q[i] = T(0.0);
  for (int i = 0; i < 3; ++i)
    for (int s = 0; s < 3; ++s)
      for (int t = 0; t < 3; ++t) {
        const int e = levi_civita(i, s, t);
        if (e == 0) continue;
        const double ed = e;
        for (std::size_t x = 0; x < ra; ++x) {
          const T* prow = p + (static_cast<std::size_t>(s) * ra + x) * nb + static_cast<std::size_t>(t) * rb;
          T* qrow = q + (static_cast<std::size_t>(i) * ra + x) * rb;
          for (std::size_t y = 0; y < rb; ++y) qrow[y] += ed * prow[y];
        }
      }
}

template <class T>
void epsilon_reduce_adjoint(const T* dq, int a, int b, T* dp) {
  const std::size_t ra = pow3(a - 1), rb = pow3(b - 1), nb = pow3(b);
  for (int i = 0; i < 3; ++i)
    for (int s = 0; s < 3; ++s)
      for (int t = 0; t < 3; ++t) {
        const int e = levi_civita(i, s, t);
        if (e == 0) continue;
        const double ed = e;
        for (std::size_t x = 0; x < ra; ++x) {
          T* prow = dp + (static_cast<std::size_t>(s) * ra + x) * nb + static_cast<std::size_t>(t) * rb;
          const T* qrow = dq + (static_cast<std::size_t>(i) * ra + x) * rb;
          for (std::size_t y = 0; y < rb; ++y) prow[y] += ed * qrow[y];
        }
      }
}

/// z += scale * (x (x) y)_{l3}
template <class T>
void product_accumulate(const ProductSpec& spec, const T* x, const T* y, T* z, double scale = 1.0) {
  auto& tally = op_tally();
  ++tally.products;
  tally.madds += spec.counters.total_madds();
  tally.contraction_madds += spec.counters.contraction_madds;
  tally.permutation_terms += spec.counters.permutation_terms;
  for (const auto& term : spec.terms) {
    const std::size_t np = pow3(term.free_x + term.free_y);
    auto& p = scratch<T>(2, np);
    contract_leading(x, spec.l1, y, spec.l2, term.folds, p.data());
    if (spec.parity == Parity::even) {
      bracket_apply(term.bracket, p.data(), z, scale * term.coefficient);
    } else {
      auto& q = scratch<T>(3, np / 3);
      epsilon_reduce(p.data(), term.free_x, term.free_y, q.data());
      bracket_apply(term.bracket, q.data(), z, scale * term.coefficient);
    }
  }
}

/// dx += d<dz, scale*(x (x) y)>/dx, dy likewise.
template <class T>
void product_backward(const ProductSpec& spec, const T* x, const T* y, const T* dz, T* dx, T* dy,
                      double scale = 1.0) {
  for (const auto& term : spec.terms) {
    const std::size_t np = pow3(term.free_x + term.free_y);
    auto& dp = scratch<T>(4, np);
    for (std::size_t i = 0; i < np; ++i) dp[i] = T(0.0);
    if (spec.parity == Parity::even) {
      bracket_adjoint(term.bracket, dz, dp.data(), scale * term.coefficient);
    } else {
      auto& dq = scratch<T>(5, np / 3);
      for (std::size_t i = 0; i < np / 3; ++i) dq[i] = T(0.0);
      bracket_adjoint(term.bracket, dz, dq.data(), scale * term.coefficient);
      epsilon_reduce_adjoint(dq.data(), term.free_x, term.free_y, dp.data());
    }
    contract_leading_backward(x, spec.l1, y, spec.l2, term.folds, dp.data(), dx, dy);
  }
}

}  // namespace ictp::detail
