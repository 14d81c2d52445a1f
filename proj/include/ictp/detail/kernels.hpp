#pragma once

// Scalar-generic kernels shared by the public tensor API and the model.
// T is double, float or Dual; coefficient tables are always double.

#include <cstddef>
#include <vector>

#include "ictp/core.hpp"

namespace ictp::detail {

template <class T>
std::vector<T>& scratch(int slot, std::size_t n) {
  thread_local std::vector<T> buffers[8];
  auto& b = buffers[slot];
  if (b.size() < n) b.resize(n);
  return b;
}

/// out[i1..in] = r[i1] * ... * r[in]
template <class T>
void outer_power(const T* r, int n, T* out) {
  out[0] = T(1.0);
  std::size_t size = 1;
  for (int k = 0; k < n; ++k) {
    // expand in place from the back: new[idx*3 + a] = old[idx] * r[a]
    for (std::size_t idx = size; idx-- > 0;) {
      const T v = out[idx];
      out[3 * idx + 0] = v * r[0];
      out[3 * idx + 1] = v * r[1];
      out[3 * idx + 2] = v * r[2];
    }
    size *= 3;
  }
}

/// dr[a] += sum_idx dout[idx] * d(prod_i r[idx_i]) / d r[a]
template <class T>
void outer_power_backward(const T* r, int n, const T* dout, T* dr) {
  if (n == 0) return;
  const std::size_t size = pow3(n);
  int digits[16];
  for (std::size_t idx = 0; idx < size; ++idx) {
    std::size_t rem = idx;
    for (int i = n - 1; i >= 0; --i) {
      digits[i] = static_cast<int>(rem % 3);
      rem /= 3;
    }
    for (int i = 0; i < n; ++i) {
      T prod = dout[idx];
      for (int j = 0; j < n; ++j)
        if (j != i) prod = prod * r[digits[j]];
      dr[digits[i]] += prod;
    }
  }
}

template <class T>
void bracket_apply(const BracketTable& table, const T* src, T* out, double coef) {
  for (const auto& e : table.entries) out[e.out] += (coef * e.weight) * src[e.src];
}

template <class T>
void bracket_adjoint(const BracketTable& table, const T* dout, T* dsrc, double coef) {
  for (const auto& e : table.entries) dsrc[e.src] += (coef * e.weight) * dout[e.out];
}

/// out = T_l(r) for a unit vector r (overwrites 3^l entries).
template <class T>
void build_irreducible(const T* r, int l, T* out) {
  const auto& tab = irreducible_table(l);
  const std::size_t n_out = pow3(l);
  for (std::size_t i = 0; i < n_out; ++i) out[i] = T(0.0);
  auto& power = scratch<T>(0, n_out);
  for (int m = 0; m <= l / 2; ++m) {
    outer_power(r, l - 2 * m, power.data());
    bracket_apply(tab.brackets[static_cast<std::size_t>(m)], power.data(), out,
                  tab.coefficients[static_cast<std::size_t>(m)]);
  }
}

/// dr += d<dout, T_l(r)>/dr, treating r as an unconstrained vector.
template <class T>
void build_irreducible_backward(const T* r, int l, const T* dout, T* dr) {
  const auto& tab = irreducible_table(l);
  for (int m = 0; 2 * m < l; ++m) {
    const int n = l - 2 * m;
    auto& dpower = scratch<T>(1, pow3(n));
    for (std::size_t i = 0; i < pow3(n); ++i) dpower[i] = T(0.0);
    bracket_adjoint(tab.brackets[static_cast<std::size_t>(m)], dout, dpower.data(),
                    tab.coefficients[static_cast<std::size_t>(m)]);
    outer_power_backward(r, n, dpower.data(), dr);
  }
}

/// out[ix, iy] = sum_c x[c, ix] y[c, iy] with c spanning `folds` leading indices.
template <class T>
void contract_leading(const T* x, int lx, const T* y, int ly, int folds, T* out) {
  const std::size_t nc = pow3(folds);
  const std::size_t na = pow3(lx - folds);
  const std::size_t nb = pow3(ly - folds);
  for (std::size_t i = 0; i < na * nb; ++i) out[i] = T(0.0);
  for (std::size_t c = 0; c < nc; ++c) {
    const T* xr = x + c * na;
    const T* yr = y + c * nb;
    for (std::size_t a = 0; a < na; ++a) {
      const T xa = xr[a];
      T* o = out + a * nb;
      for (std::size_t b = 0; b < nb; ++b) o[b] += xa * yr[b];
    }
  }
}

/// Adjoint of contract_leading: dx += dout . y^T, dy += x^T . dout.
template <class T>
void contract_leading_backward(const T* x, int lx, const T* y, int ly, int folds, const T* dout, T* dx,
                               T* dy) {
  const std::size_t nc = pow3(folds);
  const std::size_t na = pow3(lx - folds);
  const std::size_t nb = pow3(ly - folds);
  for (std::size_t c = 0; c < nc; ++c) {
    const T* xr = x + c * na;
    const T* yr = y + c * nb;
    T* dxr = dx + c * na;
    T* dyr = dy + c * nb;
    for (std::size_t a = 0; a < na; ++a) {
      const T* d = dout + a * nb;
      T acc = T(0.0);
      for (std::size_t b = 0; b < nb; ++b) {
        acc += d[b] * yr[b];
        dyr[b] += xr[a] * d[b];
      }
      dxr[a] += acc;
    }
  }
}

}  // namespace ictp::detail
