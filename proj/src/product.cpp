#include "ictp/product.hpp"

#include <algorithm>
#include <cstdlib>
#include <mutex>
#include <set>
#include <sstream>

#include "ictp/detail/product_kernels.hpp"
#include "ictp/error.hpp"

namespace ictp {

namespace {

double df(int n) { return static_cast<double>(double_factorial(n)); }
double fac(int n) { return static_cast<double>(factorial(n)); }

void require_triangle(int l1, int l2, int l3) {
  if (l1 < 0 || l2 < 0 || l3 < 0) throw InvalidArgument("product: negative rank");
  if (l3 < std::abs(l1 - l2) || l3 > l1 + l2)
    throw InvalidArgument("product: l3 = " + std::to_string(l3) + " outside |l1-l2|..l1+l2 for (" +
                          std::to_string(l1) + "," + std::to_string(l2) + ")");
}

// (-1)^m 2^m (2 l3 - 2m - 1)!! / (2 l3 - 1)!!
double m_weight(int l3, int m) {
  const double sign = (m % 2 == 0) ? 1.0 : -1.0;
  return sign * static_cast<double>(1LL << m) * df(2 * l3 - 2 * m - 1) / df(2 * l3 - 1);
}

}  // namespace

bool product_allowed(int l1, int l2, int l3) {
  if (l1 < 0 || l2 < 0 || l3 < 0) return false;
  if (l3 < std::abs(l1 - l2) || l3 > l1 + l2) return false;
  const int s = l1 + l2 - l3;
  if (s % 2 == 0) return true;
  return l3 >= 1 && std::min(l1, l2) - (s - 1) / 2 - 1 >= 0;
}

bool even_product_allowed(int l1, int l2, int l3) { return product_allowed(l1, l2, l3) && (l1 + l2 - l3) % 2 == 0; }

double norm_const_even(int l1, int l2, int l3) {
  require_triangle(l1, l2, l3);
  if ((l1 + l2 - l3) % 2 != 0) throw InvalidArgument("norm_const_even: l1 + l2 - l3 must be even");
  const int L = l1 + l2 + l3;
  const int L1 = L - 2 * l1 - 1, L2 = L - 2 * l2 - 1, L3 = L - 2 * l3 - 1;
  return fac(l1) * fac(l2) * df(2 * l3 - 1) * fac((L1 + 1) / 2) * fac((L2 + 1) / 2) /
         (fac(l3) * df(L1) * df(L2) * df(L3) * fac(L / 2));
}

double norm_const_odd(int l1, int l2, int l3) {
  require_triangle(l1, l2, l3);
  const int s = l1 + l2 - l3;
  if (s % 2 == 0) throw InvalidArgument("norm_const_odd: l1 + l2 - l3 must be odd");
  if (l3 < 1 || std::min(l1, l2) - (s - 1) / 2 - 1 < 0)
    throw InvalidArgument("norm_const_odd: empty coefficient sum for (" + std::to_string(l1) + "," +
                          std::to_string(l2) + "," + std::to_string(l3) + ")");
  const int L = l1 + l2 + l3;
  const int L1 = L - 2 * l1 - 1, L2 = L - 2 * l2 - 1, L3 = L - 2 * l3 - 1;
  return 2.0 * fac(l1) * fac(l2) * df(2 * l3 - 1) * fac(L1 / 2) * fac(L2 / 2) /
         (fac(l3 - 1) * df(L1 + 1) * df(L2 + 1) * df(L3 + 1) * fac((L + 1) / 2));
}

ProductSpec make_product_spec(int l1, int l2, int l3) {
  require_triangle(l1, l2, l3);
  if (!product_allowed(l1, l2, l3))
    throw InvalidArgument("product: empty coefficient sum for (" + std::to_string(l1) + "," + std::to_string(l2) +
                          "," + std::to_string(l3) + ")");
  ProductSpec spec;
  spec.l1 = l1;
  spec.l2 = l2;
  spec.l3 = l3;
  const int s = l1 + l2 - l3;
  spec.parity = (s % 2 == 0) ? Parity::even : Parity::odd;
  spec.k = spec.parity == Parity::even ? s / 2 : (s - 1) / 2;
  spec.norm = spec.parity == Parity::even ? norm_const_even(l1, l2, l3) : norm_const_odd(l1, l2, l3);
  const int m_max = std::min(l1, l2) - spec.k - (spec.parity == Parity::odd ? 1 : 0);
  spec.counters.output_elements = pow3(l3);
  for (int m = 0; m <= m_max; ++m) {
    ProductTerm term;
    term.m = m;
    term.folds = spec.k + m;
    term.free_x = l1 - term.folds;
    term.free_y = l2 - term.folds;
    term.coefficient = spec.norm * m_weight(l3, m);
    std::vector<int> groups;
    if (spec.parity == Parity::even) {
      for (int g : {term.free_x, term.free_y})
        if (g > 0) groups.push_back(g);
    } else {
      groups.push_back(1);  // the epsilon leg
      for (int g : {term.free_x - 1, term.free_y - 1})
        if (g > 0) groups.push_back(g);
    }
    term.bracket = make_bracket_table(l3, groups, m);
    const std::uint64_t np = pow3(term.free_x + term.free_y);
    spec.counters.contraction_madds += np * pow3(term.folds);
    if (spec.parity == Parity::odd) spec.counters.epsilon_madds += 2 * (np / 3);
    spec.counters.bracket_terms += term.bracket.entries.size();
    spec.counters.permutation_terms += term.bracket.placements;
    spec.terms.push_back(std::move(term));
  }
  return spec;
}

const ProductSpec& product_spec(int l1, int l2, int l3) {
  constexpr int kMax = kDefaultRankCap;
  if (l1 < 0 || l2 < 0 || l3 < 0 || l1 > kMax || l2 > kMax || l3 > kMax) {
    require_triangle(l1, l2, l3);
    throw InvalidArgument("product: ranks above cap " + std::to_string(kMax));
  }
  if (!product_allowed(l1, l2, l3)) {
    require_triangle(l1, l2, l3);
    throw InvalidArgument("product: empty coefficient sum for (" + std::to_string(l1) + "," + std::to_string(l2) +
                          "," + std::to_string(l3) + ")");
  }
  static std::once_flag flags[kMax + 1][kMax + 1][kMax + 1];
  static ProductSpec specs[kMax + 1][kMax + 1][kMax + 1];
  std::call_once(flags[l1][l2][l3], [=] { specs[l1][l2][l3] = make_product_spec(l1, l2, l3); });
  return specs[l1][l2][l3];
}

namespace {

void check_input(const IrrepTensor& t, bool strict, const char* what) {
  if (!strict) return;
  const double tol = 1e-10;
  if (!is_symmetric(t, tol) || !is_traceless(t, tol))
    throw InvalidArgument(std::string("product: ") + what + " operand is not symmetric-traceless");
}

IrrepTensor run_product(const IrrepTensor& x, const IrrepTensor& y, int l3, bool strict) {
  check_input(x, strict, "first");
  check_input(y, strict, "second");
  const auto& spec = product_spec(x.rank(), y.rank(), l3);
  IrrepTensor z(l3, true);
  detail::product_accumulate(spec, x.components().data(), y.components().data(), z.components().data());
  return z;
}

}  // namespace

IrrepTensor product_even(const IrrepTensor& x, const IrrepTensor& y, int l3, bool strict) {
  require_triangle(x.rank(), y.rank(), l3);
  if ((x.rank() + y.rank() - l3) % 2 != 0) throw InvalidArgument("product_even: l1 + l2 - l3 must be even");
  return run_product(x, y, l3, strict);
}

IrrepTensor product_odd(const IrrepTensor& x, const IrrepTensor& y, int l3, bool strict) {
  require_triangle(x.rank(), y.rank(), l3);
  if ((x.rank() + y.rank() - l3) % 2 == 0) throw InvalidArgument("product_odd: l1 + l2 - l3 must be odd");
  return run_product(x, y, l3, strict);
}

IrrepTensor product(const IrrepTensor& x, const IrrepTensor& y, int l3, bool strict) {
  require_triangle(x.rank(), y.rank(), l3);
  return run_product(x, y, l3, strict);
}

// ---------------------------------------------------------------------------
// Paths

std::string PathSpec::to_string() const {
  std::ostringstream os;
  os << "(";
  for (std::size_t i = 0; i < leaves.size(); ++i) os << (i ? "," : "") << leaves[i];
  os << ")";
  if (!intermediates.empty()) {
    os << "[";
    for (std::size_t i = 0; i < intermediates.size(); ++i) os << (i ? "," : "") << intermediates[i];
    os << "]";
  }
  os << "->" << target;
  return os.str();
}

namespace {

void extend(int l_max, int cap, int nu, int target, std::vector<int>& leaves, std::vector<int>& inter,
            std::vector<PathSpec>& out) {
  const int current = inter.empty() ? leaves.front() : inter.back();
  if (static_cast<int>(leaves.size()) == nu) {
    if (current == target) out.push_back({leaves, inter, target, PathVariant::full, 1});
    return;
  }
  for (int l = 0; l <= l_max; ++l)
    for (int lam = 0; lam <= cap; ++lam) {
      if (!even_product_allowed(current, l, lam)) continue;
      leaves.push_back(l);
      inter.push_back(lam);
      extend(l_max, cap, nu, target, leaves, inter, out);
      inter.pop_back();
      leaves.pop_back();
    }
}

}  // namespace

std::vector<PathSpec> enumerate_paths(int l_max, int target, int nu, PathVariant variant, int intermediate_cap) {
  if (nu < 1) throw InvalidArgument("enumerate_paths: nu must be >= 1");
  if (l_max < 0 || target < 0) throw InvalidArgument("enumerate_paths: negative rank");
  const int cap = intermediate_cap < 0 ? l_max : intermediate_cap;
  // The final rank is allowed to exceed the cap only when it is the target.
  std::vector<PathSpec> full;
  if (nu == 1) {
    if (target <= l_max) full.push_back({{target}, {}, target, PathVariant::full, 1});
  } else {
    const int top = std::max(cap, target);
    for (int l = 0; l <= l_max; ++l) {
      std::vector<int> leaves{l}, inter;
      std::vector<PathSpec> found;
      extend(l_max, top, nu, target, leaves, inter, found);
      for (auto& p : found) {
        bool ok = true;
        for (std::size_t i = 0; i + 1 < p.intermediates.size(); ++i)
          if (p.intermediates[i] > cap) ok = false;
        if (ok) full.push_back(std::move(p));
      }
    }
  }
  if (variant == PathVariant::full || nu == 1) {
    for (auto& p : full) p.variant = variant;
    return full;
  }
  // Commutativity of the first binary product: keep the representative with
  // leaves[0] <= leaves[1] and count the swapped twin in its multiplicity.
  std::vector<PathSpec> sym;
  for (auto& p : full) {
    if (p.leaves[0] > p.leaves[1]) continue;
    p.variant = PathVariant::sym;
    p.multiplicity = p.leaves[0] == p.leaves[1] ? 1 : 2;
    sym.push_back(std::move(p));
  }
  return sym;
}

}  // namespace ictp
