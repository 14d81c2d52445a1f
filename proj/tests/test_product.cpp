#include <doctest.h>

#include <cmath>
#include <random>

#include "ictp/error.hpp"
#include "ictp/product.hpp"
#include "oracles.hpp"

using namespace ictp;

namespace {

std::vector<double> vec(const IrrepTensor& t) { return {t.components().begin(), t.components().end()}; }

double max_diff(const IrrepTensor& a, const std::vector<double>& b) {
  double m = 0;
  for (std::size_t i = 0; i < b.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

// Random irreducible tensor: a random combination of T_l over a few directions.
IrrepTensor random_irrep(int l, std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  IrrepTensor t(l, true);
  for (int i = 0; i < 3; ++i) t += g(rng) * build_irreducible(UnitVector::random(rng), l);
  return t;
}

}  // namespace

TEST_CASE("normalization constants") {
  for (int l = 0; l <= 4; ++l) CHECK(norm_const_even(l, 0, l) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(norm_const_even(1, 1, 0) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(norm_const_even(1, 1, 2) == doctest::Approx(0.75).epsilon(1e-15));
  CHECK(norm_const_even(2, 2, 0) == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
  CHECK(norm_const_even(3, 3, 0) == doctest::Approx(0.4).epsilon(1e-15));
  CHECK(norm_const_odd(1, 1, 1) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(norm_const_odd(2, 1, 2) == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
  CHECK(norm_const_odd(1, 2, 2) == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
  CHECK(norm_const_odd(2, 2, 1) == doctest::Approx(4.0 / 9.0).epsilon(1e-15));
  CHECK(norm_const_odd(3, 3, 1) == doctest::Approx(0.2).epsilon(1e-15));
  CHECK_THROWS_AS(norm_const_odd(1, 1, 3), InvalidArgument);
  CHECK_THROWS_AS(norm_const_odd(1, 1, 2), InvalidArgument);
  CHECK_THROWS_AS(norm_const_even(1, 1, 1), InvalidArgument);
  CHECK_THROWS_AS(norm_const_even(1, 1, 4), InvalidArgument);
}

TEST_CASE("product spec tables") {
  const auto& s = product_spec(2, 2, 2);
  CHECK(s.parity == Parity::even);
  CHECK(s.k == 1);
  CHECK(s.terms.size() == 2);  // m = 0, 1
  const auto& o = product_spec(2, 1, 2);
  CHECK(o.parity == Parity::odd);
  CHECK(o.terms.size() == 1);
  CHECK(&product_spec(2, 2, 2) == &s);
  CHECK_FALSE(product_allowed(1, 1, 3));
  CHECK_FALSE(product_allowed(0, 0, 1));
  CHECK_FALSE(product_allowed(2, 0, 1));
  CHECK(product_allowed(2, 1, 2));
}

TEST_CASE("unity normalization of even products") {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 10; ++trial) {
    const auto r = UnitVector::random(rng);
    for (int l1 = 0; l1 <= 4; ++l1)
      for (int l2 = 0; l2 <= 4; ++l2)
        for (int l3 = std::abs(l1 - l2); l3 <= std::min(4, l1 + l2); l3 += 2) {
          const auto z = product_even(build_irreducible(r, l1), build_irreducible(r, l2), l3);
          const double u = contract(z, IrrepTensor::outer_power(r, l3), l3)[0];
          CHECK_MESSAGE(std::abs(u - 1.0) < 1e-10, l1, l2, l3);
        }
  }
}

TEST_CASE("products agree with the permutation-group oracle") {
  std::mt19937_64 rng(2);
  for (int l1 = 0; l1 <= 3; ++l1)
    for (int l2 = 0; l2 <= 3; ++l2)
      for (int l3 = std::abs(l1 - l2); l3 <= std::min(4, l1 + l2); ++l3) {
        if (!product_allowed(l1, l2, l3)) continue;
        const auto x = random_irrep(l1, rng), y = random_irrep(l2, rng);
        const auto& spec = product_spec(l1, l2, l3);
        const auto z = product(x, y, l3);
        CHECK_MESSAGE(max_diff(z, oracle::product(vec(x), l1, vec(y), l2, l3, spec.norm)) < 1e-12, l1, l2, l3);
      }
}

TEST_CASE("worked product examples") {
  const auto r = UnitVector::normalized({0.2, -0.7, 0.4});
  const auto t1 = build_irreducible(r, 1);
  CHECK(product_even(t1, t1, 0)[0] == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(max_abs_diff(product_even(t1, t1, 2), build_irreducible(r, 2)) < 1e-14);
  std::mt19937_64 rng(3);
  const auto x3 = random_irrep(3, rng);
  CHECK(max_abs_diff(product_even(x3, IrrepTensor::scalar(1.0), 3), x3) < 1e-14);

  const auto c = product_odd(IrrepTensor::vector({1, 0, 0}), IrrepTensor::vector({0, 1, 0}), 1);
  CHECK(c[0] == 0.0);
  CHECK(c[1] == 0.0);
  CHECK(c[2] == doctest::Approx(1.0).epsilon(1e-15));
  const auto v = IrrepTensor::vector({0.3, 0.1, -2.0});
  CHECK(product_odd(v, v, 1).max_abs() < 1e-15);

  CHECK_THROWS_AS(product_even(t1, t1, 1), InvalidArgument);
  CHECK_THROWS_AS(product_odd(t1, t1, 2), InvalidArgument);
  CHECK_THROWS_AS(product(t1, t1, 3), InvalidArgument);
  IrrepTensor raw = IrrepTensor::outer_power(r, 2);
  CHECK_THROWS_AS(product(raw, t1, 1, true), InvalidArgument);
  CHECK_NOTHROW(product(raw, t1, 1, false));
}

TEST_CASE("odd product of vectors is the cross product") {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> g;
  for (int trial = 0; trial < 100; ++trial) {
    const std::array<double, 3> a{g(rng), g(rng), g(rng)}, b{g(rng), g(rng), g(rng)};
    const auto c = product_odd(IrrepTensor::vector(a), IrrepTensor::vector(b), 1);
    const std::array<double, 3> want{a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]};
    for (int i = 0; i < 3; ++i) CHECK(std::abs(c[static_cast<std::size_t>(i)] - want[static_cast<std::size_t>(i)]) < 1e-12);
  }
}

TEST_CASE("product closure, equivariance, bilinearity") {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> g;
  for (int l1 = 0; l1 <= 3; ++l1)
    for (int l2 = 0; l2 <= 3; ++l2)
      for (int l3 = std::abs(l1 - l2); l3 <= l1 + l2; ++l3) {
        if (!product_allowed(l1, l2, l3)) continue;
        const auto x = random_irrep(l1, rng), y = random_irrep(l2, rng), x2 = random_irrep(l1, rng);
        const auto z = product(x, y, l3);
        CHECK(check_symmetric(z, 1e-10).ok);
        CHECK(check_traceless(z, 1e-10).ok);
        for (bool improper : {false, true}) {
          const auto R = Rotation::random(rng, improper);
          const double sign = product_spec(l1, l2, l3).parity == Parity::odd ? R.parity() : 1.0;
          const auto lhs = product(rotate(x, R), rotate(y, R), l3);
          CHECK_MESSAGE(max_abs_diff(lhs, sign * rotate(z, R)) < 1e-10, l1, l2, l3, improper);
        }
        const double a = g(rng), b = g(rng);
        const auto lhs = product(a * x + b * x2, y, l3);
        const auto rhs = a * z + b * product(x2, y, l3);
        CHECK(max_abs_diff(lhs, rhs) < 1e-12 * (1.0 + rhs.max_abs()));
        if ((l1 + l2 - l3) % 2 == 0)
          CHECK(max_abs_diff(product(x, y, l3), product(y, x, l3)) < 1e-12);
      }
}

TEST_CASE("path enumeration") {
  const auto full = enumerate_paths(1, 1, 2, PathVariant::full);
  REQUIRE(full.size() == 2);
  CHECK(full[0].to_string() == "(0,1)[1]->1");
  CHECK(full[1].to_string() == "(1,0)[1]->1");
  const auto sym = enumerate_paths(1, 1, 2, PathVariant::sym);
  REQUIRE(sym.size() == 1);
  CHECK(sym[0].multiplicity == 2);
  for (int lmax = 0; lmax <= 3; ++lmax) {
    const auto one = enumerate_paths(lmax, 0, 1, PathVariant::full);
    REQUIRE(one.size() == 1);
    CHECK(one[0].leaves == std::vector<int>{0});
    CHECK(enumerate_paths(lmax, 0, 1, PathVariant::sym).size() == 1);
  }
  CHECK_THROWS_AS(enumerate_paths(1, 1, 0, PathVariant::full), InvalidArgument);

  // counts with l_max = L = cap, nu = 1..4
  const int full_counts[3][4] = {{1, 2, 4, 8}, {1, 4, 15, 56}, {1, 6, 36, 215}};
  const int sym_counts[3][4] = {{1, 1, 3, 6}, {1, 3, 11, 40}, {1, 3, 23, 136}};
  for (int L = 1; L <= 3; ++L)
    for (int nu = 1; nu <= 4; ++nu) {
      const auto f = enumerate_paths(L, L, nu, PathVariant::full);
      const auto s = enumerate_paths(L, L, nu, PathVariant::sym);
      CHECK(f.size() == static_cast<std::size_t>(full_counts[L - 1][nu - 1]));
      CHECK(s.size() == static_cast<std::size_t>(sym_counts[L - 1][nu - 1]));
      int covered = 0;
      for (const auto& p : s) covered += p.multiplicity;
      CHECK(covered == static_cast<int>(f.size()));
      for (const auto& p : f) {
        if (nu > 1) CHECK(p.intermediates.back() == L);
        int prev = p.leaves[0];
        for (std::size_t j = 1; j < p.leaves.size(); ++j) {
          CHECK(even_product_allowed(prev, p.leaves[j], p.intermediates[j - 1]));
          CHECK(p.intermediates[j - 1] <= L);
          prev = p.intermediates[j - 1];
        }
      }
    }
}

TEST_CASE("sym paths evaluate to the same sum as full paths") {
  // For shared leaves A_l, sum over full paths equals sum over sym paths
  // weighted by multiplicity, since the first product commutes.
  std::mt19937_64 rng(8);
  const int lmax = 2, L = 2, nu = 3;
  std::vector<IrrepTensor> leaf;
  for (int l = 0; l <= lmax; ++l) leaf.push_back(random_irrep(l, rng));
  auto eval = [&](const PathSpec& p) {
    IrrepTensor cur = leaf[static_cast<std::size_t>(p.leaves[0])];
    for (std::size_t j = 1; j < p.leaves.size(); ++j)
      cur = product_even(cur, leaf[static_cast<std::size_t>(p.leaves[j])], p.intermediates[j - 1]);
    return cur;
  };
  IrrepTensor sf(L), ss(L);
  for (const auto& p : enumerate_paths(lmax, L, nu, PathVariant::full)) sf += eval(p);
  for (const auto& p : enumerate_paths(lmax, L, nu, PathVariant::sym)) ss += static_cast<double>(p.multiplicity) * eval(p);
  CHECK(max_abs_diff(sf, ss) < 1e-12);
}

TEST_CASE("operation counters") {
  const auto& s = product_spec(1, 1, 0);
  CHECK(s.counters.contraction_madds == 3);
  CHECK(s.counters.output_elements == 1);
  CHECK(product_spec(0, 0, 0).counters.total_madds() == 2);  // one contraction, one gather
  const auto& s2 = product_spec(2, 2, 2);
  for (const auto& t : s2.terms) {
    std::vector<int> groups;
    for (int g : {t.free_x, t.free_y})
      if (g > 0) groups.push_back(g);
    CHECK(t.bracket.placements == bracket_term_count(2, groups, t.m));
  }
  op_tally() = {};
  const auto r = UnitVector(0, 0, 1);
  (void)product_even(build_irreducible(r, 1), build_irreducible(r, 1), 0);
  CHECK(op_tally().products == 1);
  CHECK(op_tally().madds == s.counters.total_madds());
}
