#include <doctest.h>

#include <cmath>
#include <sstream>

#include "ictp/bench.hpp"
#include "ictp/error.hpp"

using namespace ictp;

namespace {

// Ways to choose m disjoint unordered pairs from l labelled slots, by recursion
// on the lowest slot: it is either left unpaired or paired with a later slot.
std::uint64_t brute_pairings(int slots, int pairs) {
  if (pairs == 0) return 1;
  if (slots < 2 * pairs) return 0;
  return brute_pairings(slots - 1, pairs) + static_cast<std::uint64_t>(slots - 1) * brute_pairings(slots - 2, pairs - 1);
}

BenchConfig small_grid() {
  BenchConfig c;
  c.ranks = {1, 2};
  c.orders = {1, 2, 3};
  c.variants = {BenchVariant::full, BenchVariant::sym, BenchVariant::cartesian_kernel, BenchVariant::cg_kernel};
  c.channels = 2;
  c.repeats = 3;
  c.warmup = 1;
  c.warmup_seconds = 0.0;
  return c;
}

}  // namespace

TEST_CASE("product operation counts") {
  const auto c110 = count_product_ops(1, 1, 0);
  CHECK(c110.contraction_madds == 3);
  CHECK(c110.output_elements == 1);
  CHECK(c110.contraction_madds / c110.output_elements == 3);
  const auto c000 = count_product_ops(0, 0, 0);
  CHECK(c000.contraction_madds == 1);
  CHECK(c000.epsilon_madds == 0);

  for (int l = 0; l <= 8; ++l)
    for (int m = 0; 2 * m <= l; ++m) {
      CHECK(placement_count(l, m) == brute_pairings(l, m));
      std::vector<int> groups;
      if (l - 2 * m > 0) groups.push_back(l - 2 * m);
      if (l <= 6) CHECK(enumerate_placements(l, groups, m).size() == placement_count(l, m));
    }
  CHECK(placement_count(4, 2) == 3);
  CHECK_THROWS_AS(placement_count(3, 2), InvalidArgument);

  // tables rebuilt from scratch give identical counts
  for (int l1 = 0; l1 <= 3; ++l1)
    for (int l2 = 0; l2 <= 3; ++l2)
      for (int l3 = std::abs(l1 - l2); l3 <= l1 + l2; ++l3) {
        if (!product_allowed(l1, l2, l3)) continue;
        const auto a = count_product_ops(l1, l2, l3);
        const auto b = make_product_spec(l1, l2, l3).counters;
        CHECK(a.total_madds() == b.total_madds());
        CHECK(a.permutation_terms == b.permutation_terms);
        // every even product costs at least one multiply per output element and contraction
        if (even_product_allowed(l1, l2, l3)) CHECK(a.contraction_madds >= a.output_elements);
      }
}

TEST_CASE("scaling benchmark records") {
  const auto cfg = small_grid();
  const auto recs = bench_scaling(cfg);
  REQUIRE(recs.size() == 4 * 2 * 3);
  for (const auto& r : recs) {
    CHECK(r.status == "ok");
    CHECK(r.time_ms > 0.0);
    CHECK(r.time_se_ms >= 0.0);
    CHECK(r.channels == 2);
    CHECK(r.peak_bytes > 0);
    if (r.nu == 1) CHECK(r.basis_madds == 0);
  }
  const auto again = bench_scaling(cfg);
  for (std::size_t i = 0; i < recs.size(); ++i) {
    CHECK(recs[i].product_madds == again[i].product_madds);
    CHECK(recs[i].permutation_terms == again[i].permutation_terms);
    CHECK(recs[i].peak_bytes == again[i].peak_bytes);
  }
  // mixed leaf ranks exist from nu = 2 on: sym merges commuted pairs
  for (int L : {1, 2})
    for (int nu : {2, 3}) {
      const auto* f = find_record(recs, BenchVariant::full, L, nu);
      const auto* s = find_record(recs, BenchVariant::sym, L, nu);
      REQUIRE(f);
      REQUIRE(s);
      CHECK(s->paths < f->paths);
      CHECK(s->basis_madds < f->basis_madds);
    }
  // both kernels walk the same paths; the Cartesian one uses the model's full trie
  const auto* ck = find_record(recs, BenchVariant::cartesian_kernel, 2, 3);
  const auto* sk = find_record(recs, BenchVariant::cg_kernel, 2, 3);
  REQUIRE(ck);
  REQUIRE(sk);
  CHECK(ck->paths == sk->paths);
  CHECK(ck->product_madds == 27 * 2 * find_record(recs, BenchVariant::full, 2, 3)->basis_madds / 2);

  std::ostringstream csv, gp;
  write_bench_csv(csv, recs);
  const std::string text = csv.str();
  CHECK(text.rfind("variant,L,nu,channels,paths,top_paths,time_ms,time_se_ms,peak_bytes", 0) == 0);
  CHECK(std::count(text.begin(), text.end(), '\n') == 1 + static_cast<long>(recs.size()));
  write_gnuplot_script(gp, "bench.csv", recs);
  CHECK(gp.str().find("plot 'bench.csv'") != std::string::npos);
}

TEST_CASE("memory budget marks cells as OOM") {
  auto cfg = small_grid();
  cfg.variants = {BenchVariant::full};
  cfg.memory_budget = 1;
  for (const auto& r : bench_scaling(cfg)) {
    CHECK(r.status == "OOM");
    CHECK(r.time_ms == 0.0);
  }
  cfg.repeats = 0;
  CHECK_THROWS_AS(bench_scaling(cfg), InvalidArgument);
  cfg.repeats = 1;
  cfg.ranks = {4};
  CHECK_THROWS_AS(bench_scaling(cfg), InvalidArgument);
}

TEST_CASE("cost model fit") {
  std::vector<BenchRecord> recs;
  for (int L = 1; L <= 3; ++L)
    for (int nu = 1; nu <= 4; ++nu) {
      BenchRecord r;
      r.L = L;
      r.nu = nu;
      r.top_paths = static_cast<std::size_t>(L + nu);
      r.basis_madds = static_cast<std::uint64_t>(std::llround(7.0 * cost_model(L, nu, r.top_paths)));
      recs.push_back(r);
    }
  const auto fit = fit_cost_model(recs);
  CHECK(fit.points == 9);
  CHECK(fit.r2 == doctest::Approx(1.0).epsilon(1e-6));  // integer rounding of the counts
  CHECK(fit.log_constant == doctest::Approx(std::log(7.0)).epsilon(1e-3));
  // f(2) = 81 * 2 / (2 * 1) = 81
  CHECK(cost_model(2, 2, 1) == doctest::Approx(81.0));
  CHECK(cost_model(2, 3, 2) == doctest::Approx(2 * 81.0 * 81.0));

  recs[3].basis_madds *= 1000;  // break the proportionality
  CHECK(fit_cost_model(recs).r2 < 0.95);

  BenchRecord a, b;
  a.time_ms = 10.0;
  b.time_ms = 9.0;
  CHECK_FALSE(not_slower(a, b, 3.0));
  a.time_se_ms = b.time_se_ms = 1.0;
  CHECK(not_slower(a, b, 3.0));
  CHECK_FALSE(not_slower(a, b, 0.0));
}
