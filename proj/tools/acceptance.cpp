// Acceptance runner: one PASS/FAIL line per criterion (and per sub-claim),
// with the tolerances of the acceptance list. The exit status is zero when
// every failing line is listed with --known-failure; listed lines are still
// evaluated and printed as FAIL, and a listed line that passes is reported.

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#include "ictp/bench.hpp"
#include "ictp/check.hpp"
#include "ictp/train.hpp"

using namespace ictp;

namespace {

struct Line {
  std::string id;
  std::string claim;
  bool pass;
  std::string measured;
};

std::vector<Line> lines;

void report(const std::string& id, const std::string& claim, bool pass, const std::string& measured) {
  lines.push_back({id, claim, pass, measured});
  std::printf("[%s] %-4s %-62s %s\n", pass ? "PASS" : "FAIL", id.c_str(), claim.c_str(), measured.c_str());
  std::fflush(stdout);
}

std::string fmt(const char* f, double a, double b = 0.0) {
  char buf[128];
  std::snprintf(buf, sizeof buf, f, a, b);
  return buf;
}

void report(const std::string& id, const std::string& claim, const CheckResult& r) {
  report(id, claim, r.pass, fmt("max %.3e (tol %.1e)", r.max_violation, r.tolerance));
}

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

void irreducible(std::mt19937_64& rng) {
  const Stopwatch sw;
  report("1a", "T_l symmetric, l <= 4, 1000 directions", checks::irreducible_symmetric(rng, 4, 1000, 1e-12));
  report("1b", "T_l traceless, l <= 4, 1000 directions", checks::irreducible_traceless(rng, 4, 1000, 1e-12));
  report("1c", "unity l-fold contraction, l <= 4, 1000 directions",
         checks::irreducible_unit_contraction(rng, 4, 1000, 1e-12));
  report("1d", "T_3(z) exact: zzz = 1, xxz = yyz = -1/2", checks::rank3_at_z(0.0));
  const double t = sw.seconds();
  report("1e", "runtime of 1a-1d < 5 s", t < 5.0, fmt("%.3f s", t));
}

void equivariance(std::mt19937_64& rng) {
  report("3a", "kernel equivariance, 200 O(3) elements", checks::kernel_equivariance(rng, 4, 200, 1e-10));
  report("3b", "2-layer model energy invariance, 200 O(3) elements",
         checks::model_rotation_invariance(rng, 200, 1e-8));
  report("3c", "model energy under translation and permutation",
         checks::model_translation_permutation(rng, 20, 1e-8));
}

void forces(std::mt19937_64& rng) {
  const Stopwatch sw;
  report("7a", "forces vs central differences, 20 configs of 6 atoms",
         checks::forces_finite_difference(rng, 20, 6, 1e-4, 1e-5));
  const double t = sw.seconds();
  report("7b", "runtime of 7a < 2 min", t < 120.0, fmt("%.2f s", t));
}

std::string trend_detail(const std::vector<TrendViolation>& v) {
  if (v.empty()) return "no violations";
  std::ostringstream os;
  os << v.size() << " violation(s):";
  for (const auto& t : v) {
    char buf[96];
    std::snprintf(buf, sizeof buf, " (L%d,nu%d)%.2fms > (L%d,nu%d)%.2fms", t.L0, t.nu0, t.t0, t.L1, t.nu1, t.t1);
    os << buf;
  }
  return os.str();
}

void scaling(const std::string& csv_path) {
  BenchConfig cfg;  // ranks 1..3, orders 1..4, 8 channels, 20 repeats
  const Stopwatch sw;
  const auto recs = bench_scaling(cfg);
  if (!csv_path.empty()) {
    std::ofstream os(csv_path);
    write_bench_csv(os, recs);
  }
  const bool all_ok = std::all_of(recs.begin(), recs.end(), [](const BenchRecord& r) { return r.status == "ok"; });
  report("8a", "every grid cell measured (no OOM)", all_ok, fmt("%.0f cells in %.1f s", recs.size(), sw.seconds()));

  // Model-level timings are judged within three standard errors of the median;
  // the product-basis kernel is judged on the raw medians.
  for (auto v : {BenchVariant::full, BenchVariant::sym}) {
    const auto viol = monotonicity_violations(recs, v, 3.0);
    report(v == BenchVariant::full ? "8b" : "8c", "model time nondecreasing in L and nu (" + to_string(v) + ")",
           viol.empty(), trend_detail(viol));
  }
  const auto kviol = monotonicity_violations(recs, BenchVariant::cartesian_kernel, 0.0);
  report("8d", "product-basis time strictly nondecreasing in L and nu", kviol.empty(), trend_detail(kviol));

  bool fewer = true;
  std::size_t cells = 0;
  for (int L : cfg.ranks)
    for (int nu : cfg.orders) {
      const auto* f = find_record(recs, BenchVariant::full, L, nu);
      const auto* s = find_record(recs, BenchVariant::sym, L, nu);
      if (!f || !s) {
        fewer = false;
        continue;
      }
      // with nu >= 2 and L >= 1 two different leaf ranks can always meet
      if (nu >= 2) {
        ++cells;
        fewer = fewer && s->paths < f->paths;
      } else {
        fewer = fewer && s->paths == f->paths;
      }
    }
  report("8e", "sym path count < full path count with mixed leaf ranks", fewer,
         fmt("%.0f cells with nu >= 2", static_cast<double>(cells)));

  const auto* f32 = find_record(recs, BenchVariant::full, 2, 3);
  const auto* s32 = find_record(recs, BenchVariant::sym, 2, 3);
  const bool sym_fast = f32 && s32 && not_slower(*s32, *f32, 3.0);
  report("8f", "sym time <= full time at nu = 3, L = 2", sym_fast,
         f32 && s32 ? fmt("sym %.2f ms, full %.2f ms", s32->time_ms, f32->time_ms) : "missing cells");

  const auto fit = fit_cost_model(recs, BenchVariant::full);
  report("8g", "operation counts follow K f(L)^(nu-1), R^2 >= 0.95 (log)", fit.r2 >= 0.95,
         fmt("R^2 = %.4f, fitted constant exp(c) = %.4g", fit.r2, std::exp(fit.log_constant)));
}

void trainability(std::uint64_t seed) {
  const Stopwatch sw;
  auto mc = ModelConfig::preset("desk");
  mc.species = {1};
  const Model model(mc);
  const auto data = synthetic_dataset(20, seed);
  const std::vector<AtomicConfiguration> train(data.begin(), data.begin() + 16), val(data.begin() + 16, data.end());
  TrainConfig tc;
  tc.epochs = 200;
  tc.seed = seed;
  const auto run = [&] { return train_loop(model, model.init_params(seed), train, val, tc); };
  const auto a = run();
  const double t = sw.seconds();
  const auto b = run();

  const auto& first = a.history.front();
  const auto& last = a.history.back();
  report("9a", "200 epochs: train force MAE < 20% of epoch 0", last.train_force_mae < 0.2 * first.train_force_mae,
         fmt("%.4g -> %.4g eV/A", first.train_force_mae, last.train_force_mae) +
             fmt(" (val %.4g -> %.4g)", first.val_force_mae, last.val_force_mae));
  std::ostringstream ha, hb;
  write_history_csv(ha, a.history);
  write_history_csv(hb, b.history);
  report("9b", "identical seeds give identical histories", ha.str() == hb.str() && a.params.values == b.params.values,
         fmt("%.0f epochs compared", static_cast<double>(a.history.size())));
  report("9c", "runtime of one training run < 10 min", t < 600.0, fmt("%.2f s", t));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance runner"};
  std::uint64_t seed = 20240531;
  std::string bench_csv;
  std::vector<std::string> known;
  bool skip_bench = false;
  app.add_option("--seed", seed)->capture_default_str();
  app.add_option("--bench-csv", bench_csv, "also write the scaling grid as CSV");
  app.add_option("--known-failure", known, "line id expected to fail (still evaluated and printed)");
  app.add_flag("--skip-bench", skip_bench, "omit criterion 8 (reported as FAIL)");
  CLI11_PARSE(app, argc, argv);

  std::printf("seed = %llu\n", static_cast<unsigned long long>(seed));
  std::mt19937_64 rng(seed);
  const Stopwatch total;

  irreducible(rng);
  report("2", "product normalization, all even triples l_i <= 4",
         checks::product_normalization(rng, 4, 20, 1e-10));
  equivariance(rng);
  report("4", "traceless intermediates, 2 layers, (l_max, L, nu) = (3, 2, 3)",
         checks::traceless_intermediates(rng, 5, 1e-9));
  report("5a", "Legendre contraction, l <= 4, 1000 pairs", checks::legendre_contraction(rng, 4, 1000, 1e-10));
  report("5b", "scalar coupling vs spherical baseline up to a per-l constant",
         checks::spherical_scalar_cross_check(rng, 4, 1000, 1e-8));
  report("6", "odd product of vectors equals the cross product, 100 pairs",
         checks::odd_cross_product(rng, 100, 1e-12));
  forces(rng);
  if (skip_bench)
    report("8", "scaling trends", false, "skipped");
  else
    scaling(bench_csv);
  trainability(seed);
  report("10", "nu = 1: full and sym energies bitwise identical", checks::nu1_variant_identity(rng, 20, 0.0));

  const std::set<std::string> expected(known.begin(), known.end());
  int failed = 0, unexpected = 0;
  std::string unexpected_ids, recovered_ids;
  for (const auto& l : lines) {
    if (!l.pass) {
      ++failed;
      if (!expected.count(l.id)) {
        ++unexpected;
        unexpected_ids += " " + l.id;
      }
    } else if (expected.count(l.id)) {
      recovered_ids += " " + l.id;
    }
  }
  std::printf("%zu lines, %d passed, %d failed (%.1f s)\n", lines.size(), static_cast<int>(lines.size()) - failed,
              failed, total.seconds());
  if (!expected.empty()) std::printf("known failures:%s\n", [&] {
    std::string s;
    for (const auto& k : expected) s += " " + k;
    return s;
  }().c_str());
  if (!recovered_ids.empty()) std::printf("listed as known failures but passed:%s\n", recovered_ids.c_str());
  if (unexpected) std::printf("unexpected failures:%s\n", unexpected_ids.c_str());
  return unexpected ? 1 : 0;
}
