#pragma once

// Scaling benchmarks over tensor rank L and correlation order nu, with
// deterministic operation counters and a comparison against the analytic
// cost model K * (9^L L! / (2^{L/2} (L/2)!))^{nu-1}.

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "ictp/atoms.hpp"
#include "ictp/model.hpp"
#include "ictp/product.hpp"

namespace ictp {

/// Counters of a single (l1, l2) -> l3 product, straight from its tables.
ProductCounters count_product_ops(int l1, int l2, int l3);

/// Distinct placements of m Kronecker pairs among l indices: l! / ((l-2m)! 2^m m!).
std::uint64_t placement_count(int l, int m);

/// Model-level variants time a full energy + force evaluation; the two kernel
/// variants time only the product basis, once with Cartesian products and once
/// with Clebsch-Gordan couplings of spherical vectors over the same paths.
enum class BenchVariant { full, sym, sym_lt, cartesian_kernel, cg_kernel };

std::string to_string(BenchVariant v);
BenchVariant parse_bench_variant(const std::string& s);

struct BenchConfig {
  std::vector<int> ranks{1, 2, 3};
  std::vector<int> orders{1, 2, 3, 4};
  std::vector<BenchVariant> variants{BenchVariant::full, BenchVariant::sym, BenchVariant::cartesian_kernel,
                                     BenchVariant::cg_kernel};
  int channels = 8;
  int repeats = 20;
  int warmup = 2;               // untimed evaluations per cell
  double warmup_seconds = 1.0;  // global spin-up before the first cell
  std::size_t memory_budget = std::size_t{8} << 30;  // predicted tape bytes above this are reported as OOM
  int threads = 1;  // > 1 evaluates copies concurrently (throughput mode)
};

struct BenchRecord {
  BenchVariant variant = BenchVariant::full;
  int L = 0;
  int nu = 0;
  int channels = 0;
  std::size_t paths = 0;        // product-basis paths of every order <= nu
  std::size_t top_paths = 0;    // paths of order exactly nu (the cost-model prefactor K)
  double time_ms = 0.0;         // median time per structure
  double time_se_ms = 0.0;      // standard error of the median, from the MAD of the repeats
  std::size_t peak_bytes = 0;   // tracked tensor buffers
  std::uint64_t product_madds = 0;      // all products in one evaluation
  std::uint64_t permutation_terms = 0;
  std::uint64_t basis_madds = 0;        // product basis per atom
  std::string status = "ok";    // "ok" or "OOM"
};

/// Fixed 27-atom hydrogen cluster on a jittered 3x3x3 grid.
AtomicConfiguration bench_structure();

/// Median-of-repeats timings; cells whose predicted memory exceeds the budget
/// (or whose allocation fails) are returned with status "OOM".
std::vector<BenchRecord> bench_scaling(const BenchConfig& cfg);

/// Model used for a benchmark cell.
ModelConfig bench_model_config(BenchVariant variant, int L, int nu, int channels);

void write_bench_csv(std::ostream& os, const std::vector<BenchRecord>& records);
/// gnuplot script plotting time against nu for each L and variant from `csv_path`.
void write_gnuplot_script(std::ostream& os, const std::string& csv_path,
                          const std::vector<BenchRecord>& records);

/// Least-squares fit of log(basis_madds) = c + log(K f(L)^{nu-1}) over records
/// with nu >= 2 (nu = 1 has no products to count).
struct CostModelFit {
  double log_constant = 0.0;
  double r2 = 0.0;
  std::size_t points = 0;
};

double cost_model(int L, int nu, std::size_t top_paths);

/// Adjacent grid pairs (in L at fixed nu, and in nu at fixed L) whose time
/// drops by more than `z` combined standard errors; z = 0 demands strict
/// monotonicity of the medians.
struct TrendViolation {
  int L0, nu0, L1, nu1;
  double t0, t1;
};
std::vector<TrendViolation> monotonicity_violations(const std::vector<BenchRecord>& records, BenchVariant variant,
                                                    double z);

/// True when `a` is not slower than `b` by more than z combined standard errors.
bool not_slower(const BenchRecord& a, const BenchRecord& b, double z);

const BenchRecord* find_record(const std::vector<BenchRecord>& records, BenchVariant variant, int L, int nu);
CostModelFit fit_cost_model(const std::vector<BenchRecord>& records, BenchVariant variant = BenchVariant::full);

}  // namespace ictp
