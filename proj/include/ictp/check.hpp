#pragma once

// Invariant suite shared by `ictp check` and the acceptance runner. Every
// check returns the largest violation it saw next to the tolerance it was
// judged against, so reports stay comparable across runs and tolerances.

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace ictp {

struct CheckResult {
  std::string name;
  double max_violation = 0.0;
  double tolerance = 0.0;
  bool pass = false;
  std::string detail;  // free text, e.g. sample counts
};

/// Judges `violation <= tol` (NaN fails) and fills a result.
CheckResult make_result(std::string name, double violation, double tol, std::string detail = {});

namespace checks {

// Unit-vector construction, l <= l_max over `samples` random directions.
CheckResult irreducible_symmetric(std::mt19937_64& rng, int l_max, int samples, double tol);
CheckResult irreducible_traceless(std::mt19937_64& rng, int l_max, int samples, double tol);
CheckResult irreducible_unit_contraction(std::mt19937_64& rng, int l_max, int samples, double tol);
/// T_3(z): zzz = 1, xxz = yyz = -1/2, everything else zero.
CheckResult rank3_at_z(double tol);

/// l3-fold contraction of (T_l1 (x) T_l2)_l3 with r_hat^{l3} equals 1, every even triple.
CheckResult product_normalization(std::mt19937_64& rng, int l_max, int samples, double tol);
/// T_l(R r) = R T_l(r) and (Rx (x) Ry) = det(R)^{odd} R (x (x) y), half of the R improper.
CheckResult kernel_equivariance(std::mt19937_64& rng, int l_max, int rotations, double tol);
/// (x (x) y)_1 of two vectors against the cross product.
CheckResult odd_cross_product(std::mt19937_64& rng, int pairs, double tol);

/// contract(T_l(a), b^{(x)l}, l) = P_l(a.b).
CheckResult legendre_contraction(std::mt19937_64& rng, int l_max, int pairs, double tol);
/// Scalar Clebsch-Gordan coupling of Y_l(a), Y_l(b) against the Cartesian
/// contraction, up to one constant per l fitted on the first pair.
CheckResult spherical_scalar_cross_check(std::mt19937_64& rng, int l_max, int pairs, double tol);

/// Energy of a random 2-layer model under random O(3) elements (absolute eV).
CheckResult model_rotation_invariance(std::mt19937_64& rng, int rotations, double tol);
/// Translation by a random vector and atom permutations (absolute eV).
CheckResult model_translation_permutation(std::mt19937_64& rng, int trials, double tol);
/// Every A, A_mixed, B, m, h tensor of a forward pass at (l_max, L, nu) = (3, 2, 3).
CheckResult traceless_intermediates(std::mt19937_64& rng, int configs, double tol);
/// max_u,k |F - F_fd| / max_u,k |F| per configuration, central differences with step h.
CheckResult forces_finite_difference(std::mt19937_64& rng, int configs, int atoms, double h, double tol);
/// |sum_u F_u| on random clusters.
CheckResult net_force(std::mt19937_64& rng, int configs, double tol);
/// Full and sym variants at nu = 1 with shared parameters; tol 0 demands bitwise equality.
CheckResult nu1_variant_identity(std::mt19937_64& rng, int configs, double tol);
/// Loss gradient against central differences of the loss (relative).
CheckResult loss_gradient(std::mt19937_64& rng, double tol);

}  // namespace checks

struct CheckOptions {
  std::uint64_t seed = 20240531;
  std::optional<double> tolerance;  // overrides every per-check tolerance
};

/// The default suite: core, product, model and gradient invariants.
std::vector<CheckResult> run_check_suite(const CheckOptions& options);

/// One line per result: `name max_violation tolerance PASS|FAIL [detail]`.
void write_check_report(std::ostream& os, const std::vector<CheckResult>& results);

}  // namespace ictp
