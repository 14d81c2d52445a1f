#pragma once

// Even/odd irreducible Cartesian tensor products and nu-fold product paths.

#include <cstdint>
#include <string>
#include <vector>

#include "ictp/core.hpp"

namespace ictp {

enum class Parity { even, odd };

/// Operation counts of one product evaluation, derived from its tables.
struct ProductCounters {
  std::uint64_t contraction_madds = 0;  // sum_m 3^{free} * 3^{k+m}
  std::uint64_t epsilon_madds = 0;      // odd products: Levi-Civita reduction
  std::uint64_t bracket_terms = 0;      // gather entries of the symmetrization
  std::uint64_t permutation_terms = 0;  // distinct placements summed per output element
  std::uint64_t output_elements = 0;    // 3^{l3}

  std::uint64_t total_madds() const { return contraction_madds + epsilon_madds + bracket_terms; }
};

/// One m-term of a product: contract `folds` indices, optionally reduce with
/// eps, then symmetrize with m Kronecker pairs.
struct ProductTerm {
  int m = 0;
  int folds = 0;
  int free_x = 0;
  int free_y = 0;
  double coefficient = 0.0;  // norm * (-1)^m 2^m (2l3-2m-1)!!/(2l3-1)!!
  BracketTable bracket;
};

struct ProductSpec {
  int l1 = 0, l2 = 0, l3 = 0;
  Parity parity = Parity::even;
  int k = 0;
  double norm = 1.0;  // C_{l1 l2 l3} or D_{l1 l2 l3}
  std::vector<ProductTerm> terms;
  ProductCounters counters;
};

/// True when |l1-l2| <= l3 <= l1+l2 and the parity has a non-empty m-sum.
bool product_allowed(int l1, int l2, int l3);
bool even_product_allowed(int l1, int l2, int l3);

double norm_const_even(int l1, int l2, int l3);
double norm_const_odd(int l1, int l2, int l3);

/// Cached spec for (l1, l2, l3); throws InvalidArgument for invalid triples.
const ProductSpec& product_spec(int l1, int l2, int l3);
ProductSpec make_product_spec(int l1, int l2, int l3);

IrrepTensor product_even(const IrrepTensor& x, const IrrepTensor& y, int l3, bool strict = false);
IrrepTensor product_odd(const IrrepTensor& x, const IrrepTensor& y, int l3, bool strict = false);
/// Dispatches on the parity of l1 + l2 - l3.
IrrepTensor product(const IrrepTensor& x, const IrrepTensor& y, int l3, bool strict = false);

enum class PathVariant { full, sym };

/// One nu-fold left-nested product ((l_1 (x) l_2)_{lambda_2} (x) l_3)_{lambda_3} ...
struct PathSpec {
  std::vector<int> leaves;
  std::vector<int> intermediates;  // lambda_2..lambda_nu; back() == target for nu >= 2
  int target = 0;
  PathVariant variant = PathVariant::full;
  int multiplicity = 1;  // number of full-variant paths this entry stands for

  int order() const { return static_cast<int>(leaves.size()); }
  std::string to_string() const;
};

/// All paths of exactly `nu` leaves with leaf ranks <= l_max, intermediates
/// <= intermediate_cap (default l_max) and only even binary steps.
std::vector<PathSpec> enumerate_paths(int l_max, int target, int nu, PathVariant variant,
                                      int intermediate_cap = -1);

/// Thread-local tally of product kernel work, fed by the span kernels.
struct OpTally {
  std::uint64_t products = 0;
  std::uint64_t madds = 0;
  std::uint64_t permutation_terms = 0;
  std::uint64_t contraction_madds = 0;
};

inline OpTally& op_tally() {
  thread_local OpTally tally;
  return tally;
}

}  // namespace ictp
