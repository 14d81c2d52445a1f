#pragma once

// Dense rank-l Cartesian tensors and the primitive operations used to build
// irreducible (symmetric, traceless) tensors from unit vectors.

#include <array>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <random>
#include <span>
#include <vector>

namespace ictp {

/// Highest rank for which coefficient and permutation tables may be built.
inline constexpr int kDefaultRankCap = 6;

/// Default symmetry/trace tolerances per floating-point precision.
template <class T>
constexpr double default_tolerance() {
  return sizeof(T) <= 4 ? 1e-5 : 1e-12;
}

/// 3^n for small non-negative n.
constexpr std::size_t pow3(int n) {
  std::size_t p = 1;
  for (int i = 0; i < n; ++i) p *= 3;
  return p;
}

/// n!! with 0!! = (-1)!! = 1. Throws InvalidArgument for n < -1.
std::int64_t double_factorial(int n);
std::int64_t factorial(int n);

struct UnitVector {
  std::array<double, 3> c{0.0, 0.0, 1.0};

  UnitVector() = default;
  /// Validates |(x,y,z)| = 1 within 1e-12.
  UnitVector(double x, double y, double z);
  /// Normalizes an arbitrary non-zero vector.
  static UnitVector normalized(std::array<double, 3> v);
  static UnitVector random(std::mt19937_64& rng);

  double operator[](int i) const { return c[static_cast<std::size_t>(i)]; }
  double dot(const UnitVector& o) const { return c[0] * o.c[0] + c[1] * o.c[1] + c[2] * o.c[2]; }
};

/// Orthogonal 3x3 matrix; det = +1 (rotation) or -1 (improper rotation).
class Rotation {
 public:
  using Matrix = std::array<std::array<double, 3>, 3>;

  Rotation();
  /// Throws InvalidArgument unless R R^T = I within 1e-12.
  explicit Rotation(const Matrix& m);

  static Rotation identity() { return Rotation(); }
  static Rotation axis_angle(std::array<double, 3> axis, double angle);
  /// Haar-random rotation; with `improper` the result is multiplied by -I.
  static Rotation random(std::mt19937_64& rng, bool improper = false);

  const Matrix& matrix() const { return m_; }
  double operator()(int i, int j) const { return m_[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)]; }
  int parity() const { return parity_; }
  std::array<double, 3> apply(const std::array<double, 3>& v) const;
  UnitVector apply(const UnitVector& v) const;

 private:
  Matrix m_;
  int parity_ = 1;
};

/// Dense rank-l tensor with 3^l row-major components.
class IrrepTensor {
 public:
  IrrepTensor() : IrrepTensor(0) {}
  explicit IrrepTensor(int rank, bool claimed_irreducible = false);
  IrrepTensor(int rank, std::vector<double> components, bool claimed_irreducible = false);

  static IrrepTensor scalar(double value) { return IrrepTensor(0, std::vector<double>{value}); }
  static IrrepTensor vector(std::array<double, 3> v) { return IrrepTensor(1, std::vector<double>{v[0], v[1], v[2]}); }
  /// v^{(x)n}, not symmetric-traceless.
  static IrrepTensor outer_power(const UnitVector& v, int n);

  int rank() const { return rank_; }
  std::size_t size() const { return data_.size(); }
  bool claimed_irreducible() const { return claimed_; }
  void set_claimed_irreducible(bool c) { claimed_ = c; }

  std::span<const double> components() const { return data_; }
  std::span<double> components() { return data_; }
  double operator[](std::size_t i) const { return data_[i]; }
  double& operator[](std::size_t i) { return data_[i]; }
  /// Component lookup by multi-index, e.g. t.at({2, 2, 2}).
  double at(std::initializer_list<int> index) const;
  static std::size_t flat_index(std::span<const int> index);

  IrrepTensor& operator+=(const IrrepTensor& o);
  IrrepTensor& operator-=(const IrrepTensor& o);
  IrrepTensor& operator*=(double s);
  friend IrrepTensor operator+(IrrepTensor a, const IrrepTensor& b) { return a += b; }
  friend IrrepTensor operator-(IrrepTensor a, const IrrepTensor& b) { return a -= b; }
  friend IrrepTensor operator*(IrrepTensor a, double s) { return a *= s; }
  friend IrrepTensor operator*(double s, IrrepTensor a) { return a *= s; }

  double max_abs() const;

 private:
  int rank_ = 0;
  std::vector<double> data_;
  bool claimed_ = false;
};

double max_abs_diff(const IrrepTensor& a, const IrrepTensor& b);

/// Gather table realizing a symmetrization bracket {P (x) I^{(x)m}}.
///
/// The source tensor P is the concatenation of `groups` (each group a set of
/// legs that P is symmetric in), and the bracket sums over the distinct
/// placements of the group legs and m Kronecker pairs among the output slots.
struct BracketTable {
  struct Entry {
    std::uint32_t out;
    std::uint32_t src;
    double weight;
  };

  int rank = 0;
  std::vector<int> groups;
  int pairs = 0;
  std::size_t placements = 0;
  std::size_t source_size = 1;
  std::vector<Entry> entries;  // sorted by (out, src), duplicates merged
};

/// One distinct placement: label[p] = group index or -1 for a Kronecker slot;
/// `pairs` lists the Kronecker slot pairs.
struct Placement {
  std::vector<int> label;
  std::vector<std::pair<int, int>> pairs;
};

std::vector<Placement> enumerate_placements(int rank, std::span<const int> groups, int pairs);
/// Closed form rank! / (prod g! * 2^m * m!).
std::size_t bracket_term_count(int rank, std::span<const int> groups, int pairs);
BracketTable make_bracket_table(int rank, std::span<const int> groups, int pairs);

/// {r^{(x)(l-2m)} (x) I^{(x)m}}, not normalized. Requires 0 <= m <= l/2.
IrrepTensor sym_bracket(const UnitVector& r_hat, int l, int m);

/// Coefficients of the unit-vector construction; tables are cached per rank.
struct IrreducibleTable {
  int rank = 0;
  std::vector<double> coefficients;   // per m, includes (2l-1)!!/l!
  std::vector<BracketTable> brackets;  // per m
};
const IrreducibleTable& irreducible_table(int l);

/// T_l(r_hat): symmetric, traceless, l-fold contraction with r_hat equals 1.
IrrepTensor build_irreducible(const UnitVector& r_hat, int l, int l_cap = kDefaultRankCap);

/// Contracts the first `folds` indices of x with the first `folds` indices of y.
/// Result indices: remaining x indices followed by remaining y indices.
IrrepTensor contract(const IrrepTensor& x, const IrrepTensor& y, int folds);

/// Contracts eps_{i a b} with slots (slot_a, slot_b) of m. The new index is
/// placed first, followed by the remaining indices of m in order.
IrrepTensor levicivita_reduce(const IrrepTensor& m, int slot_a = 0, int slot_b = 1);

struct PropertyReport {
  bool ok = true;
  double max_violation = 0.0;
};

PropertyReport check_symmetric(const IrrepTensor& x, double tol = default_tolerance<double>());
PropertyReport check_traceless(const IrrepTensor& x, double tol = default_tolerance<double>());
bool is_symmetric(const IrrepTensor& x, double tol = default_tolerance<double>());
bool is_traceless(const IrrepTensor& x, double tol = default_tolerance<double>());

/// Max deviation from symmetry over adjacent transpositions (span form).
double symmetry_violation(std::span<const double> data, int rank);
/// Max |trace| over all index pairs (span form).
double trace_violation(std::span<const double> data, int rank);

/// Applies R to every index.
IrrepTensor rotate(const IrrepTensor& x, const Rotation& r);

/// Legendre polynomial P_l(x) by the three-term recurrence.
double legendre(int l, double x);

/// Levi-Civita symbol; honours the test-only fault injection below.
int levi_civita(int i, int j, int k);

namespace testing {
/// While alive, flips the sign of eps_{012}; negative control for check suites.
class ScopedLeviCivitaFault {
 public:
  ScopedLeviCivitaFault();
  ~ScopedLeviCivitaFault();
  ScopedLeviCivitaFault(const ScopedLeviCivitaFault&) = delete;
  ScopedLeviCivitaFault& operator=(const ScopedLeviCivitaFault&) = delete;
};
bool levi_civita_fault_active();
}  // namespace testing

}  // namespace ictp
