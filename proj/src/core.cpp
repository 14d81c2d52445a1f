#include "ictp/core.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <map>
#include <mutex>
#include <numeric>
#include <string>

#include "ictp/detail/kernels.hpp"
#include "ictp/error.hpp"

namespace ictp {

std::int64_t double_factorial(int n) {
  if (n < -1) throw InvalidArgument("double_factorial: n must be >= -1, got " + std::to_string(n));
  std::int64_t r = 1;
  for (int k = n; k > 1; k -= 2) r *= k;
  return r;
}

std::int64_t factorial(int n) {
  if (n < 0) throw InvalidArgument("factorial: negative argument " + std::to_string(n));
  std::int64_t r = 1;
  for (int k = 2; k <= n; ++k) r *= k;
  return r;
}

// ---------------------------------------------------------------------------
// UnitVector / Rotation

UnitVector::UnitVector(double x, double y, double z) : c{x, y, z} {
  const double n = std::sqrt(x * x + y * y + z * z);
  if (!(std::abs(n - 1.0) <= 1e-12)) throw InvalidArgument("UnitVector: norm deviates from 1");
}

UnitVector UnitVector::normalized(std::array<double, 3> v) {
  const double n = std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]);
  if (!(n > 0.0) || !std::isfinite(n)) throw InvalidArgument("UnitVector: cannot normalize zero vector");
  UnitVector u;
  u.c = {v[0] / n, v[1] / n, v[2] / n};
  return u;
}

UnitVector UnitVector::random(std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  while (true) {
    std::array<double, 3> v{g(rng), g(rng), g(rng)};
    const double n2 = v[0] * v[0] + v[1] * v[1] + v[2] * v[2];
    if (n2 > 1e-8) return normalized(v);
  }
}

Rotation::Rotation() : m_{{{1, 0, 0}, {0, 1, 0}, {0, 0, 1}}} {}

Rotation::Rotation(const Matrix& m) : m_(m) {
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      double s = 0.0;
      for (int k = 0; k < 3; ++k) s += m[i][k] * m[j][k];
      if (std::abs(s - (i == j ? 1.0 : 0.0)) > 1e-12) throw InvalidArgument("Rotation: matrix is not orthogonal");
    }
  const double det = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) -
                     m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0]) +
                     m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
  parity_ = det > 0 ? 1 : -1;
}

Rotation Rotation::axis_angle(std::array<double, 3> axis, double angle) {
  const auto a = UnitVector::normalized(axis);
  const double c = std::cos(angle), s = std::sin(angle), t = 1.0 - c;
  const double x = a[0], y = a[1], z = a[2];
  Matrix m{{{t * x * x + c, t * x * y - s * z, t * x * z + s * y},
            {t * x * y + s * z, t * y * y + c, t * y * z - s * x},
            {t * x * z - s * y, t * y * z + s * x, t * z * z + c}}};
  return Rotation(m);
}

Rotation Rotation::random(std::mt19937_64& rng, bool improper) {
  std::normal_distribution<double> g(0.0, 1.0);
  double q[4];
  double n = 0.0;
  do {
    for (double& v : q) v = g(rng);
    n = std::sqrt(q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]);
  } while (n < 1e-8);
  const double w = q[0] / n, x = q[1] / n, y = q[2] / n, z = q[3] / n;
  Matrix m{{{1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)},
            {2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)},
            {2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)}}};
  if (improper)
    for (auto& row : m)
      for (double& v : row) v = -v;
  return Rotation(m);
}

std::array<double, 3> Rotation::apply(const std::array<double, 3>& v) const {
  std::array<double, 3> r{};
  for (int i = 0; i < 3; ++i) r[i] = m_[i][0] * v[0] + m_[i][1] * v[1] + m_[i][2] * v[2];
  return r;
}

UnitVector Rotation::apply(const UnitVector& v) const { return UnitVector::normalized(apply(v.c)); }

// ---------------------------------------------------------------------------
// IrrepTensor

IrrepTensor::IrrepTensor(int rank, bool claimed) : rank_(rank), claimed_(claimed) {
  if (rank < 0 || rank > 12) throw InvalidArgument("IrrepTensor: rank out of range");
  data_.assign(pow3(rank), 0.0);
}

IrrepTensor::IrrepTensor(int rank, std::vector<double> components, bool claimed)
    : rank_(rank), data_(std::move(components)), claimed_(claimed) {
  if (rank < 0 || rank > 12) throw InvalidArgument("IrrepTensor: rank out of range");
  if (data_.size() != pow3(rank))
    throw InvalidArgument("IrrepTensor: expected " + std::to_string(pow3(rank)) + " components, got " +
                          std::to_string(data_.size()));
}

IrrepTensor IrrepTensor::outer_power(const UnitVector& v, int n) {
  IrrepTensor t(n);
  detail::outer_power(v.c.data(), n, t.data_.data());
  return t;
}

std::size_t IrrepTensor::flat_index(std::span<const int> index) {
  std::size_t f = 0;
  for (int i : index) {
    if (i < 0 || i > 2) throw InvalidArgument("IrrepTensor: index component out of {0,1,2}");
    f = 3 * f + static_cast<std::size_t>(i);
  }
  return f;
}

double IrrepTensor::at(std::initializer_list<int> index) const {
  if (static_cast<int>(index.size()) != rank_) throw InvalidArgument("IrrepTensor::at: index length != rank");
  return data_[flat_index(std::span<const int>(index.begin(), index.size()))];
}

IrrepTensor& IrrepTensor::operator+=(const IrrepTensor& o) {
  if (o.rank_ != rank_) throw InvalidArgument("IrrepTensor: rank mismatch in +=");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
  claimed_ = claimed_ && o.claimed_;
  return *this;
}

IrrepTensor& IrrepTensor::operator-=(const IrrepTensor& o) {
  if (o.rank_ != rank_) throw InvalidArgument("IrrepTensor: rank mismatch in -=");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= o.data_[i];
  claimed_ = claimed_ && o.claimed_;
  return *this;
}

IrrepTensor& IrrepTensor::operator*=(double s) {
  for (double& v : data_) v *= s;
  return *this;
}

double IrrepTensor::max_abs() const {
  double m = 0.0;
  for (double v : data_) m = std::max(m, std::abs(v));
  return m;
}

double max_abs_diff(const IrrepTensor& a, const IrrepTensor& b) {
  if (a.rank() != b.rank()) throw InvalidArgument("max_abs_diff: rank mismatch");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

// ---------------------------------------------------------------------------
// Symmetrization bracket

namespace {

void place_rec(int pos, std::vector<int>& label, std::vector<int>& remaining, int pairs_left,
               std::vector<std::pair<int, int>>& pairs, std::vector<Placement>& out) {
  const int l = static_cast<int>(label.size());
  while (pos < l && label[pos] != -2) ++pos;
  if (pos == l) {
    out.push_back({label, pairs});
    return;
  }
  for (std::size_t g = 0; g < remaining.size(); ++g) {
    if (remaining[g] == 0) continue;
    --remaining[g];
    label[pos] = static_cast<int>(g);
    place_rec(pos + 1, label, remaining, pairs_left, pairs, out);
    label[pos] = -2;
    ++remaining[g];
  }
  if (pairs_left > 0) {
    for (int q = pos + 1; q < l; ++q) {
      if (label[q] != -2) continue;
      label[pos] = label[q] = -1;
      pairs.emplace_back(pos, q);
      place_rec(pos + 1, label, remaining, pairs_left - 1, pairs, out);
      pairs.pop_back();
      label[pos] = label[q] = -2;
    }
  }
}

void validate_bracket(int rank, std::span<const int> groups, int pairs) {
  int legs = 0;
  for (int g : groups) {
    if (g < 0) throw InvalidArgument("bracket: negative group size");
    legs += g;
  }
  if (pairs < 0 || legs + 2 * pairs != rank) throw InvalidArgument("bracket: legs + 2*pairs must equal rank");
}

}  // namespace

std::vector<Placement> enumerate_placements(int rank, std::span<const int> groups, int pairs) {
  validate_bracket(rank, groups, pairs);
  std::vector<int> label(static_cast<std::size_t>(rank), -2);
  std::vector<int> remaining(groups.begin(), groups.end());
  std::vector<std::pair<int, int>> pr;
  std::vector<Placement> out;
  place_rec(0, label, remaining, pairs, pr, out);
  return out;
}

std::size_t bracket_term_count(int rank, std::span<const int> groups, int pairs) {
  validate_bracket(rank, groups, pairs);
  std::int64_t denom = factorial(pairs);
  for (int i = 0; i < pairs; ++i) denom *= 2;
  for (int g : groups) denom *= factorial(g);
  return static_cast<std::size_t>(factorial(rank) / denom);
}

BracketTable make_bracket_table(int rank, std::span<const int> groups, int pairs) {
  BracketTable t;
  t.rank = rank;
  t.groups.assign(groups.begin(), groups.end());
  t.pairs = pairs;
  const auto placements = enumerate_placements(rank, groups, pairs);
  t.placements = placements.size();
  int legs = 0;
  for (int g : groups) legs += g;
  t.source_size = pow3(legs);

  std::map<std::pair<std::uint32_t, std::uint32_t>, double> acc;
  const std::size_t n_out = pow3(rank);
  std::vector<int> digits(static_cast<std::size_t>(rank));
  std::vector<int> order;  // output slots feeding the source axes, group-major
  for (const auto& p : placements) {
    order.clear();
    for (std::size_t g = 0; g < groups.size(); ++g)
      for (int s = 0; s < rank; ++s)
        if (p.label[static_cast<std::size_t>(s)] == static_cast<int>(g)) order.push_back(s);
    for (std::size_t idx = 0; idx < n_out; ++idx) {
      std::size_t rem = idx;
      for (int i = rank - 1; i >= 0; --i) {
        digits[static_cast<std::size_t>(i)] = static_cast<int>(rem % 3);
        rem /= 3;
      }
      bool ok = true;
      for (const auto& [a, b] : p.pairs)
        if (digits[static_cast<std::size_t>(a)] != digits[static_cast<std::size_t>(b)]) {
          ok = false;
          break;
        }
      if (!ok) continue;
      std::size_t src = 0;
      for (int s : order) src = 3 * src + static_cast<std::size_t>(digits[static_cast<std::size_t>(s)]);
      acc[{static_cast<std::uint32_t>(idx), static_cast<std::uint32_t>(src)}] += 1.0;
    }
  }
  t.entries.reserve(acc.size());
  for (const auto& [key, w] : acc) t.entries.push_back({key.first, key.second, w});
  return t;
}

IrrepTensor sym_bracket(const UnitVector& r_hat, int l, int m) {
  if (l < 0 || m < 0 || 2 * m > l) throw InvalidArgument("sym_bracket: require 0 <= m <= l/2");
  const int legs = l - 2 * m;
  std::vector<int> groups;
  if (legs > 0) groups.push_back(legs);
  const auto table = make_bracket_table(l, groups, m);
  const auto power = IrrepTensor::outer_power(r_hat, legs);
  IrrepTensor out(l);
  detail::bracket_apply(table, power.components().data(), out.components().data(), 1.0);
  return out;
}

// ---------------------------------------------------------------------------
// Unit-vector construction

namespace {

IrreducibleTable make_irreducible_table(int l) {
  IrreducibleTable t;
  t.rank = l;
  const double c = static_cast<double>(double_factorial(2 * l - 1)) / static_cast<double>(factorial(l));
  for (int m = 0; m <= l / 2; ++m) {
    const double sign = (m % 2 == 0) ? 1.0 : -1.0;
    t.coefficients.push_back(c * sign * static_cast<double>(double_factorial(2 * l - 2 * m - 1)) /
                             static_cast<double>(double_factorial(2 * l - 1)));
    std::vector<int> groups;
    if (l - 2 * m > 0) groups.push_back(l - 2 * m);
    t.brackets.push_back(make_bracket_table(l, groups, m));
  }
  return t;
}

}  // namespace

const IrreducibleTable& irreducible_table(int l) {
  constexpr int kMax = 8;
  if (l < 0 || l > kMax) throw InvalidArgument("irreducible_table: rank out of range");
  static std::once_flag flags[kMax + 1];
  static IrreducibleTable tables[kMax + 1];
  std::call_once(flags[l], [l] { tables[l] = make_irreducible_table(l); });
  return tables[l];
}

IrrepTensor build_irreducible(const UnitVector& r_hat, int l, int l_cap) {
  if (l < 0) throw InvalidArgument("build_irreducible: negative rank");
  if (l > l_cap || l > 8)
    throw InvalidArgument("build_irreducible: rank " + std::to_string(l) + " exceeds cap " + std::to_string(l_cap));
  IrrepTensor t(l, true);
  detail::build_irreducible(r_hat.c.data(), l, t.components().data());
  return t;
}

// ---------------------------------------------------------------------------
// Contractions

IrrepTensor contract(const IrrepTensor& x, const IrrepTensor& y, int folds) {
  if (folds < 0 || folds > x.rank() || folds > y.rank())
    throw InvalidArgument("contract: fold count exceeds operand rank");
  IrrepTensor out(x.rank() + y.rank() - 2 * folds);
  detail::contract_leading(x.components().data(), x.rank(), y.components().data(), y.rank(), folds,
                           out.components().data());
  return out;
}

namespace {
std::atomic<bool> g_levi_fault{false};
}

int levi_civita(int i, int j, int k) {
  int s = 0;
  if (i != j && j != k && i != k) s = ((j - i + 3) % 3 == 1) ? 1 : -1;
  if (s != 0 && i == 0 && j == 1 && k == 2 && g_levi_fault.load(std::memory_order_relaxed)) s = -s;
  return s;
}

namespace testing {
ScopedLeviCivitaFault::ScopedLeviCivitaFault() { g_levi_fault.store(true); }
ScopedLeviCivitaFault::~ScopedLeviCivitaFault() { g_levi_fault.store(false); }
bool levi_civita_fault_active() { return g_levi_fault.load(); }
}  // namespace testing

IrrepTensor levicivita_reduce(const IrrepTensor& m, int slot_a, int slot_b) {
  const int l = m.rank();
  if (l < 2) throw InvalidArgument("levicivita_reduce: rank must be >= 2");
  if (slot_a < 0 || slot_b < 0 || slot_a >= l || slot_b >= l || slot_a == slot_b)
    throw InvalidArgument("levicivita_reduce: invalid slots");
  IrrepTensor out(l - 1);
  std::vector<int> digits(static_cast<std::size_t>(l));
  for (std::size_t idx = 0; idx < m.size(); ++idx) {
    std::size_t rem = idx;
    for (int s = l - 1; s >= 0; --s) {
      digits[static_cast<std::size_t>(s)] = static_cast<int>(rem % 3);
      rem /= 3;
    }
    const int a = digits[static_cast<std::size_t>(slot_a)], b = digits[static_cast<std::size_t>(slot_b)];
    std::size_t rest = 0;
    for (int s = 0; s < l; ++s)
      if (s != slot_a && s != slot_b) rest = 3 * rest + static_cast<std::size_t>(digits[static_cast<std::size_t>(s)]);
    for (int i = 0; i < 3; ++i) {
      const int e = levi_civita(i, a, b);
      if (e != 0) out[static_cast<std::size_t>(i) * pow3(l - 2) + rest] += e * m[idx];
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Property checks

double symmetry_violation(std::span<const double> data, int rank) {
  double worst = 0.0;
  if (rank < 2) return 0.0;
  const std::size_t n = pow3(rank);
  for (int s = 0; s + 1 < rank; ++s) {
    const std::size_t hi = pow3(rank - s - 1);  // stride of slot s
    const std::size_t lo = pow3(rank - s - 2);  // stride of slot s+1
    for (std::size_t idx = 0; idx < n; ++idx) {
      const std::size_t a = (idx / hi) % 3, b = (idx / lo) % 3;
      const std::size_t swapped = idx - a * hi - b * lo + b * hi + a * lo;
      worst = std::max(worst, std::abs(data[idx] - data[swapped]));
    }
  }
  return worst;
}

double trace_violation(std::span<const double> data, int rank) {
  double worst = 0.0;
  if (rank < 2) return 0.0;
  const std::size_t n = pow3(rank);
  std::vector<double> traces(pow3(rank - 2));
  for (int p = 0; p < rank; ++p)
    for (int q = p + 1; q < rank; ++q) {
      std::fill(traces.begin(), traces.end(), 0.0);
      const std::size_t sp = pow3(rank - p - 1), sq = pow3(rank - q - 1);
      for (std::size_t idx = 0; idx < n; ++idx) {
        const std::size_t a = (idx / sp) % 3, b = (idx / sq) % 3;
        if (a != b) continue;
        // drop slots p and q from the index
        std::size_t rest = 0;
        for (int s = 0; s < rank; ++s) {
          if (s == p || s == q) continue;
          rest = 3 * rest + (idx / pow3(rank - s - 1)) % 3;
        }
        traces[rest] += data[idx];
      }
      for (double t : traces) worst = std::max(worst, std::abs(t));
    }
  return worst;
}

PropertyReport check_symmetric(const IrrepTensor& x, double tol) {
  const double v = symmetry_violation(x.components(), x.rank());
  return {v <= tol, v};
}

PropertyReport check_traceless(const IrrepTensor& x, double tol) {
  const double v = trace_violation(x.components(), x.rank());
  return {v <= tol, v};
}

bool is_symmetric(const IrrepTensor& x, double tol) { return check_symmetric(x, tol).ok; }
bool is_traceless(const IrrepTensor& x, double tol) { return check_traceless(x, tol).ok; }

IrrepTensor rotate(const IrrepTensor& x, const Rotation& r) {
  const int l = x.rank();
  std::vector<double> cur(x.components().begin(), x.components().end());
  std::vector<double> next(cur.size());
  for (int s = 0; s < l; ++s) {
    const std::size_t stride = pow3(l - s - 1);
    std::fill(next.begin(), next.end(), 0.0);
    for (std::size_t idx = 0; idx < cur.size(); ++idx) {
      const std::size_t j = (idx / stride) % 3;
      const std::size_t base = idx - j * stride;
      for (std::size_t i = 0; i < 3; ++i) next[base + i * stride] += r(static_cast<int>(i), static_cast<int>(j)) * cur[idx];
    }
    std::swap(cur, next);
  }
  return IrrepTensor(l, std::move(cur), x.claimed_irreducible());
}

double legendre(int l, double x) {
  if (l < 0) throw InvalidArgument("legendre: negative degree");
  if (std::abs(x) > 1.0 + 1e-12) throw InvalidArgument("legendre: |x| > 1");
  if (l == 0) return 1.0;
  double p0 = 1.0, p1 = x;
  for (int n = 2; n <= l; ++n) {
    const double p2 = ((2.0 * n - 1.0) * x * p1 - (n - 1.0) * p0) / n;
    p0 = p1;
    p1 = p2;
  }
  return p1;
}

}  // namespace ictp
