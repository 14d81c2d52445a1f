#include "ictp/check.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <ostream>

#include "ictp/core.hpp"
#include "ictp/grad.hpp"
#include "ictp/model.hpp"
#include "ictp/product.hpp"
#include "ictp/spherical.hpp"

namespace ictp {

CheckResult make_result(std::string name, double violation, double tol, std::string detail) {
  CheckResult r;
  r.name = std::move(name);
  r.max_violation = violation;
  r.tolerance = tol;
  r.pass = violation <= tol;  // false for NaN
  r.detail = std::move(detail);
  return r;
}

namespace {

std::string count_detail(int n, const char* what) { return std::to_string(n) + " " + what; }

/// Generic irreducible tensor: a random combination of three unit-vector tensors.
IrrepTensor random_irreducible(std::mt19937_64& rng, int l) {
  std::normal_distribution<double> n(0.0, 1.0);
  IrrepTensor t(l);
  for (int i = 0; i < 3; ++i) t += n(rng) * build_irreducible(UnitVector::random(rng), l);
  return t;
}

ModelConfig check_model(int l_max, int L_max, int nu, ModelVariant v = ModelVariant::full) {
  ModelConfig c;
  c.l_max = l_max;
  c.L_max = L_max;
  c.nu = nu;
  c.layers = 2;
  c.channels = 3;
  c.latent_channels = 2;
  c.cutoff = 3.0;
  c.radial_hidden = {8, 8};
  c.readout_hidden = 4;
  c.variant = v;
  c.species = {1, 6, 8};
  return c;
}

ModelParams check_params(const Model& m, std::uint64_t seed) {
  auto p = m.init_params(seed);
  for (std::size_t s = 0; s < p.shift.size(); ++s) p.shift[s] = -1.0 - 0.5 * static_cast<double>(s);
  p.scale = 0.7;
  return p;
}

AtomicConfiguration random_cluster(std::mt19937_64& rng, int n, double box = 2.6, double min_dist = 0.9) {
  std::uniform_real_distribution<double> u(0.0, box);
  const int species[] = {1, 6, 8};
  AtomicConfiguration c;
  while (static_cast<int>(c.size()) < n) {
    const Vec3 p{u(rng), u(rng), u(rng)};
    bool ok = true;
    for (const auto& q : c.positions) {
      double d2 = 0;
      for (std::size_t k = 0; k < 3; ++k) d2 += (p[k] - q[k]) * (p[k] - q[k]);
      if (d2 < min_dist * min_dist) ok = false;
    }
    if (!ok) continue;
    c.positions.push_back(p);
    c.atomic_numbers.push_back(species[c.size() % 3]);
  }
  return c;
}

}  // namespace

namespace checks {

CheckResult irreducible_symmetric(std::mt19937_64& rng, int l_max, int samples, double tol) {
  double worst = 0;
  for (int s = 0; s < samples; ++s) {
    const auto r = UnitVector::random(rng);
    for (int l = 0; l <= l_max; ++l) {
      const auto t = build_irreducible(r, l);
      worst = std::max(worst, symmetry_violation(t.components(), l));
    }
  }
  return make_result("irreducible.symmetric", worst, tol, count_detail(samples, "directions"));
}

CheckResult irreducible_traceless(std::mt19937_64& rng, int l_max, int samples, double tol) {
  double worst = 0;
  for (int s = 0; s < samples; ++s) {
    const auto r = UnitVector::random(rng);
    for (int l = 0; l <= l_max; ++l) worst = std::max(worst, trace_violation(build_irreducible(r, l).components(), l));
  }
  return make_result("irreducible.traceless", worst, tol, count_detail(samples, "directions"));
}

CheckResult irreducible_unit_contraction(std::mt19937_64& rng, int l_max, int samples, double tol) {
  double worst = 0;
  for (int s = 0; s < samples; ++s) {
    const auto r = UnitVector::random(rng);
    for (int l = 0; l <= l_max; ++l) {
      const double c = contract(build_irreducible(r, l), IrrepTensor::outer_power(r, l), l)[0];
      worst = std::max(worst, std::abs(c - 1.0));
    }
  }
  return make_result("irreducible.unit_contraction", worst, tol, count_detail(samples, "directions"));
}

CheckResult rank3_at_z(double tol) {
  const auto t = build_irreducible(UnitVector(0, 0, 1), 3);
  double worst = 0;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      for (int k = 0; k < 3; ++k) {
        int nz = (i == 2) + (j == 2) + (k == 2);
        int nx = (i == 0) + (j == 0) + (k == 0);
        int ny = (i == 1) + (j == 1) + (k == 1);
        double want = 0.0;
        if (nz == 3) want = 1.0;
        if (nz == 1 && (nx == 2 || ny == 2)) want = -0.5;
        worst = std::max(worst, std::abs(t.at({i, j, k}) - want));
      }
  return make_result("irreducible.rank3_at_z", worst, tol, "T_zzz = 1, T_xxz = -1/2");
}

CheckResult product_normalization(std::mt19937_64& rng, int l_max, int samples, double tol) {
  double worst = 0;
  int triples = 0;
  for (int l1 = 0; l1 <= l_max; ++l1)
    for (int l2 = 0; l2 <= l_max; ++l2)
      for (int l3 = std::abs(l1 - l2); l3 <= std::min(l1 + l2, l_max); ++l3) {
        if (!even_product_allowed(l1, l2, l3)) continue;
        ++triples;
        for (int s = 0; s < samples; ++s) {
          const auto r = UnitVector::random(rng);
          const auto p = product(build_irreducible(r, l1), build_irreducible(r, l2), l3);
          worst = std::max(worst, std::abs(contract(p, IrrepTensor::outer_power(r, l3), l3)[0] - 1.0));
        }
      }
  return make_result("product.unit_normalization", worst, tol,
                     std::to_string(triples) + " even triples x " + std::to_string(samples) + " directions");
}

CheckResult kernel_equivariance(std::mt19937_64& rng, int l_max, int rotations, double tol) {
  double worst = 0;
  for (int n = 0; n < rotations; ++n) {
    const auto R = Rotation::random(rng, n % 2 == 1);
    const auto r = UnitVector::random(rng);
    for (int l = 0; l <= l_max; ++l)
      worst = std::max(worst, max_abs_diff(build_irreducible(R.apply(r), l), rotate(build_irreducible(r, l), R)));
    for (int l1 = 0; l1 <= l_max; ++l1)
      for (int l2 = 0; l2 <= l_max; ++l2) {
        const auto x = random_irreducible(rng, l1), y = random_irreducible(rng, l2);
        const auto rx = rotate(x, R), ry = rotate(y, R);
        for (int l3 = std::abs(l1 - l2); l3 <= std::min(l1 + l2, l_max); ++l3) {
          if (!product_allowed(l1, l2, l3)) continue;
          const bool odd = (l1 + l2 - l3) % 2 != 0;
          // odd products carry one Levi-Civita symbol and pick up det(R)
          const auto want = static_cast<double>(odd ? R.parity() : 1) * rotate(product(x, y, l3), R);
          worst = std::max(worst, max_abs_diff(product(rx, ry, l3), want));
        }
      }
  }
  return make_result("product.equivariance", worst, tol, count_detail(rotations, "O(3) elements, half improper"));
}

CheckResult odd_cross_product(std::mt19937_64& rng, int pairs, double tol) {
  std::normal_distribution<double> n(0.0, 1.0);
  double worst = 0;
  for (int s = 0; s < pairs; ++s) {
    const std::array<double, 3> a{n(rng), n(rng), n(rng)}, b{n(rng), n(rng), n(rng)};
    const auto p = product(IrrepTensor::vector(a), IrrepTensor::vector(b), 1);
    const std::array<double, 3> c{a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]};
    for (std::size_t k = 0; k < 3; ++k) worst = std::max(worst, std::abs(p[k] - c[k]));
  }
  return make_result("product.odd_is_cross_product", worst, tol, count_detail(pairs, "vector pairs"));
}

CheckResult legendre_contraction(std::mt19937_64& rng, int l_max, int pairs, double tol) {
  double worst = 0;
  for (int s = 0; s < pairs; ++s) {
    const auto a = UnitVector::random(rng), b = UnitVector::random(rng);
    for (int l = 0; l <= l_max; ++l) {
      const double c = contract(build_irreducible(a, l), IrrepTensor::outer_power(b, l), l)[0];
      worst = std::max(worst, std::abs(c - legendre(l, a.dot(b))));
    }
  }
  return make_result("irreducible.legendre", worst, tol, count_detail(pairs, "direction pairs"));
}

CheckResult spherical_scalar_cross_check(std::mt19937_64& rng, int l_max, int pairs, double tol) {
  double worst = 0;
  for (int l = 0; l <= std::min(l_max, kMaxSphericalDegree); ++l) {
    double ratio = 0;
    for (int s = 0; s < pairs; ++s) {
      const auto a = UnitVector::random(rng), b = UnitVector::random(rng);
      const double sph = cg_product(real_sh(l, a), real_sh(l, b), 0)[0];
      const double cart = contract(build_irreducible(a, l), IrrepTensor::outer_power(b, l), l)[0];
      if (s == 0) {
        // a fit needs a non-degenerate first pair
        if (std::abs(cart) < 1e-3) {
          --s;
          continue;
        }
        ratio = sph / cart;
      }
      worst = std::max(worst, std::abs(sph - ratio * cart));
    }
  }
  return make_result("spherical.scalar_coupling_matches", worst, tol, count_detail(pairs, "pairs per l"));
}

CheckResult model_rotation_invariance(std::mt19937_64& rng, int rotations, double tol) {
  const Model m(check_model(3, 2, 3));
  const auto p = check_params(m, 11);
  double worst = 0;
  AtomicConfiguration c;
  double e = 0;
  for (int n = 0; n < rotations; ++n) {
    if (n % 20 == 0) {
      c = random_cluster(rng, 6);
      e = energy(m, p, c);
    }
    const auto R = Rotation::random(rng, n % 2 == 1);
    worst = std::max(worst, std::abs(energy(m, p, transform(c, R)) - e));
  }
  return make_result("model.rotation_invariance", worst, tol, count_detail(rotations, "O(3) elements, half improper"));
}

CheckResult model_translation_permutation(std::mt19937_64& rng, int trials, double tol) {
  const Model m(check_model(2, 2, 2, ModelVariant::sym_lt));
  const auto p = check_params(m, 12);
  std::uniform_real_distribution<double> u(-5.0, 5.0);
  double worst = 0;
  for (int n = 0; n < trials; ++n) {
    const auto c = random_cluster(rng, 6);
    const double e = energy(m, p, c);
    auto moved = c;
    const Vec3 t{u(rng), u(rng), u(rng)};
    for (auto& x : moved.positions)
      for (std::size_t k = 0; k < 3; ++k) x[k] += t[k];
    worst = std::max(worst, std::abs(energy(m, p, moved) - e));
    std::vector<std::size_t> perm(c.size());
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    auto shuffled = c;
    for (std::size_t i = 0; i < c.size(); ++i) {
      shuffled.positions[i] = c.positions[perm[i]];
      shuffled.atomic_numbers[i] = c.atomic_numbers[perm[i]];
    }
    worst = std::max(worst, std::abs(energy(m, p, shuffled) - e));
  }
  return make_result("model.translation_permutation", worst, tol, count_detail(trials, "configurations"));
}

CheckResult traceless_intermediates(std::mt19937_64& rng, int configs, double tol) {
  const Model m(check_model(3, 2, 3));
  const auto p = check_params(m, 13);
  double worst = 0;
  std::size_t count = 0;
  for (int n = 0; n < configs; ++n)
    for (const auto& t : collect_intermediates(m, p, random_cluster(rng, 5))) {
      worst = std::max(worst, trace_violation(t.tensor.components(), t.tensor.rank()));
      worst = std::max(worst, symmetry_violation(t.tensor.components(), t.tensor.rank()));
      ++count;
    }
  return make_result("model.traceless_intermediates", worst, tol, std::to_string(count) + " tensors");
}

CheckResult forces_finite_difference(std::mt19937_64& rng, int configs, int atoms, double h, double tol) {
  double worst = 0;
  const ModelVariant variants[] = {ModelVariant::full, ModelVariant::sym, ModelVariant::sym_lt};
  for (int n = 0; n < configs; ++n) {
    const Model m(check_model(2, 2, 3, variants[n % 3]));
    const auto p = check_params(m, 100 + static_cast<std::uint64_t>(n));
    const auto c = random_cluster(rng, atoms);
    const auto f = forces(m, p, c);
    const auto fd = finite_diff_forces(m, p, c, h);
    double err = 0, scale = 0;
    for (std::size_t a = 0; a < c.size(); ++a)
      for (std::size_t k = 0; k < 3; ++k) {
        err = std::max(err, std::abs(f[a][k] - fd[a][k]));
        scale = std::max(scale, std::abs(f[a][k]));
      }
    worst = std::max(worst, err / std::max(scale, 1e-300));
  }
  return make_result("grad.forces_vs_central_differences", worst, tol,
                     std::to_string(configs) + " configurations of " + std::to_string(atoms) + " atoms");
}

CheckResult net_force(std::mt19937_64& rng, int configs, double tol) {
  const Model m(check_model(2, 2, 2));
  const auto p = check_params(m, 14);
  double worst = 0;
  for (int n = 0; n < configs; ++n) {
    Vec3 net{0, 0, 0};
    for (const auto& f : forces(m, p, random_cluster(rng, 6)))
      for (std::size_t k = 0; k < 3; ++k) net[k] += f[k];
    for (double x : net) worst = std::max(worst, std::abs(x));
  }
  return make_result("grad.net_force_zero", worst, tol, count_detail(configs, "configurations"));
}

CheckResult nu1_variant_identity(std::mt19937_64& rng, int configs, double tol) {
  const Model full(check_model(3, 2, 1, ModelVariant::full));
  const Model sym(check_model(3, 2, 1, ModelVariant::sym));
  const auto p = check_params(full, 15);
  double worst = 0;
  for (int n = 0; n < configs; ++n) {
    const auto c = random_cluster(rng, 6);
    worst = std::max(worst, std::abs(energy(full, p, c) - energy(sym, p, c)));
  }
  return make_result("model.nu1_full_equals_sym", worst, tol, count_detail(configs, "configurations"));
}

CheckResult loss_gradient(std::mt19937_64& rng, double tol) {
  const Model m(check_model(2, 1, 2, ModelVariant::sym_lt));
  auto p = check_params(m, 16);
  std::vector<AtomicConfiguration> data{random_cluster(rng, 4), random_cluster(rng, 3)};
  const Model ref(m.config());
  const auto q = ref.init_params(99);
  for (auto& c : data) {
    const auto ef = energy_forces(ref, q, c);
    c.reference_energy = ef.energy;
    c.reference_forces = ef.forces;
  }
  const auto g = param_gradients(m, p, data);
  double worst = 0;
  for (const auto& b : m.layout())
    for (std::size_t i : {std::size_t{0}, b.size / 2, b.size - 1}) {
      const std::size_t j = b.offset + i;
      const double old = p.values[j], h = 1e-5;
      p.values[j] = old + h;
      const double lp = loss(m, p, data).loss;
      p.values[j] = old - h;
      const double lm = loss(m, p, data).loss;
      p.values[j] = old;
      const double fd = (lp - lm) / (2 * h);
      worst = std::max(worst, std::abs(g.grad[j] - fd) / std::max(1.0, std::abs(fd)));
    }
  return make_result("grad.loss_gradient_vs_central_differences", worst, tol,
                     std::to_string(3 * m.layout().size()) + " parameters");
}

}  // namespace checks

std::vector<CheckResult> run_check_suite(const CheckOptions& options) {
  std::mt19937_64 rng(options.seed);
  auto tol = [&](double t) { return options.tolerance.value_or(t); };
  std::vector<CheckResult> out;
  out.push_back(checks::irreducible_symmetric(rng, 4, 200, tol(1e-12)));
  out.push_back(checks::irreducible_traceless(rng, 4, 200, tol(1e-12)));
  out.push_back(checks::irreducible_unit_contraction(rng, 4, 200, tol(1e-12)));
  out.push_back(checks::rank3_at_z(tol(0.0)));
  out.push_back(checks::legendre_contraction(rng, 4, 200, tol(1e-10)));
  out.push_back(checks::spherical_scalar_cross_check(rng, 4, 50, tol(1e-8)));
  out.push_back(checks::product_normalization(rng, 4, 5, tol(1e-10)));
  out.push_back(checks::odd_cross_product(rng, 100, tol(1e-12)));
  out.push_back(checks::kernel_equivariance(rng, 3, 20, tol(1e-10)));
  out.push_back(checks::model_rotation_invariance(rng, 20, tol(1e-8)));
  out.push_back(checks::model_translation_permutation(rng, 3, tol(1e-10)));
  out.push_back(checks::traceless_intermediates(rng, 1, tol(1e-9)));
  out.push_back(checks::nu1_variant_identity(rng, 3, tol(0.0)));
  out.push_back(checks::forces_finite_difference(rng, 3, 6, 1e-4, tol(1e-5)));
  out.push_back(checks::net_force(rng, 3, tol(1e-10)));
  out.push_back(checks::loss_gradient(rng, tol(1e-6)));
  return out;
}

void write_check_report(std::ostream& os, const std::vector<CheckResult>& results) {
  char line[512];
  for (const auto& r : results) {
    std::snprintf(line, sizeof line, "%-44s %-11.3e %-9.1e %s", r.name.c_str(), r.max_violation, r.tolerance,
                  r.pass ? "PASS" : "FAIL");
    os << line;
    if (!r.detail.empty()) os << "  (" << r.detail << ")";
    os << '\n';
  }
}

}  // namespace ictp
