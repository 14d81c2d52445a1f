#include <doctest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "ictp/error.hpp"
#include "ictp/model.hpp"
#include "model_fixtures.hpp"

using namespace ictp;

namespace {

double model_energy(const Model& m, const ModelParams& p, const AtomicConfiguration& c) { return energy(m, p, c); }

AtomicConfiguration line_trimer(double d) {
  AtomicConfiguration c;
  c.positions = {{0, 0, 0}, {0, 0, d}, {0, 0, -d}};
  c.atomic_numbers = {6, 1, 1};
  return c;
}

}  // namespace

TEST_CASE("radial basis and envelope") {
  CHECK(poly_cutoff(0.0, 5.0, 5) == 1.0);
  CHECK(poly_cutoff(5.0, 5.0, 5) == 0.0);
  CHECK(poly_cutoff(7.0, 5.0, 5) == 0.0);
  CHECK(poly_cutoff(2.5, 5.0, 5) == doctest::Approx(99.0 / 128.0).epsilon(1e-15));
  const auto b = bessel_basis(2.5, 5.0, 8);
  CHECK(b.size() == 8);
  CHECK(b[0] / poly_cutoff(2.5, 5.0, 5) == doctest::Approx(2.0 * std::sqrt(2.0 / 5.0) / 5.0).epsilon(1e-14));
  CHECK(b[0] / poly_cutoff(2.5, 5.0, 5) == doctest::Approx(0.25298).epsilon(1e-4));
  for (double x : bessel_basis(5.0, 5.0, 8)) CHECK(x == 0.0);
  CHECK_THROWS_AS(bessel_basis(0.0, 5.0, 8), InvalidArgument);
  CHECK_THROWS_AS(bessel_basis(-1.0, 5.0, 8), InvalidArgument);

  // value, slope and curvature vanish at the cutoff
  const double h = 1e-4, rc = 5.0;
  const double f1 = poly_cutoff(rc - h, rc, 5), f2 = poly_cutoff(rc - 2 * h, rc, 5);
  CHECK(std::abs(f1) < 1e-9);
  CHECK(std::abs((f1 - 0.0) / h) < 1e-6);
  CHECK(std::abs((f2 - 2 * f1) / (h * h)) < 1e-3);
}

TEST_CASE("model structure") {
  const Model full(fixture::small_config(1, 1, 2));
  const Model sym(fixture::small_config(1, 1, 2, ModelVariant::sym));
  auto count = [](const Model& m, int L, int order) {
    int n = 0;
    for (const auto& p : m.paths()) n += p.spec.target == L && p.spec.order() == order;
    return n;
  };
  CHECK(count(full, 1, 2) == 2);
  CHECK(count(sym, 1, 2) == 1);
  CHECK(count(full, 0, 1) == 1);
  CHECK(full.num_params() > sym.num_params());
  CHECK_THROWS_AS(Model(fixture::small_config(1, 2, 2)), InvalidArgument);
  auto bad = fixture::small_config();
  bad.species = {6, 1};
  CHECK_THROWS_AS(Model{bad}, InvalidArgument);
  CHECK_THROWS_AS(full.species_index(26), DataError);
  CHECK(parse_model_variant("sym+lt") == ModelVariant::sym_lt);
  CHECK_THROWS_AS(parse_model_variant("spherical"), InvalidArgument);
  for (const char* name : {"large", "desk", "bench"}) CHECK_NOTHROW(ModelConfig::preset(name).validate());

  // every block is laid out contiguously
  std::size_t next = 0;
  for (const auto& b : full.layout()) {
    CHECK(b.offset == next);
    next += b.size;
  }
  CHECK(next == full.num_params());
}

TEST_CASE("product weight initialization statistics") {
  for (auto v : {ModelVariant::full, ModelVariant::sym_lt}) {
    auto cfg = fixture::small_config(2, 2, 3, v);
    cfg.channels = 64;
    cfg.latent_channels = 6;
    const Model m(cfg);
    const auto p = m.init_params(3);
    const auto& blk = m.block("layer1.message");
    const std::size_t per_path = v == ModelVariant::sym_lt ? 64 * 6 : 64;
    double sum2 = 0;
    std::size_t n = 0, i = blk.offset;
    for (int s = 0; s < m.num_species(); ++s)
      for (const auto& path : m.paths()) {
        double want = 1.0 / static_cast<double>(path.group_size);
        if (v == ModelVariant::sym_lt) want /= std::sqrt(6.0);
        for (std::size_t j = 0; j < per_path; ++j, ++n) sum2 += std::pow(p.values[i++] / want, 2);
      }
    REQUIRE(n >= 10000);
    CHECK(std::abs(sum2 / static_cast<double>(n) - 1.0) < 0.2);
  }
  const Model m(fixture::small_config());
  CHECK(m.init_params(5).values == m.init_params(5).values);
  CHECK(m.init_params(5).values != m.init_params(6).values);
}

TEST_CASE("isolated atom and empty sums") {
  const Model m(fixture::small_config());
  const auto p = fixture::random_params(m, 1);
  AtomicConfiguration c;
  c.positions = {{0.3, 0.1, -2.0}};
  c.atomic_numbers = {8};
  CHECK(model_energy(m, p, c) == p.shift[2]);
  const auto nl = build_neighbor_list(c, m.config().cutoff);
  const auto ev = evaluate<double>(m, p, c, nl, c.positions);
  for (double x : ev.grad_positions[0]) CHECK(x == 0.0);

  // zero readouts leave only the shifts
  auto q = p;
  for (const auto& b : m.layout())
    if (b.group == ParamGroup::readout)
      for (std::size_t i = 0; i < b.size; ++i) q.values[b.offset + i] = 0.0;
  std::mt19937_64 rng(2);
  const auto cluster = fixture::random_cluster(rng, 5);
  double shifts = 0;
  for (int z : cluster.atomic_numbers) shifts += q.shift[static_cast<std::size_t>(m.species_index(z))];
  CHECK(model_energy(m, q, cluster) == doctest::Approx(shifts).epsilon(1e-15));
  c.atomic_numbers = {26};
  CHECK_THROWS_AS(model_energy(m, p, c), DataError);
}

TEST_CASE("two-body features of a symmetric trimer") {
  const Model m(fixture::small_config(2, 1, 1));
  const auto p = m.init_params(4);
  const auto inter = collect_intermediates(m, p, line_trimer(1.2));
  double rank1 = 0, rank2 = 0;
  for (const auto& t : inter)
    if (t.kind == "A" && t.layer == 1 && t.atom == 0) {
      if (t.tensor.rank() == 1) rank1 = std::max(rank1, t.tensor.max_abs());
      if (t.tensor.rank() == 2) rank2 = std::max(rank2, t.tensor.max_abs());
    }
  CHECK(rank1 < 1e-14);  // T_1 is odd under r -> -r
  CHECK(rank2 > 1e-3);   // T_2 survives

  // a single neighbor gives A proportional to T_l(r_hat)
  AtomicConfiguration dimer;
  dimer.positions = {{0, 0, 0}, {0.6, 0.0, 0.8}};
  dimer.atomic_numbers = {1, 6};
  const auto t2 = build_irreducible(UnitVector(-0.6, 0.0, -0.8), 2);
  for (const auto& t : collect_intermediates(m, p, dimer))
    if (t.kind == "A" && t.layer == 1 && t.atom == 0 && t.tensor.rank() == 2) {
      const double ratio = t.tensor[8] / t2[8];
      CHECK(max_abs_diff(t.tensor, ratio * t2) < 1e-12);
    }
}

TEST_CASE("nu = 1 variants agree bit for bit") {
  std::mt19937_64 rng(11);
  const Model full(fixture::small_config(2, 2, 1, ModelVariant::full));
  const Model sym(fixture::small_config(2, 2, 1, ModelVariant::sym));
  REQUIRE(full.num_params() == sym.num_params());
  const auto p = full.init_params(8);
  for (int trial = 0; trial < 5; ++trial) {
    const auto c = fixture::random_cluster(rng, 6);
    CHECK(model_energy(full, p, c) == model_energy(sym, p, c));
  }
}

TEST_CASE("energy invariances") {
  std::mt19937_64 rng(21);
  for (auto v : {ModelVariant::full, ModelVariant::sym, ModelVariant::sym_lt}) {
    const Model m(fixture::small_config(2, 2, 2, v));
    const auto p = fixture::random_params(m, 17);
    for (int trial = 0; trial < 4; ++trial) {
      const auto c = fixture::random_cluster(rng, 7);
      const double e = model_energy(m, p, c);
      CHECK(std::isfinite(e));
      const auto R = Rotation::random(rng, trial % 2 == 1);
      CHECK(std::abs(model_energy(m, p, transform(c, R)) - e) < 1e-8);

      auto moved = c;
      for (auto& x : moved.positions)
        for (auto& q : x) q += 0.5;  // dyadic, so differences are exact
      CHECK(model_energy(m, p, moved) == e);

      std::vector<std::size_t> perm(c.size());
      std::iota(perm.begin(), perm.end(), 0);
      std::shuffle(perm.begin(), perm.end(), rng);
      AtomicConfiguration shuffled = c;
      for (std::size_t i = 0; i < c.size(); ++i) {
        shuffled.positions[i] = c.positions[perm[i]];
        shuffled.atomic_numbers[i] = c.atomic_numbers[perm[i]];
      }
      CHECK(std::abs(model_energy(m, p, shuffled) - e) < 1e-12 * std::max(1.0, std::abs(e)));
    }
  }
}

TEST_CASE("intermediates stay traceless") {
  std::mt19937_64 rng(31);
  auto cfg = fixture::small_config(3, 2, 3);
  cfg.channels = 2;
  const Model m(cfg);
  const auto p = m.init_params(2);
  const auto c = fixture::random_cluster(rng, 5);
  double worst = 0, biggest = 0;
  std::size_t count = 0;
  for (const auto& t : collect_intermediates(m, p, c)) {
    worst = std::max(worst, trace_violation(t.tensor.components(), t.tensor.rank()));
    worst = std::max(worst, symmetry_violation(t.tensor.components(), t.tensor.rank()));
    biggest = std::max(biggest, t.tensor.max_abs());
    ++count;
  }
  CHECK(count > 100);
  CHECK(biggest > 1e-3);
  CHECK(worst < 1e-9);
}

TEST_CASE("forces match central differences") {
  std::mt19937_64 rng(41);
  for (auto v : {ModelVariant::full, ModelVariant::sym_lt}) {
    const Model m(fixture::small_config(2, 2, 2, v));
    const auto p = fixture::random_params(m, 5);
    const auto c = fixture::random_cluster(rng, 5);
    const auto nl = build_neighbor_list(c, m.config().cutoff);
    const auto ev = evaluate<double>(m, p, c, nl, c.positions);
    const double h = 1e-4;
    for (std::size_t a = 0; a < c.size(); ++a)
      for (std::size_t k = 0; k < 3; ++k) {
        auto plus = c.positions, minus = c.positions;
        plus[a][k] += h;
        minus[a][k] -= h;
        // keep the graph fixed so that only the smooth envelope matters
        const double ep = evaluate<double>(m, p, c, nl, plus, {false, false}).energy;
        const double em = evaluate<double>(m, p, c, nl, minus, {false, false}).energy;
        const double fd = (ep - em) / (2 * h);
        CHECK(ev.grad_positions[a][k] == doctest::Approx(fd).epsilon(1e-6).scale(1e-3));
      }
  }
}

TEST_CASE("parameter gradients match central differences") {
  std::mt19937_64 rng(43);
  const Model m(fixture::small_config(2, 1, 2, ModelVariant::sym_lt));
  auto p = fixture::random_params(m, 9);
  const auto c = fixture::random_cluster(rng, 4);
  const auto nl = build_neighbor_list(c, m.config().cutoff);
  const auto ev = evaluate<double>(m, p, c, nl, c.positions, {false, true});
  REQUIRE(ev.grad_params.size() == m.num_params());
  for (const auto& b : m.layout()) {
    for (std::size_t i : {std::size_t{0}, b.size / 2, b.size - 1}) {
      const std::size_t j = b.offset + i;
      const double h = 1e-5 * std::max(1.0, std::abs(p.values[j]));
      const double old = p.values[j];
      p.values[j] = old + h;
      const double ep = evaluate<double>(m, p, c, nl, c.positions, {false, false}).energy;
      p.values[j] = old - h;
      const double em = evaluate<double>(m, p, c, nl, c.positions, {false, false}).energy;
      p.values[j] = old;
      CHECK_MESSAGE(ev.grad_params[j] == doctest::Approx((ep - em) / (2 * h)).epsilon(1e-6).scale(1e-4), b.name);
    }
  }
}
