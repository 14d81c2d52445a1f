#include <doctest.h>

#include <cmath>
#include <random>

#include "ictp/error.hpp"
#include "ictp/grad.hpp"
#include "model_fixtures.hpp"

using namespace ictp;

namespace {

void label(const Model& m, const ModelParams& p, std::vector<AtomicConfiguration>& data) {
  for (auto& c : data) {
    const auto ef = energy_forces(m, p, c);
    c.reference_energy = ef.energy;
    c.reference_forces = ef.forces;
  }
}

}  // namespace

TEST_CASE("forces agree with finite differences") {
  std::mt19937_64 rng(101);
  for (auto v : {ModelVariant::full, ModelVariant::sym, ModelVariant::sym_lt}) {
    const Model m(fixture::small_config(2, 2, 3, v));
    for (int trial = 0; trial < 3; ++trial) {
      const auto p = fixture::random_params(m, 1000 + static_cast<std::uint64_t>(trial));
      const auto c = fixture::random_cluster(rng, 6);
      const auto f = forces(m, p, c);
      const auto fd = finite_diff_forces(m, p, c, 1e-4);
      for (std::size_t a = 0; a < c.size(); ++a)
        for (std::size_t k = 0; k < 3; ++k)
          CHECK(std::abs(f[a][k] - fd[a][k]) <= std::max(1e-6, 1e-5 * std::abs(f[a][k])));
    }
  }
}

TEST_CASE("finite-difference error is V-shaped in h") {
  std::mt19937_64 rng(102);
  const Model m(fixture::small_config());
  const auto p = fixture::random_params(m, 3);
  const auto c = fixture::random_cluster(rng, 4);
  const auto f = forces(m, p, c);
  std::vector<double> err;
  for (double h : {1e-2, 1e-3, 1e-4, 1e-5, 1e-9}) {
    const auto fd = finite_diff_forces(m, p, c, h);
    double e = 0;
    for (std::size_t a = 0; a < c.size(); ++a)
      for (std::size_t k = 0; k < 3; ++k) e = std::max(e, std::abs(fd[a][k] - f[a][k]));
    err.push_back(e);
  }
  // truncation regime: O(h^2)
  CHECK(err[1] / err[2] > 30.0);
  CHECK(err[0] / err[1] > 30.0);
  // roundoff regime rises again
  CHECK(err[4] > *std::min_element(err.begin(), err.end()) * 10.0);
  CHECK_THROWS_AS(finite_diff_forces(m, p, c, 0.0), InvalidArgument);

  auto moved = c;
  for (auto& x : moved.positions) x[1] += 0.25;
  const auto a = finite_diff_forces(m, p, c), b = finite_diff_forces(m, p, moved);
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t k = 0; k < 3; ++k) CHECK(std::abs(a[i][k] - b[i][k]) < 1e-8);
}

TEST_CASE("force symmetries") {
  std::mt19937_64 rng(103);
  const Model m(fixture::small_config(2, 2, 2));
  const auto p = fixture::random_params(m, 4);
  for (int trial = 0; trial < 4; ++trial) {
    const auto c = fixture::random_cluster(rng, 6);
    const auto f = forces(m, p, c);
    Vec3 net{0, 0, 0};
    for (const auto& x : f)
      for (std::size_t k = 0; k < 3; ++k) net[k] += x[k];
    for (double x : net) CHECK(std::abs(x) < 1e-8);

    const auto R = Rotation::random(rng, trial % 2 == 0);
    const auto fr = forces(m, p, transform(c, R));
    for (std::size_t a = 0; a < c.size(); ++a) {
      const auto want = R.apply(f[a]);
      for (std::size_t k = 0; k < 3; ++k) CHECK(std::abs(fr[a][k] - want[k]) < 1e-6);
    }
  }
  AtomicConfiguration dimer;
  dimer.positions = {{0.1, 0.2, 0.3}, {0.9, 1.0, 1.1}};
  dimer.atomic_numbers = {1, 1};
  const auto fd = forces(m, p, dimer);
  for (std::size_t k = 0; k < 3; ++k) {
    CHECK(fd[0][k] == doctest::Approx(-fd[1][k]).epsilon(1e-10));
    CHECK(fd[0][k] == doctest::Approx(fd[0][0]).epsilon(1e-10));  // along (1,1,1)
  }
  AtomicConfiguration single;
  single.positions = {{0, 0, 0}};
  single.atomic_numbers = {6};
  const auto f1 = forces(m, p, single);
  for (double x : f1[0]) CHECK(x == 0.0);
}

TEST_CASE("loss values") {
  const Model m(fixture::small_config());
  auto p = m.init_params(1);
  for (const auto& b : m.layout())
    if (b.group == ParamGroup::readout)
      for (std::size_t i = 0; i < b.size; ++i) p.values[b.offset + i] = 0.0;
  p.shift = {-1.0, 0.0, 0.0};
  AtomicConfiguration c;
  c.positions = {{0, 0, 0}, {0, 0, 1}};
  c.atomic_numbers = {1, 1};
  c.reference_energy = -1.5;
  c.reference_forces = std::vector<Vec3>{{0, 0, 0.1}, {0, 0, -0.1}};
  // E = -2, F = 0: C_e = 1/2 -> 0.5 * 0.25, C_f = 10 -> 10 * 0.02
  const auto l = loss(m, p, {c});
  CHECK(l.loss == doctest::Approx(0.325).epsilon(1e-14));
  CHECK(l.energy_term == doctest::Approx(0.125).epsilon(1e-14));
  CHECK(l.force_mae() == doctest::Approx(0.2 / 6.0).epsilon(1e-14));

  LossConfig energy_only;
  energy_only.force_weight = 0;
  CHECK(loss(m, p, {c}, energy_only).loss == doctest::Approx(0.125).epsilon(1e-14));

  LossConfig batch_norm;
  batch_norm.normalization = LossNormalization::per_batch;
  batch_norm.force_weight = 1000;
  CHECK(loss(m, p, {c, c}, batch_norm).loss == doctest::Approx(2 * (0.25 / 4 + 1000.0 / 12 * 0.02)).epsilon(1e-13));

  std::mt19937_64 rng(5);
  auto data = std::vector<AtomicConfiguration>{fixture::random_cluster(rng, 4), fixture::random_cluster(rng, 3)};
  const auto q = fixture::random_params(m, 2);
  label(m, q, data);
  CHECK(loss(m, q, data).loss == 0.0);
  CHECK(loss(m, p, data).loss > 0.0);
  data[0].reference_forces.reset();
  CHECK_THROWS_AS(loss(m, q, data), DataError);
  LossConfig negative;
  negative.energy_weight = -1;
  CHECK_THROWS_AS(loss(m, q, {c}, negative), InvalidArgument);
}

TEST_CASE("loss gradient matches central differences") {
  std::mt19937_64 rng(104);
  for (auto v : {ModelVariant::full, ModelVariant::sym_lt}) {
    const Model m(fixture::small_config(2, 1, 2, v));
    auto p = fixture::random_params(m, 6);
    std::vector<AtomicConfiguration> data{fixture::random_cluster(rng, 4), fixture::random_cluster(rng, 3)};
    label(m, m.init_params(99), data);
    const auto g = param_gradients(m, p, data);
    CHECK(g.value.loss == doctest::Approx(loss(m, p, data).loss).epsilon(1e-12));
    for (const auto& b : m.layout())
      for (std::size_t i : {std::size_t{0}, b.size / 3, b.size - 1}) {
        const std::size_t j = b.offset + i;
        const double old = p.values[j], h = 1e-5;
        p.values[j] = old + h;
        const double lp = loss(m, p, data).loss;
        p.values[j] = old - h;
        const double lm = loss(m, p, data).loss;
        p.values[j] = old;
        const double fd = (lp - lm) / (2 * h);
        CHECK_MESSAGE(std::abs(g.grad[j] - fd) <= 1e-6 * std::max(1.0, std::abs(fd)), b.name, " ", i);
      }
  }
}

TEST_CASE("loss gradient bookkeeping") {
  std::mt19937_64 rng(105);
  auto cfg = fixture::small_config();
  cfg.species = {1, 6, 8, 9};  // fluorine never appears
  const Model m(cfg);
  const auto p = fixture::random_params(m, 7);
  std::vector<AtomicConfiguration> data;
  for (int i = 0; i < 5; ++i) data.push_back(fixture::random_cluster(rng, 3 + i % 2));
  label(m, m.init_params(3), data);

  const auto serial = param_gradients(m, p, data, {}, 1);
  const auto threaded = param_gradients(m, p, data, {}, 3);
  CHECK(serial.grad == threaded.grad);
  CHECK(serial.value.loss == threaded.value.loss);

  const auto& emb = m.block("embedding");  // shape [d][species]
  for (std::size_t k = 0; k < emb.shape[0]; ++k) CHECK(serial.grad[emb.offset + k * 4 + 3] == 0.0);

  LossConfig off;
  off.energy_weight = 0;
  off.force_weight = 0;
  for (double x : param_gradients(m, p, data, off).grad) CHECK(x == 0.0);
}
