#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <sstream>

#include "ictp/error.hpp"
#include "ictp/train.hpp"
#include "model_fixtures.hpp"

using namespace ictp;

TEST_CASE("AMSGrad first step from zero state") {
  const Model m(fixture::small_config());
  auto p = m.init_params(1);
  const auto before = p.values;
  OptimizerConfig oc;
  oc.lr = 0.05;
  oc.weight_decay = 0.0;
  auto st = make_optim_state(m, oc);
  std::vector<double> g(p.values.size());
  for (std::size_t i = 0; i < g.size(); ++i) g[i] = (i % 2 ? 1.0 : -1.0) * (0.001 + 1e-4 * static_cast<double>(i % 17));
  optimizer_step(m, p, g, st, oc);
  // bias correction makes m_hat = g and v_hat = g^2 after one step
  for (std::size_t i = 0; i < g.size(); ++i)
    CHECK(p.values[i] - before[i] == doctest::Approx(-oc.lr * g[i] / (std::abs(g[i]) + oc.eps)).epsilon(1e-12));
  CHECK(st.step == 1);

  std::vector<double> vmax_prev = st.v_max;
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n(0.0, 1.0);
  for (int s = 0; s < 20; ++s) {
    for (auto& x : g) x = n(rng) * (s % 5 == 0 ? 10.0 : 0.1);
    optimizer_step(m, p, g, st, oc);
    for (std::size_t i = 0; i < g.size(); ++i) CHECK(st.v_max[i] >= vmax_prev[i]);
    vmax_prev = st.v_max;
  }
}

TEST_CASE("zero gradient leaves exempt groups unchanged and decays the rest") {
  const Model m(fixture::small_config(2, 1, 2, ModelVariant::sym_lt));
  auto p = m.init_params(2);
  const auto before = p.values;
  OptimizerConfig oc;
  oc.weight_decay = 0.01;
  auto st = make_optim_state(m, oc);
  optimizer_step(m, p, std::vector<double>(p.values.size(), 0.0), st, oc);
  for (const auto& b : m.layout()) {
    const bool decayed = b.group == ParamGroup::product || b.group == ParamGroup::message;
    for (std::size_t i = b.offset; i < b.offset + b.size; ++i) {
      if (decayed)
        CHECK(p.values[i] == doctest::Approx(before[i] * (1.0 - oc.lr * oc.weight_decay)).epsilon(1e-15));
      else
        CHECK(p.values[i] == before[i]);
    }
  }
  CHECK_THROWS_AS(optimizer_step(m, p, std::vector<double>(3), st, oc), InvalidArgument);
}

TEST_CASE("moving average and plateau scheduler") {
  ExponentialMovingAverage ema({0.0}, 0.99);
  ema.update({1.0});  // warm-up decay 2/11
  CHECK(ema.shadow()[0] == doctest::Approx(9.0 / 11.0));
  for (int i = 0; i < 5000; ++i) ema.update({1.0});
  CHECK(ema.shadow()[0] == doctest::Approx(1.0).epsilon(1e-12));

  PlateauScheduler s(2, 0.5);
  double lr = 1.0;
  lr = s.step(10.0, lr);  // best
  lr = s.step(10.0, lr);  // bad 1
  lr = s.step(9.9995, lr);  // below the relative threshold: bad 2
  CHECK(lr == 1.0);
  lr = s.step(10.0, lr);  // bad 3 > patience
  CHECK(lr == 0.5);
  lr = s.step(10.0, lr);
  lr = s.step(10.0, lr);
  CHECK(lr == 0.5);
  lr = s.step(5.0, lr);
  lr = s.step(5.0, lr);
  lr = s.step(5.0, lr);
  CHECK(lr == 0.5);
  lr = s.step(5.0, lr);
  CHECK(lr == 0.25);
}

TEST_CASE("pair potential labels") {
  PairPotential pot;
  AtomicConfiguration d;
  d.positions = {{0, 0, 0}, {0, 0, std::pow(2.0, 1.0 / 6.0)}};
  d.atomic_numbers = {1, 1};
  // at the LJ minimum the bare force vanishes; only the envelope slope remains
  const auto ef = pair_potential(pot, d);
  const double r = d.positions[1][2];
  const double e_bare = -pot.epsilon;
  CHECK(ef.energy == doctest::Approx(e_bare * poly_cutoff(r, pot.cutoff, 5)).epsilon(1e-14));

  const auto data = synthetic_dataset(6, 9, pot);
  REQUIRE(data.size() == 6);
  CHECK(data[0].size() == 2);
  CHECK(data[1].size() == 3);
  const double h = 1e-5;
  for (const auto& c : data) {
    const auto f = pair_potential(pot, c).forces;
    for (std::size_t a = 0; a < c.size(); ++a)
      for (std::size_t k = 0; k < 3; ++k) {
        auto cp = c, cm = c;
        cp.positions[a][k] += h;
        cm.positions[a][k] -= h;
        const double fd = -(pair_potential(pot, cp).energy - pair_potential(pot, cm).energy) / (2 * h);
        CHECK(f[a][k] == doctest::Approx(fd).epsilon(1e-7).scale(1.0));
      }
    for (std::size_t i = 0; i < c.size(); ++i)
      for (std::size_t j = i + 1; j < c.size(); ++j) {
        double d2 = 0;
        for (std::size_t k = 0; k < 3; ++k) d2 += std::pow(c.positions[i][k] - c.positions[j][k], 2);
        CHECK(std::sqrt(d2) >= pot.r_min * pot.sigma - 1e-12);
      }
  }
  CHECK(synthetic_dataset(6, 9, pot)[5].positions == data[5].positions);
}

namespace {

ModelConfig tiny_model() {
  auto c = ModelConfig::preset("desk");
  c.species = {1};
  return c;
}

TrainConfig quick(int epochs) {
  TrainConfig tc;
  tc.epochs = epochs;
  tc.batch_size = 5;
  return tc;
}

}  // namespace

TEST_CASE("zero learning rate gives a flat history") {
  const Model m(tiny_model());
  const auto data = synthetic_dataset(8, 4);
  const std::vector<AtomicConfiguration> train(data.begin(), data.begin() + 6), val(data.begin() + 6, data.end());
  auto tc = quick(4);
  tc.optimizer.lr = 0.0;
  tc.optimizer.weight_decay = 0.0;
  const auto r = train_loop(m, m.init_params(1), train, val, tc);
  REQUIRE(r.history.size() == 5);
  for (const auto& e : r.history) {
    CHECK(e.train_loss == r.history[0].train_loss);
    CHECK(e.val_force_mae == r.history[0].val_force_mae);
  }
  CHECK(r.best_epoch == 0);

  std::ostringstream csv;
  write_history_csv(csv, r.history);
  const std::string text = csv.str();
  CHECK(text.rfind("epoch,lr,train_loss", 0) == 0);
  CHECK(std::count(text.begin(), text.end(), '\n') == 6);

  CHECK_THROWS_AS(train_loop(m, m.init_params(1), {}, val, tc), InvalidArgument);
  tc.optimizer.lr = 1e300;
  tc.optimizer.weight_decay = 0.0;
  tc.ema_decay = 0.0;
  CHECK_THROWS_AS(train_loop(m, m.init_params(1), train, val, tc), DivergenceError);
}

TEST_CASE("training is deterministic and threads do not change it") {
  const Model m(tiny_model());
  const auto data = synthetic_dataset(10, 5);
  const std::vector<AtomicConfiguration> train(data.begin(), data.begin() + 8), val(data.begin() + 8, data.end());
  auto tc = quick(3);
  const auto a = train_loop(m, m.init_params(2), train, val, tc);
  tc.threads = 3;
  const auto b = train_loop(m, m.init_params(2), train, val, tc);
  REQUIRE(a.history.size() == b.history.size());
  for (std::size_t i = 0; i < a.history.size(); ++i) {
    CHECK(a.history[i].train_loss == b.history[i].train_loss);
    CHECK(a.history[i].val_loss == b.history[i].val_loss);
  }
  CHECK(a.params.values == b.params.values);
  CHECK(a.history.back().train_loss < a.history.front().train_loss);
}

TEST_CASE("manifest parsing") {
  const auto m = parse_manifest(R"(# desk run
preset = desk
channels = 6
species = H, 8
radial_hidden = 12, 12
variant = sym+lt
epochs = 30   # short
lr = 0.005
normalization = per_batch
shuffle = false
synthetic = 20
)");
  CHECK(m.model.channels == 6);
  CHECK(m.model.species == std::vector<int>{1, 8});
  CHECK(m.model.radial_hidden == std::vector<int>{12, 12});
  CHECK(m.model.variant == ModelVariant::sym_lt);
  CHECK(m.model.l_max == ModelConfig::preset("desk").l_max);
  CHECK(m.train.epochs == 30);
  CHECK(m.train.optimizer.lr == 0.005);
  CHECK(m.train.loss.normalization == LossNormalization::per_batch);
  CHECK_FALSE(m.train.shuffle);
  CHECK(m.synthetic == 20);

  CHECK_THROWS_AS(parse_manifest("epochs = 3\nbogus = 1\n"), DataError);
  CHECK_THROWS_AS(parse_manifest("epochs = three\n"), DataError);
  CHECK_THROWS_AS(parse_manifest("just words\n"), DataError);
  CHECK_THROWS_AS(parse_manifest("L_max = 5\nl_max = 2\n"), DataError);
  try {
    parse_manifest("epochs = 3\n\nlr = x\n");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("line 3") != std::string::npos);
  }
}

TEST_CASE("pair-potential training reduces the force error") {
  const Model m(tiny_model());
  const auto data = synthetic_dataset(20, 1);
  const std::vector<AtomicConfiguration> train(data.begin(), data.begin() + 16), val(data.begin() + 16, data.end());
  const auto r = train_loop(m, m.init_params(1), train, val, quick(200));
  REQUIRE(r.history.size() == 201);
  const auto& first = r.history.front();
  const auto& last = r.history.back();
  CHECK(last.train_force_mae < 0.2 * first.train_force_mae);
  CHECK(last.val_force_mae < 0.2 * first.val_force_mae);
  CHECK(r.best_epoch > 0);
}
