#include "ictp/train.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <cmath>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>

#include "ictp/error.hpp"

namespace ictp {

OptimState make_optim_state(const Model& model, const OptimizerConfig& cfg) {
  OptimState s;
  s.m.assign(model.num_params(), 0.0);
  s.v.assign(model.num_params(), 0.0);
  s.v_max.assign(model.num_params(), 0.0);
  s.lr = cfg.lr;
  return s;
}

void optimizer_step(const Model& model, ModelParams& params, const std::vector<double>& grad, OptimState& state,
                    const OptimizerConfig& cfg) {
  if (grad.size() != params.values.size() || state.m.size() != params.values.size())
    throw InvalidArgument("optimizer_step: size mismatch");
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(cfg.beta1, t);
  const double bc2 = 1.0 - std::pow(cfg.beta2, t);
  for (std::size_t i = 0; i < grad.size(); ++i) {
    const double g = grad[i];
    state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * g;
    state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * g * g;
    state.v_max[i] = std::max(state.v_max[i], state.v[i]);
    const double denom = std::sqrt(state.v_max[i]) / std::sqrt(bc2) + cfg.eps;
    params.values[i] -= state.lr * (state.m[i] / bc1) / denom;
  }
  if (cfg.weight_decay == 0.0) return;
  for (const auto& b : model.layout())
    if (b.group == ParamGroup::product || b.group == ParamGroup::message)
      for (std::size_t i = b.offset; i < b.offset + b.size; ++i) params.values[i] *= 1.0 - state.lr * cfg.weight_decay;
}

ExponentialMovingAverage::ExponentialMovingAverage(const std::vector<double>& init, double decay)
    : shadow_(init), decay_(decay) {}

void ExponentialMovingAverage::update(const std::vector<double>& values) {
  ++updates_;
  const double n = static_cast<double>(updates_);
  const double d = std::min(decay_, (1.0 + n) / (10.0 + n));
  for (std::size_t i = 0; i < shadow_.size(); ++i) shadow_[i] += (1.0 - d) * (values[i] - shadow_[i]);
}

double PlateauScheduler::step(double metric, double lr) {
  if (metric < best_ * (1.0 - threshold_)) {
    best_ = metric;
    bad_ = 0;
    return lr;
  }
  if (++bad_ > patience_) {
    bad_ = 0;
    return lr * factor_;
  }
  return lr;
}

namespace {

void fill_metrics(const LossBreakdown& tr, const LossBreakdown& va, EpochRecord& r) {
  r.train_loss = tr.loss;
  r.train_force_mae = tr.force_mae();
  r.train_energy_mae = tr.energy_mae();
  r.val_loss = va.loss;
  r.val_force_mae = va.force_mae();
  r.val_energy_mae = va.energy_mae();
}

}  // namespace

TrainResult train_loop(const Model& model, ModelParams init, const std::vector<AtomicConfiguration>& train,
                       const std::vector<AtomicConfiguration>& val, const TrainConfig& cfg) {
  if (train.empty() || val.empty()) throw InvalidArgument("train_loop: training and validation sets must be non-empty");
  if (cfg.batch_size < 1 || cfg.epochs < 0) throw InvalidArgument("train_loop: bad batch size or epoch count");
  ModelParams params = std::move(init);
  if (cfg.fit_shift_scale) fit_shift_scale(model, params, train);

  OptimState state = make_optim_state(model, cfg.optimizer);
  ExponentialMovingAverage ema(params.values, cfg.ema_decay);
  PlateauScheduler scheduler(cfg.patience, cfg.lr_factor);
  std::mt19937_64 rng(cfg.seed);

  TrainResult result;
  EpochRecord first;
  first.lr = state.lr;
  fill_metrics(loss(model, params, train, cfg.loss), loss(model, params, val, cfg.loss), first);
  result.history.push_back(first);
  result.params = params;
  double best = first.val_loss;

  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  ModelParams eval = params;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    if (cfg.shuffle) std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
      std::vector<AtomicConfiguration> batch;
      for (std::size_t i = start; i < std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size)); ++i)
        batch.push_back(train[order[i]]);
      const auto g = param_gradients(model, params, batch, cfg.loss, cfg.threads);
      if (!std::isfinite(g.value.loss))
        throw DivergenceError("training diverged: non-finite loss in epoch " + std::to_string(epoch));
      optimizer_step(model, params, g.grad, state, cfg.optimizer);
      if (cfg.ema_decay > 0) ema.update(params.values);
    }
    eval.values = cfg.ema_decay > 0 ? ema.shadow() : params.values;
    EpochRecord rec;
    rec.epoch = epoch;
    rec.lr = state.lr;
    fill_metrics(loss(model, eval, train, cfg.loss), loss(model, eval, val, cfg.loss), rec);
    if (!std::isfinite(rec.train_loss) || !std::isfinite(rec.val_loss))
      throw DivergenceError("training diverged: non-finite evaluation loss in epoch " + std::to_string(epoch));
    result.history.push_back(rec);
    if (rec.val_loss < best) {
      best = rec.val_loss;
      result.best_epoch = epoch;
      result.params = eval;
    }
    state.lr = scheduler.step(rec.val_loss, state.lr);
  }
  return result;
}

void write_history_csv(std::ostream& os, const std::vector<EpochRecord>& history) {
  os << "epoch,lr,train_loss,val_loss,train_force_mae,val_force_mae,train_energy_mae,val_energy_mae\n";
  char line[512];
  for (const auto& r : history) {
    std::snprintf(line, sizeof line, "%d,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", r.epoch, r.lr, r.train_loss,
                  r.val_loss, r.train_force_mae, r.val_force_mae, r.train_energy_mae, r.val_energy_mae);
    os << line;
  }
}

EnergyForces pair_potential(const PairPotential& pot, const AtomicConfiguration& cfg) {
  EnergyForces out;
  out.forces.assign(cfg.size(), {0.0, 0.0, 0.0});
  const double rc = pot.cutoff;
  const int p = 5;
  for (std::size_t i = 0; i < cfg.size(); ++i)
    for (std::size_t j = i + 1; j < cfg.size(); ++j) {
      Vec3 d;
      for (std::size_t k = 0; k < 3; ++k) d[k] = cfg.positions[i][k] - cfg.positions[j][k];
      const double r = std::sqrt(d[0] * d[0] + d[1] * d[1] + d[2] * d[2]);
      if (r >= rc) continue;
      const double s6 = std::pow(pot.sigma / r, 6), s12 = s6 * s6;
      const double phi = 4.0 * pot.epsilon * (s12 - s6);
      const double dphi = 4.0 * pot.epsilon * (-12.0 * s12 + 6.0 * s6) / r;
      const double x = r / rc, xp1 = std::pow(x, p - 1);
      const double f = poly_cutoff(r, rc, p);
      const double df = (-0.5 * (p + 1) * (p + 2) * p * xp1 + p * (p + 2.0) * (p + 1) * xp1 * x -
                         0.5 * p * (p + 1) * (p + 2) * xp1 * x * x) /
                        rc;
      out.energy += phi * f;
      const double dE = dphi * f + phi * df;
      for (std::size_t k = 0; k < 3; ++k) {
        out.forces[i][k] -= dE * d[k] / r;
        out.forces[j][k] += dE * d[k] / r;
      }
    }
  return out;
}

std::vector<AtomicConfiguration> synthetic_dataset(int count, std::uint64_t seed, const PairPotential& pot) {
  if (count < 0) throw InvalidArgument("synthetic_dataset: negative count");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(pot.r_min * pot.sigma, pot.r_max * pot.sigma);
  std::vector<AtomicConfiguration> out;
  for (int n = 0; n < count; ++n) {
    AtomicConfiguration c;
    const int atoms = n % 2 == 0 ? 2 : 3;
    c.positions.push_back({0.0, 0.0, 0.0});
    while (static_cast<int>(c.size()) < atoms) {
      const auto dir = UnitVector::random(rng);
      const double r = dist(rng);
      const Vec3 p{r * dir.c[0], r * dir.c[1], r * dir.c[2]};
      bool ok = true;
      for (const auto& q : c.positions) {
        double d2 = 0;
        for (std::size_t k = 0; k < 3; ++k) d2 += (p[k] - q[k]) * (p[k] - q[k]);
        if (d2 < std::pow(pot.r_min * pot.sigma, 2)) ok = false;
      }
      if (ok) c.positions.push_back(p);
    }
    c.atomic_numbers.assign(c.size(), pot.z);
    const auto ef = pair_potential(pot, c);
    c.reference_energy = ef.energy;
    c.reference_forces = ef.forces;
    out.push_back(std::move(c));
  }
  return out;
}

namespace {

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

double to_double(const std::string& v) {
  std::size_t used = 0;
  const double x = std::stod(v, &used);
  if (used != v.size()) throw std::invalid_argument(v);
  return x;
}

int to_int(const std::string& v) {
  std::size_t used = 0;
  const int x = std::stoi(v, &used);
  if (used != v.size()) throw std::invalid_argument(v);
  return x;
}

bool to_bool(const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw std::invalid_argument(v);
}

}  // namespace

Manifest parse_manifest(const std::string& text) {
  struct Entry {
    std::size_t line;
    std::string key, value;
  };
  std::vector<Entry> entries;
  std::stringstream ss(text);
  std::string raw;
  for (std::size_t n = 1; std::getline(ss, raw); ++n) {
    const auto hash = raw.find('#');
    const std::string line = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw DataError("manifest line " + std::to_string(n) + ": expected key = value");
    entries.push_back({n, trim(line.substr(0, eq)), trim(line.substr(eq + 1))});
  }
  Manifest m;
  // a preset replaces the model defaults before any individual key applies
  for (const auto& e : entries)
    if (e.key == "preset") {
      try {
        m.model = ModelConfig::preset(e.value);
      } catch (const InvalidArgument& err) {
        throw DataError("manifest line " + std::to_string(e.line) + ": " + err.what());
      }
    }
  for (const auto& e : entries) {
    const auto& k = e.key;
    const auto& v = e.value;
    auto& mc = m.model;
    auto& tc = m.train;
    try {
      if (k == "preset") continue;
      else if (k == "l_max") mc.l_max = to_int(v);
      else if (k == "L_max") mc.L_max = to_int(v);
      else if (k == "nu") mc.nu = to_int(v);
      else if (k == "layers") mc.layers = to_int(v);
      else if (k == "channels") mc.channels = to_int(v);
      else if (k == "latent_channels") mc.latent_channels = to_int(v);
      else if (k == "cutoff") mc.cutoff = to_double(v);
      else if (k == "n_bessel") mc.n_bessel = to_int(v);
      else if (k == "envelope_p") mc.envelope_p = to_int(v);
      else if (k == "readout_hidden") mc.readout_hidden = to_int(v);
      else if (k == "variant") mc.variant = parse_model_variant(v);
      else if (k == "radial_hidden") {
        mc.radial_hidden.clear();
        for (const auto& s : split_list(v)) mc.radial_hidden.push_back(to_int(s));
      } else if (k == "species") {
        mc.species.clear();
        for (const auto& s : split_list(v))
          mc.species.push_back(std::isdigit(static_cast<unsigned char>(s[0])) ? to_int(s) : atomic_number(s));
        std::sort(mc.species.begin(), mc.species.end());
      } else if (k == "epochs") tc.epochs = to_int(v);
      else if (k == "batch_size") tc.batch_size = to_int(v);
      else if (k == "seed") tc.seed = std::stoull(v);
      else if (k == "lr") tc.optimizer.lr = to_double(v);
      else if (k == "beta1") tc.optimizer.beta1 = to_double(v);
      else if (k == "beta2") tc.optimizer.beta2 = to_double(v);
      else if (k == "eps") tc.optimizer.eps = to_double(v);
      else if (k == "weight_decay") tc.optimizer.weight_decay = to_double(v);
      else if (k == "ema_decay") tc.ema_decay = to_double(v);
      else if (k == "patience") tc.patience = to_int(v);
      else if (k == "lr_factor") tc.lr_factor = to_double(v);
      else if (k == "energy_weight") tc.loss.energy_weight = to_double(v);
      else if (k == "force_weight") tc.loss.force_weight = to_double(v);
      else if (k == "normalization") {
        if (v == "per_atom") tc.loss.normalization = LossNormalization::per_atom;
        else if (v == "per_batch") tc.loss.normalization = LossNormalization::per_batch;
        else throw std::invalid_argument(v);
      } else if (k == "threads") tc.threads = to_int(v);
      else if (k == "shuffle") tc.shuffle = to_bool(v);
      else if (k == "fit_shift_scale") tc.fit_shift_scale = to_bool(v);
      else if (k == "train_file") m.train_file = v;
      else if (k == "val_file") m.val_file = v;
      else if (k == "val_fraction") m.val_fraction = to_double(v);
      else if (k == "synthetic") m.synthetic = to_int(v);
      else if (k == "output_model") m.output_model = v;
      else if (k == "history_csv") m.history_csv = v;
      else throw DataError("manifest line " + std::to_string(e.line) + ": unknown key '" + k + "'");
    } catch (const std::logic_error&) {
      throw DataError("manifest line " + std::to_string(e.line) + ": bad value '" + v + "' for " + k);
    } catch (const InvalidArgument& err) {
      throw DataError("manifest line " + std::to_string(e.line) + ": " + err.what());
    }
  }
  try {
    m.model.validate();
  } catch (const InvalidArgument& err) {
    throw DataError(std::string("manifest: ") + err.what());
  }
  if (m.val_fraction <= 0.0 || m.val_fraction >= 1.0) throw DataError("manifest: val_fraction must be in (0, 1)");
  return m;
}

}  // namespace ictp
