#include "ictp/grad.hpp"

#include <algorithm>
#include <cmath>
#include <thread>

#include "ictp/error.hpp"

namespace ictp {

EnergyForces energy_forces(const Model& model, const ModelParams& params, const AtomicConfiguration& cfg) {
  const auto nl = build_neighbor_list(cfg, model.config().cutoff);
  const auto ev = evaluate<double>(model, params, cfg, nl, cfg.positions);
  EnergyForces out;
  out.energy = ev.energy;
  out.forces.resize(cfg.size());
  for (std::size_t a = 0; a < cfg.size(); ++a)
    for (std::size_t k = 0; k < 3; ++k) out.forces[a][k] = -ev.grad_positions[a][k];
  return out;
}

std::vector<Vec3> forces(const Model& model, const ModelParams& params, const AtomicConfiguration& cfg) {
  return energy_forces(model, params, cfg).forces;
}

std::vector<Vec3> finite_diff_forces(const Model& model, const ModelParams& params, const AtomicConfiguration& cfg,
                                     double h) {
  if (!(h > 0.0)) throw InvalidArgument("finite_diff_forces: h must be positive");
  std::vector<Vec3> out(cfg.size());
  AtomicConfiguration probe = cfg;
  for (std::size_t a = 0; a < cfg.size(); ++a)
    for (std::size_t k = 0; k < 3; ++k) {
      probe.positions[a][k] = cfg.positions[a][k] + h;
      const double ep = energy(model, params, probe);
      probe.positions[a][k] = cfg.positions[a][k] - h;
      const double em = energy(model, params, probe);
      probe.positions[a][k] = cfg.positions[a][k];
      out[a][k] = -(ep - em) / (2.0 * h);
    }
  return out;
}

namespace {

struct Weights {
  double ce = 0.0, cf = 0.0;
};

Weights weights_for(const LossConfig& cfg, std::size_t n_atoms, std::size_t batch) {
  if (cfg.energy_weight < 0 || cfg.force_weight < 0) throw InvalidArgument("loss weights must be non-negative");
  const double n = static_cast<double>(n_atoms), b = static_cast<double>(batch);
  if (cfg.normalization == LossNormalization::per_atom) return {cfg.energy_weight / n, cfg.force_weight};
  return {cfg.energy_weight / (b * n), cfg.force_weight / (b * 3.0 * n)};
}

void require_references(const AtomicConfiguration& c, const LossConfig& cfg) {
  if (cfg.energy_weight > 0 && !c.reference_energy) throw DataError("loss: structure without reference energy");
  if (cfg.force_weight > 0 && !c.reference_forces) throw DataError("loss: structure without reference forces");
  if (c.reference_forces && c.reference_forces->size() != c.size())
    throw DataError("loss: reference forces do not match the atom count");
}

void add_terms(LossBreakdown& acc, const AtomicConfiguration& c, double e, const std::vector<Vec3>& f,
               const Weights& w) {
  ++acc.structures;
  if (c.reference_energy) {
    const double de = e - *c.reference_energy;
    acc.energy_term += w.ce * de * de;
    acc.energy_abs_sum += std::abs(de);
  }
  if (c.reference_forces)
    for (std::size_t a = 0; a < c.size(); ++a)
      for (std::size_t k = 0; k < 3; ++k) {
        const double df = f[a][k] - (*c.reference_forces)[a][k];
        acc.force_term += w.cf * df * df;
        acc.force_abs_sum += std::abs(df);
        ++acc.force_components;
      }
  acc.loss = acc.energy_term + acc.force_term;
}

void merge(LossBreakdown& into, const LossBreakdown& x) {
  into.energy_term += x.energy_term;
  into.force_term += x.force_term;
  into.force_abs_sum += x.force_abs_sum;
  into.force_components += x.force_components;
  into.energy_abs_sum += x.energy_abs_sum;
  into.structures += x.structures;
  into.loss = into.energy_term + into.force_term;
}

LossGradient structure_gradient(const Model& model, const ModelParams& params, const AtomicConfiguration& c,
                                const LossConfig& cfg, std::size_t batch) {
  require_references(c, cfg);
  const Weights w = weights_for(cfg, c.size(), batch);
  const auto nl = build_neighbor_list(c, model.config().cutoff);
  LossGradient out;
  const bool with_forces = w.cf > 0;
  const auto first = evaluate<double>(model, params, c, nl, c.positions, {true, !with_forces});
  std::vector<Vec3> f(c.size());
  for (std::size_t a = 0; a < c.size(); ++a)
    for (std::size_t k = 0; k < 3; ++k) f[a][k] = -first.grad_positions[a][k];
  add_terms(out.value, c, first.energy, f, w);
  const double de = c.reference_energy ? 2.0 * w.ce * (first.energy - *c.reference_energy) : 0.0;

  if (!with_forces) {
    out.grad.resize(model.num_params());
    for (std::size_t i = 0; i < out.grad.size(); ++i) out.grad[i] = de * first.grad_params[i];
    return out;
  }
  // Tangent g = 2 C_f (F - F_ref) on the positions: the tangent of dE/dtheta is
  // then sum_u g_u . d^2E/(dr_u dtheta) = -dL_f/dtheta.
  std::vector<std::array<Dual, 3>> pos(c.size());
  for (std::size_t a = 0; a < c.size(); ++a)
    for (std::size_t k = 0; k < 3; ++k)
      pos[a][k] = Dual(c.positions[a][k], 2.0 * w.cf * (f[a][k] - (*c.reference_forces)[a][k]));
  const auto second = evaluate<Dual>(model, params, c, nl, pos, {false, true});
  out.grad.resize(model.num_params());
  for (std::size_t i = 0; i < out.grad.size(); ++i) out.grad[i] = de * second.grad_params[i].v - second.grad_params[i].d;
  return out;
}

}  // namespace

LossBreakdown loss(const Model& model, const ModelParams& params, const std::vector<AtomicConfiguration>& batch,
                   const LossConfig& cfg) {
  LossBreakdown acc;
  for (const auto& c : batch) {
    require_references(c, cfg);
    const auto ef = energy_forces(model, params, c);
    add_terms(acc, c, ef.energy, ef.forces, weights_for(cfg, c.size(), batch.size()));
  }
  return acc;
}

LossGradient param_gradients(const Model& model, const ModelParams& params,
                             const std::vector<AtomicConfiguration>& batch, const LossConfig& cfg, int threads) {
  std::vector<LossGradient> parts(batch.size());
  const std::size_t workers =
      std::min<std::size_t>(batch.size(), threads <= 0 ? std::max(1u, std::thread::hardware_concurrency())
                                                       : static_cast<std::size_t>(threads));
  if (workers <= 1) {
    for (std::size_t i = 0; i < batch.size(); ++i) parts[i] = structure_gradient(model, params, batch[i], cfg, batch.size());
  } else {
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(workers);
    for (std::size_t w = 0; w < workers; ++w)
      pool.emplace_back([&, w] {
        try {
          for (std::size_t i = w; i < batch.size(); i += workers)
            parts[i] = structure_gradient(model, params, batch[i], cfg, batch.size());
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    for (auto& t : pool) t.join();
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
  }
  LossGradient total;
  total.grad.assign(model.num_params(), 0.0);
  for (const auto& p : parts) {
    merge(total.value, p.value);
    for (std::size_t i = 0; i < total.grad.size(); ++i) total.grad[i] += p.grad[i];
  }
  return total;
}

}  // namespace ictp
