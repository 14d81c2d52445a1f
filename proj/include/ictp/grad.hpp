#pragma once

// Forces, loss gradients and a finite-difference force oracle.

#include <vector>

#include "ictp/model.hpp"

namespace ictp {

struct EnergyForces {
  double energy = 0.0;
  std::vector<Vec3> forces;
};

EnergyForces energy_forces(const Model& model, const ModelParams& params, const AtomicConfiguration& cfg);
std::vector<Vec3> forces(const Model& model, const ModelParams& params, const AtomicConfiguration& cfg);

/// Central differences of energy(), rebuilding the neighbor list per probe.
std::vector<Vec3> finite_diff_forces(const Model& model, const ModelParams& params, const AtomicConfiguration& cfg,
                                     double h = 1e-4);

enum class LossNormalization {
  per_atom,   // C_e = w_e / N_at, C_f = w_f
  per_batch,  // C_e = w_e / (B N_at), C_f = w_f / (B 3 N_at)
};

struct LossConfig {
  double energy_weight = 1.0;
  double force_weight = 10.0;  // Angstrom^2
  LossNormalization normalization = LossNormalization::per_atom;
};

struct LossBreakdown {
  double loss = 0.0;
  double energy_term = 0.0;
  double force_term = 0.0;
  double force_abs_sum = 0.0;  // sum of |dF| components, for MAE
  std::size_t force_components = 0;
  double energy_abs_sum = 0.0;
  std::size_t structures = 0;

  double force_mae() const { return force_components ? force_abs_sum / static_cast<double>(force_components) : 0.0; }
  double energy_mae() const { return structures ? energy_abs_sum / static_cast<double>(structures) : 0.0; }
};

struct LossGradient {
  LossBreakdown value;
  std::vector<double> grad;  // dL/dtheta, same layout as ModelParams::values
};

/// Combined energy/force loss over a batch; throws DataError for missing references.
LossBreakdown loss(const Model& model, const ModelParams& params, const std::vector<AtomicConfiguration>& batch,
                   const LossConfig& cfg = {});

/// Loss and its exact gradient. The force term is differentiated with one
/// forward-over-reverse pass per structure. Per-structure gradients are summed
/// in input order, so the result does not depend on `threads`.
LossGradient param_gradients(const Model& model, const ModelParams& params,
                             const std::vector<AtomicConfiguration>& batch, const LossConfig& cfg = {},
                             int threads = 1);

}  // namespace ictp
