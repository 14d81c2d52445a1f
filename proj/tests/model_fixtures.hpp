#pragma once

// Small configurations and model settings shared by the model-level tests.

#include <random>

#include "ictp/atoms.hpp"
#include "ictp/model.hpp"

namespace fixture {

inline ictp::ModelConfig small_config(int l_max = 2, int L_max = 1, int nu = 2,
                                      ictp::ModelVariant v = ictp::ModelVariant::full) {
  ictp::ModelConfig c;
  c.l_max = l_max;
  c.L_max = L_max;
  c.nu = nu;
  c.channels = 3;
  c.latent_channels = 2;
  c.cutoff = 3.0;
  c.radial_hidden = {8, 8};
  c.readout_hidden = 4;
  c.variant = v;
  c.species = {1, 6, 8};
  return c;
}

/// n atoms in a cube, at least `min_dist` apart, positions on a 1/1024 grid.
inline ictp::AtomicConfiguration random_cluster(std::mt19937_64& rng, int n, double box = 2.6,
                                                double min_dist = 0.9) {
  std::uniform_real_distribution<double> u(0.0, box);
  const int species[] = {1, 6, 8};
  ictp::AtomicConfiguration c;
  while (static_cast<int>(c.size()) < n) {
    ictp::Vec3 p{std::round(u(rng) * 1024) / 1024, std::round(u(rng) * 1024) / 1024,
                 std::round(u(rng) * 1024) / 1024};
    bool ok = true;
    for (const auto& q : c.positions) {
      double d2 = 0;
      for (int k = 0; k < 3; ++k) d2 += (p[k] - q[k]) * (p[k] - q[k]);
      if (d2 < min_dist * min_dist) ok = false;
    }
    if (!ok) continue;
    c.positions.push_back(p);
    c.atomic_numbers.push_back(species[c.size() % 3]);
  }
  return c;
}

/// Shift and scale made non-trivial so that they are exercised by the checks.
inline ictp::ModelParams random_params(const ictp::Model& m, std::uint64_t seed) {
  auto p = m.init_params(seed);
  for (std::size_t s = 0; s < p.shift.size(); ++s) p.shift[s] = -1.0 - 0.5 * static_cast<double>(s);
  p.scale = 0.7;
  return p;
}

}  // namespace fixture
