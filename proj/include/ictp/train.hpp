#pragma once

// Desk-scale training: AMSGrad with decoupled weight decay on the product and
// message weights, an exponential moving average of the parameters used for
// evaluation, on-plateau learning-rate decay and best-on-validation selection.

#include <cstdint>
#include <iosfwd>
#include <limits>
#include <string>
#include <vector>

#include "ictp/grad.hpp"

namespace ictp {

struct OptimizerConfig {
  double lr = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 5e-7;  // product and message groups only
};

struct OptimState {
  std::vector<double> m, v, v_max;
  std::uint64_t step = 0;
  double lr = 0.01;
};

OptimState make_optim_state(const Model& model, const OptimizerConfig& cfg);

/// One AMSGrad step:
///   m = b1 m + (1-b1) g,  v = b2 v + (1-b2) g^2,  v_max = max(v_max, v)
///   theta -= lr * (m / (1-b1^t)) / (sqrt(v_max / (1-b2^t)) + eps)
/// followed by theta *= 1 - lr*wd on decayed groups.
void optimizer_step(const Model& model, ModelParams& params, const std::vector<double>& grad, OptimState& state,
                    const OptimizerConfig& cfg);

/// Shadow weights with warm-up decay min(decay, (1+n)/(10+n)).
class ExponentialMovingAverage {
 public:
  ExponentialMovingAverage(const std::vector<double>& init, double decay);
  void update(const std::vector<double>& values);
  const std::vector<double>& shadow() const { return shadow_; }

 private:
  std::vector<double> shadow_;
  double decay_;
  std::uint64_t updates_ = 0;
};

/// Multiplies the learning rate by `factor` after more than `patience` epochs
/// without a relative improvement of `threshold` in the monitored loss.
class PlateauScheduler {
 public:
  PlateauScheduler(int patience, double factor, double threshold = 1e-4)
      : patience_(patience), factor_(factor), threshold_(threshold) {}
  double step(double metric, double lr);

 private:
  int patience_;
  double factor_, threshold_;
  double best_ = std::numeric_limits<double>::infinity();
  int bad_ = 0;
};

struct TrainConfig {
  int epochs = 200;
  int batch_size = 5;
  std::uint64_t seed = 1;
  OptimizerConfig optimizer;
  double ema_decay = 0.99;  // 0 disables the average
  int patience = 50;
  double lr_factor = 0.8;
  LossConfig loss;
  int threads = 1;
  bool shuffle = true;
  bool fit_shift_scale = true;
};

struct EpochRecord {
  int epoch = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double train_force_mae = 0.0;
  double val_force_mae = 0.0;
  double train_energy_mae = 0.0;
  double val_energy_mae = 0.0;
};

struct TrainResult {
  ModelParams params;  // best-on-validation evaluation weights
  int best_epoch = 0;
  std::vector<EpochRecord> history;  // history[0] evaluates the initial parameters
};

/// Throws InvalidArgument for empty splits and DivergenceError on a non-finite loss.
TrainResult train_loop(const Model& model, ModelParams init, const std::vector<AtomicConfiguration>& train,
                       const std::vector<AtomicConfiguration>& val, const TrainConfig& cfg);

void write_history_csv(std::ostream& os, const std::vector<EpochRecord>& history);

struct PairPotential {
  double epsilon = 0.25;  // eV
  double sigma = 1.0;     // Angstrom
  double cutoff = 5.0;    // smooth truncation with the model envelope
  int z = 1;
  double r_min = 1.0;  // sampled pair distances, in units of sigma
  double r_max = 1.8;
};

/// Energy and forces of the smoothly truncated Lennard-Jones potential.
EnergyForces pair_potential(const PairPotential& pot, const AtomicConfiguration& cfg);

/// Alternating dimers and trimers labelled with pair_potential.
std::vector<AtomicConfiguration> synthetic_dataset(int count, std::uint64_t seed, const PairPotential& pot = {});

/// Plain-text `key = value` training manifest.
struct Manifest {
  ModelConfig model = ModelConfig::preset("desk");
  TrainConfig train;
  std::string train_file;
  std::string val_file;
  double val_fraction = 0.2;
  int synthetic = 0;  // > 0: generate this many configurations instead of reading files
  std::string output_model = "model.ictp";
  std::string history_csv = "history.csv";
};

/// Throws DataError naming the line of an unknown key or malformed value.
Manifest parse_manifest(const std::string& text);

}  // namespace ictp
