#pragma once

// The message-passing potential built from irreducible Cartesian tensors.
//
// Per layer t:
//   two-body features  A_{ukl}   pooled over neighbors from T_l(r_hat) and h
//   product basis      B_{u eta} left-nested even products of mixed A
//   messages           m_{ukL}   species-dependent linear expansion of B
//   update             h_{ukL}   linear map of m plus a species residual
// Total energy E = sum_u (sigma_Z + s * sum_t readout_t(h^{(t+1)}_{u,L=0})).
//
// Parameters live in one flat vector described by a ParamLayout so that the
// optimizer, checkpoints and gradient checks can treat them uniformly.

#include <array>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "ictp/atoms.hpp"
#include "ictp/dual.hpp"
#include "ictp/product.hpp"

namespace ictp {

enum class ModelVariant { full, sym, sym_lt };

std::string to_string(ModelVariant v);
/// Accepts "full", "sym", "sym_lt" (also "sym+lt").
ModelVariant parse_model_variant(const std::string& s);

struct ModelConfig {
  int l_max = 3;   // rank of the direction embedding T_l
  int L_max = 2;   // rank of messages and node features
  int nu = 3;      // correlation order
  int layers = 2;
  int channels = 16;
  int latent_channels = 8;  // product-basis channels for sym_lt
  double cutoff = 5.0;
  int n_bessel = 8;
  int envelope_p = 5;
  std::vector<int> radial_hidden{64, 64, 64};
  int readout_hidden = 16;
  ModelVariant variant = ModelVariant::full;
  std::vector<int> species{1};  // atomic numbers, sorted ascending

  /// Throws InvalidArgument on inconsistent settings.
  void validate() const;
  int product_channels() const { return variant == ModelVariant::sym_lt ? latent_channels : channels; }

  /// "large" (l_max 3, L 2, nu 3, 256 channels), "desk" (small, trainable on a laptop
  /// core) and "bench" (8 channels, l_max = L = 2, nu 3).
  static ModelConfig preset(const std::string& name);
};

enum class ParamGroup { embedding, radial, mixing, product, message, update, readout };

std::string to_string(ParamGroup g);

struct ParamBlock {
  std::string name;
  std::vector<std::size_t> shape;
  std::size_t offset = 0;
  std::size_t size = 0;
  ParamGroup group = ParamGroup::embedding;
};

struct ModelParams {
  std::vector<double> values;
  std::vector<double> shift;  // sigma_Z per species index
  double scale = 1.0;
  std::uint64_t seed = 0;
};

/// A node of the prefix tree shared by all product-basis paths. Roots are the
/// mixed two-body features themselves (no storage); every other node is the
/// product of its parent with one more leaf.
struct TrieNode {
  int parent = -1;
  int leaf = 0;            // rank of the leaf multiplied in (or of the root)
  int rank = 0;            // output rank
  std::size_t offset = 0;  // per-atom offset into node storage, non-root only
  const ProductSpec* spec = nullptr;
};

struct ModelPath {
  PathSpec spec;
  int node = 0;              // trie node holding the path value
  std::size_t group_size = 1;  // len(eta_nu) for this (target, order)
};

struct Triple {
  int l1 = 0, l2 = 0, l3 = 0;
  const ProductSpec* spec = nullptr;
};

inline constexpr std::size_t kNoBlock = std::numeric_limits<std::size_t>::max();

struct LayerPlan {
  std::vector<std::size_t> radial;  // offsets of radial weight matrices, input to output
  std::size_t radial_outputs = 0;   // (l_max+1)*d for layer 1, |triples|*d otherwise
  std::size_t mix = kNoBlock;       // [L][k][k'], layers >= 2
  std::size_t product_mix = 0;      // [l][k_p][k]
  std::size_t message = 0;          // [s][p][k] or [s][p][k][k_p]
  std::size_t update = 0;           // [L][k][k']
  std::size_t residual = kNoBlock;  // [s][L][k][k'], layers >= 2
  std::size_t readout = 0;          // [k] or, for the last layer, [hidden][k] then [hidden]
  std::size_t readout2 = kNoBlock;
};

class Model {
 public:
  explicit Model(ModelConfig config);

  const ModelConfig& config() const { return cfg_; }
  const std::vector<ParamBlock>& layout() const { return blocks_; }
  std::size_t num_params() const { return num_params_; }
  const ParamBlock& block(const std::string& name) const;
  int num_species() const { return static_cast<int>(cfg_.species.size()); }
  /// Index into the species table; throws DataError for unknown elements.
  int species_index(int z) const;

  const std::vector<TrieNode>& trie() const { return trie_; }
  const std::vector<ModelPath>& paths() const { return paths_; }
  const std::vector<Triple>& triples() const { return triples_; }
  const std::vector<LayerPlan>& plans() const { return plans_; }
  std::size_t node_storage() const { return node_storage_; }  // per channel, per atom

  /// Normal(0,1) weights except product/message scales; zero shift, unit scale.
  ModelParams init_params(std::uint64_t seed) const;

  /// Multiply-adds spent in the product basis of one atom and layer.
  std::uint64_t product_basis_madds() const;

 private:
  ModelConfig cfg_;
  std::vector<ParamBlock> blocks_;
  std::size_t num_params_ = 0;
  std::vector<TrieNode> trie_;
  std::vector<ModelPath> paths_;
  std::vector<Triple> triples_;
  std::vector<LayerPlan> plans_;
  std::size_t node_storage_ = 0;

  std::size_t add_block(std::string name, std::vector<std::size_t> shape, ParamGroup group);
};

/// Radial basis sqrt(2/r_c) sin(j pi r / r_c) / r, j = 1..n, times the envelope.
/// Throws InvalidArgument for r <= 0.
std::vector<double> bessel_basis(double r, double r_c, int n, int p = 5);
/// 1 - (p+1)(p+2)/2 d^p + p(p+2) d^{p+1} - p(p+1)/2 d^{p+2}, d = r/r_c; zero beyond r_c.
double poly_cutoff(double r, double r_c, int p);

struct EvalOptions {
  bool position_grad = true;
  bool param_grad = false;
};

template <class T>
struct Evaluation {
  T energy{};
  std::vector<T> atom_energies;
  std::vector<std::array<T, 3>> grad_positions;  // dE/dr_u
  std::vector<T> grad_params;                    // dE/dtheta
};

/// Energy and (optionally) reverse-mode gradients. The neighbor list fixes the
/// graph; `positions` may carry tangents (Dual) for forward-over-reverse.
template <class T>
Evaluation<T> evaluate(const Model& model, const ModelParams& params, const AtomicConfiguration& cfg,
                       const NeighborList& nl, const std::vector<std::array<T, 3>>& positions,
                       const EvalOptions& options = {});

extern template Evaluation<double> evaluate<double>(const Model&, const ModelParams&, const AtomicConfiguration&,
                                                    const NeighborList&, const std::vector<std::array<double, 3>>&,
                                                    const EvalOptions&);
extern template Evaluation<Dual> evaluate<Dual>(const Model&, const ModelParams&, const AtomicConfiguration&,
                                                const NeighborList&, const std::vector<std::array<Dual, 3>>&,
                                                const EvalOptions&);

double energy(const Model& model, const ModelParams& params, const AtomicConfiguration& cfg);

/// One stored tensor of a forward pass, for invariant checks.
struct IntermediateTensor {
  std::string kind;  // "A", "A_mixed", "B", "m", "h"
  int layer = 0;
  int atom = 0;
  int channel = 0;
  IrrepTensor tensor;
};

std::vector<IntermediateTensor> collect_intermediates(const Model& model, const ModelParams& params,
                                                      const AtomicConfiguration& cfg);

/// Per-species shift by least squares of energies on species counts, scale
/// from the RMS of force components (1 if no forces are present).
void fit_shift_scale(const Model& model, ModelParams& params, const std::vector<AtomicConfiguration>& data);

}  // namespace ictp
