#include "ictp/model.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <random>

#include "ictp/error.hpp"

namespace ictp {

std::string to_string(ModelVariant v) {
  switch (v) {
    case ModelVariant::full: return "full";
    case ModelVariant::sym: return "sym";
    case ModelVariant::sym_lt: return "sym_lt";
  }
  return "?";
}

ModelVariant parse_model_variant(const std::string& s) {
  if (s == "full") return ModelVariant::full;
  if (s == "sym") return ModelVariant::sym;
  if (s == "sym_lt" || s == "sym+lt" || s == "lt") return ModelVariant::sym_lt;
  throw InvalidArgument("unknown model variant '" + s + "'");
}

std::string to_string(ParamGroup g) {
  switch (g) {
    case ParamGroup::embedding: return "embedding";
    case ParamGroup::radial: return "radial";
    case ParamGroup::mixing: return "mixing";
    case ParamGroup::product: return "product";
    case ParamGroup::message: return "message";
    case ParamGroup::update: return "update";
    case ParamGroup::readout: return "readout";
  }
  return "?";
}

void ModelConfig::validate() const {
  auto fail = [](const std::string& what) { throw InvalidArgument("model config: " + what); };
  if (l_max < 0 || l_max > kDefaultRankCap) fail("l_max must be in [0, 6]");
  if (L_max < 0 || L_max > l_max) fail("L_max must be in [0, l_max]");
  if (nu < 1) fail("nu must be >= 1");
  if (layers < 1) fail("layers must be >= 1");
  if (channels < 1) fail("channels must be >= 1");
  if (variant == ModelVariant::sym_lt && latent_channels < 1) fail("latent_channels must be >= 1");
  if (!(cutoff > 0.0)) fail("cutoff must be positive");
  if (n_bessel < 1) fail("n_bessel must be >= 1");
  if (envelope_p < 1) fail("envelope p must be >= 1");
  if (readout_hidden < 1) fail("readout_hidden must be >= 1");
  for (int w : radial_hidden)
    if (w < 1) fail("radial widths must be >= 1");
  if (species.empty()) fail("species list is empty");
  if (!std::is_sorted(species.begin(), species.end()) ||
      std::adjacent_find(species.begin(), species.end()) != species.end())
    fail("species must be sorted and unique");
  for (int z : species)
    if (z < 1 || z > 118) fail("species must be atomic numbers");
}

ModelConfig ModelConfig::preset(const std::string& name) {
  ModelConfig c;
  if (name == "large") {
    c.l_max = 3;
    c.L_max = 2;
    c.nu = 3;
    c.channels = 256;
    c.latent_channels = 64;
  } else if (name == "desk") {
    c.l_max = 2;
    c.L_max = 1;
    c.nu = 2;
    c.channels = 4;
    c.latent_channels = 2;
    c.radial_hidden = {16, 16};
    c.readout_hidden = 8;
  } else if (name == "bench") {
    c.l_max = 2;
    c.L_max = 2;
    c.nu = 3;
    c.channels = 8;
    c.latent_channels = 4;
  } else {
    throw InvalidArgument("unknown model preset '" + name + "'");
  }
  return c;
}

std::size_t Model::add_block(std::string name, std::vector<std::size_t> shape, ParamGroup group) {
  std::size_t size = 1;
  for (auto s : shape) size *= s;
  blocks_.push_back({std::move(name), std::move(shape), num_params_, size, group});
  num_params_ += size;
  return blocks_.back().offset;
}

Model::Model(ModelConfig config) : cfg_(std::move(config)) {
  cfg_.validate();
  const auto d = static_cast<std::size_t>(cfg_.channels);
  const auto dp = static_cast<std::size_t>(cfg_.product_channels());
  const auto ns = static_cast<std::size_t>(cfg_.species.size());
  const auto la = static_cast<std::size_t>(cfg_.l_max + 1);
  const auto lh = static_cast<std::size_t>(cfg_.L_max + 1);
  const PathVariant pv = cfg_.variant == ModelVariant::full ? PathVariant::full : PathVariant::sym;

  // Paths and the prefix tree. Roots stand for the mixed features of rank l.
  for (int l = 0; l <= cfg_.l_max; ++l) trie_.push_back({-1, l, l, 0, nullptr});
  std::map<std::tuple<int, int, int>, int> children;  // (parent, leaf, rank) -> node
  for (int L = 0; L <= cfg_.L_max; ++L)
    for (int order = 1; order <= cfg_.nu; ++order) {
      const auto found = enumerate_paths(cfg_.l_max, L, order, pv, cfg_.l_max);
      for (const auto& p : found) {
        int node = p.leaves[0];
        for (std::size_t i = 1; i < p.leaves.size(); ++i) {
          const auto key = std::make_tuple(node, p.leaves[i], p.intermediates[i - 1]);
          auto it = children.find(key);
          if (it == children.end()) {
            const int rank = p.intermediates[i - 1];
            trie_.push_back({node, p.leaves[i], rank, node_storage_,
                             &product_spec(trie_[static_cast<std::size_t>(node)].rank, p.leaves[i], rank)});
            node_storage_ += pow3(rank);
            it = children.emplace(key, static_cast<int>(trie_.size()) - 1).first;
          }
          node = it->second;
        }
        paths_.push_back({p, node, found.size()});
      }
    }
  if (paths_.empty()) throw InvalidArgument("model config yields no product-basis paths");

  for (int l1 = 0; l1 <= cfg_.l_max; ++l1)
    for (int l2 = 0; l2 <= cfg_.L_max; ++l2)
      for (int l3 = 0; l3 <= cfg_.l_max; ++l3)
        if (even_product_allowed(l1, l2, l3)) triples_.push_back({l1, l2, l3, &product_spec(l1, l2, l3)});

  const std::size_t np = paths_.size();
  const auto H = static_cast<std::size_t>(cfg_.readout_hidden);
  add_block("embedding", {d, ns}, ParamGroup::embedding);
  for (int t = 1; t <= cfg_.layers; ++t) {
    const std::string pre = "layer" + std::to_string(t) + ".";
    LayerPlan plan;
    plan.radial_outputs = (t == 1 ? la : triples_.size()) * d;
    std::size_t fan_in = static_cast<std::size_t>(cfg_.n_bessel);
    for (std::size_t i = 0; i < cfg_.radial_hidden.size(); ++i) {
      const auto w = static_cast<std::size_t>(cfg_.radial_hidden[i]);
      plan.radial.push_back(add_block(pre + "radial.w" + std::to_string(i), {w, fan_in}, ParamGroup::radial));
      fan_in = w;
    }
    plan.radial.push_back(add_block(pre + "radial.out", {plan.radial_outputs, fan_in}, ParamGroup::radial));
    if (t >= 2) plan.mix = add_block(pre + "mix", {lh, d, d}, ParamGroup::mixing);
    plan.product_mix = add_block(pre + "product_mix", {la, dp, d}, ParamGroup::product);
    if (cfg_.variant == ModelVariant::sym_lt)
      plan.message = add_block(pre + "message", {ns, np, d, dp}, ParamGroup::message);
    else
      plan.message = add_block(pre + "message", {ns, np, d}, ParamGroup::message);
    plan.update = add_block(pre + "update", {lh, d, d}, ParamGroup::update);
    if (t >= 2) plan.residual = add_block(pre + "residual", {ns, lh, d, d}, ParamGroup::update);
    if (t < cfg_.layers) {
      plan.readout = add_block(pre + "readout", {d}, ParamGroup::readout);
    } else {
      plan.readout = add_block(pre + "readout.hidden", {H, d}, ParamGroup::readout);
      plan.readout2 = add_block(pre + "readout.out", {H}, ParamGroup::readout);
    }
    plans_.push_back(std::move(plan));
  }
}

const ParamBlock& Model::block(const std::string& name) const {
  for (const auto& b : blocks_)
    if (b.name == name) return b;
  throw InvalidArgument("no parameter block named '" + name + "'");
}

int Model::species_index(int z) const {
  const auto it = std::lower_bound(cfg_.species.begin(), cfg_.species.end(), z);
  if (it == cfg_.species.end() || *it != z)
    throw DataError("element Z=" + std::to_string(z) + " is not in the model's species table");
  return static_cast<int>(it - cfg_.species.begin());
}

ModelParams Model::init_params(std::uint64_t seed) const {
  ModelParams p;
  p.seed = seed;
  p.values.resize(num_params_);
  p.shift.assign(cfg_.species.size(), 0.0);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const std::size_t d = static_cast<std::size_t>(cfg_.channels);
  const std::size_t dp = static_cast<std::size_t>(cfg_.product_channels());
  const bool coupled = cfg_.variant == ModelVariant::sym_lt;
  for (const auto& b : blocks_) {
    if (b.group != ParamGroup::message) {
      for (std::size_t i = 0; i < b.size; ++i) p.values[b.offset + i] = normal(rng);
      continue;
    }
    // Product weights: std 1/len(eta) uncoupled, 1/(sqrt(d_p) len(eta)) coupled.
    const std::size_t per_path = coupled ? d * dp : d;
    std::size_t i = b.offset;
    for (std::size_t s = 0; s < cfg_.species.size(); ++s)
      for (const auto& path : paths_) {
        double std = 1.0 / static_cast<double>(path.group_size);
        if (coupled) std /= std::sqrt(static_cast<double>(dp));
        for (std::size_t j = 0; j < per_path; ++j) p.values[i++] = std * normal(rng);
      }
  }
  return p;
}

std::uint64_t Model::product_basis_madds() const {
  std::uint64_t total = 0;
  for (const auto& n : trie_)
    if (n.spec) total += n.spec->counters.total_madds();
  return total * static_cast<std::uint64_t>(cfg_.product_channels());
}

double poly_cutoff(double r, double r_c, int p) {
  if (r >= r_c) return 0.0;
  const double x = r / r_c;
  const double xp = std::pow(x, p);
  return 1.0 - 0.5 * (p + 1) * (p + 2) * xp + p * (p + 2.0) * xp * x - 0.5 * p * (p + 1) * xp * x * x;
}

std::vector<double> bessel_basis(double r, double r_c, int n, int p) {
  if (!(r > 0.0)) throw InvalidArgument("bessel_basis: r must be positive");
  std::vector<double> out(static_cast<std::size_t>(n));
  const double pref = std::sqrt(2.0 / r_c) * poly_cutoff(r, r_c, p) / r;
  for (int j = 1; j <= n; ++j) out[static_cast<std::size_t>(j - 1)] = pref * std::sin(j * std::numbers::pi * r / r_c);
  return out;
}

double energy(const Model& model, const ModelParams& params, const AtomicConfiguration& cfg) {
  const auto nl = build_neighbor_list(cfg, model.config().cutoff);
  return evaluate<double>(model, params, cfg, nl, cfg.positions, {false, false}).energy;
}

void fit_shift_scale(const Model& model, ModelParams& params, const std::vector<AtomicConfiguration>& data) {
  const auto ns = static_cast<Eigen::Index>(model.num_species());
  std::vector<const AtomicConfiguration*> labelled;
  for (const auto& c : data)
    if (c.reference_energy) labelled.push_back(&c);
  params.shift.assign(static_cast<std::size_t>(ns), 0.0);
  if (!labelled.empty()) {
    Eigen::MatrixXd counts = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(labelled.size()), ns);
    Eigen::VectorXd e(static_cast<Eigen::Index>(labelled.size()));
    for (std::size_t k = 0; k < labelled.size(); ++k) {
      for (int z : labelled[k]->atomic_numbers) counts(static_cast<Eigen::Index>(k), model.species_index(z)) += 1.0;
      e(static_cast<Eigen::Index>(k)) = *labelled[k]->reference_energy;
    }
    // minimum-norm solution when compositions do not separate the species
    const Eigen::VectorXd sigma = counts.completeOrthogonalDecomposition().solve(e);
    for (Eigen::Index s = 0; s < ns; ++s) params.shift[static_cast<std::size_t>(s)] = sigma(s);
  }
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& c : data)
    if (c.reference_forces)
      for (const auto& f : *c.reference_forces)
        for (double x : f) {
          sum += x * x;
          ++n;
        }
  params.scale = (n > 0 && sum > 0.0) ? std::sqrt(sum / static_cast<double>(n)) : 1.0;
}

}  // namespace ictp
