// Forward pass and hand-written reverse pass of the model.
//
// The forward pass records every intermediate on a tape; the reverse pass walks
// the layers backwards, applying the adjoint of each primitive. Scalars are
// templated so the same code runs on double (energies, forces, dE/dtheta) and
// on Dual, where tangents on the positions turn dE/dtheta into the mixed
// second derivative needed by the force term of the loss.

#include <cmath>
#include <numbers>
#include <type_traits>

#include <Eigen/Dense>

#include "ictp/detail/product_kernels.hpp"
#include "ictp/error.hpp"
#include "ictp/memory.hpp"
#include "ictp/model.hpp"

namespace ictp {
namespace {

template <class T>
using buf = tracked_vector<T>;

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

Eigen::Map<RowMat> rowmat_map(double* p, std::size_t rows, std::size_t cols) {
  return {p, static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols)};
}
Eigen::Map<const RowMat> crowmat_map(const double* p, std::size_t rows, std::size_t cols) {
  return {p, static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols)};
}

/// Per-atom features of ranks 0..R with c channels: [atom][rank][channel][3^rank].
struct FeatureLayout {
  std::size_t channels = 0;
  std::vector<std::size_t> off;
  std::size_t stride = 0;

  FeatureLayout(int max_rank, std::size_t c) : channels(c) {
    for (int l = 0; l <= max_rank; ++l) {
      off.push_back(stride);
      stride += c * pow3(l);
    }
  }
  std::size_t at(std::size_t atom, int l, std::size_t k) const {
    return atom * stride + off[static_cast<std::size_t>(l)] + k * pow3(l);
  }
};

template <class T>
T silu(const T& z) {
  using std::exp;
  return z / (1.0 + exp(-z));
}

template <class T>
T silu_grad(const T& z) {
  using std::exp;
  const T s = 1.0 / (1.0 + exp(-z));
  return s * (1.0 + z * (1.0 - s));
}

template <class T>
T dot(const T* a, const T* b, std::size_t n) {
  T s = T(0.0);
  for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
  return s;
}

template <class T>
void axpy(const T& a, const T* x, T* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

/// Envelope value and derivative with respect to r.
template <class T>
void envelope(const T& r, double rc, int p, T& f, T& df) {
  if (r >= rc) {
    f = T(0.0);
    df = T(0.0);
    return;
  }
  const T x = r / rc;
  T xpm1 = T(1.0);
  for (int i = 0; i < p - 1; ++i) xpm1 = xpm1 * x;
  const T xp = xpm1 * x;
  const double a = 0.5 * (p + 1) * (p + 2), b = p * (p + 2.0), c = 0.5 * p * (p + 1);
  f = 1.0 - a * xp + b * xp * x - c * xp * x * x;
  df = (-a * p * xpm1 + b * (p + 1) * xp - c * (p + 2) * xp * x) / rc;
}

template <class T>
struct LayerTape {
  std::vector<buf<T>> z, a;  // radial pre/post activations per hidden layer
  buf<T> lin, R;             // radial output before and after the envelope
  buf<T> hmix, A, At, nodes, m, h;
  buf<T> ro_z;  // hidden pre-activations of the final readout
};

template <class T>
struct Tape {
  std::size_t n_atoms = 0, n_edges = 0;
  std::vector<std::size_t> species;
  std::vector<std::size_t> y_off;
  std::size_t y_size = 0;
  buf<T> vec, r, rhat, Y, basis, fc, dfc;
  std::vector<LayerTape<T>> layers;
  buf<T> atom_e;
};

template <class T>
class Evaluator {
 public:
  Evaluator(const Model& model, const ModelParams& params, const AtomicConfiguration& cfg, const NeighborList& nl)
      : m_(model),
        c_(model.config()),
        w_(params.values.data()),
        params_(params),
        nl_(nl),
        d_(static_cast<std::size_t>(c_.channels)),
        dp_(static_cast<std::size_t>(c_.product_channels())),
        ns_(static_cast<std::size_t>(model.num_species())),
        np_(model.paths().size()),
        fa_(c_.l_max, d_),
        fat_(c_.l_max, dp_),
        fh_(c_.L_max, d_) {
    if (params.values.size() != model.num_params())
      throw InvalidArgument("parameter vector does not match the model layout");
    if (params.shift.size() != ns_) throw InvalidArgument("shift table does not match the species table");
    tape_.n_atoms = cfg.size();
    tape_.n_edges = nl.edges.size();
    for (int z : cfg.atomic_numbers) tape_.species.push_back(static_cast<std::size_t>(model.species_index(z)));
    for (int l = 0; l <= c_.l_max; ++l) {
      tape_.y_off.push_back(tape_.y_size);
      tape_.y_size += pow3(l);
    }
  }

  T forward(const std::vector<std::array<T, 3>>& pos);
  void backward(const EvalOptions& opt, Evaluation<T>& out);
  const Tape<T>& tape() const { return tape_; }

  // node values: roots are the mixed features, other nodes live in `nodes`
  template <class V>
  static V* node_ptr(const Model& m, const FeatureLayout& fat, std::size_t dp, V* at, V* nodes, int n, std::size_t u,
                     std::size_t kp) {
    const auto& node = m.trie()[static_cast<std::size_t>(n)];
    if (node.parent < 0) return at + fat.at(u, node.leaf, kp);
    return nodes + u * dp * m.node_storage() + dp * node.offset + kp * pow3(node.rank);
  }

 private:
  const Model& m_;
  const ModelConfig& c_;
  const double* w_;
  const ModelParams& params_;
  const NeighborList& nl_;
  std::size_t d_, dp_, ns_, np_;
  FeatureLayout fa_, fat_, fh_;
  Tape<T> tape_;

  void radial_forward(const LayerPlan& plan, LayerTape<T>& lt);
  void radial_backward(const LayerPlan& plan, const LayerTape<T>& lt, const buf<T>& dR, buf<T>& dbasis,
                       buf<T>& dfc_acc, T* gp);
};

template <class T>
void Evaluator<T>::radial_forward(const LayerPlan& plan, LayerTape<T>& lt) {
  const std::size_t E = tape_.n_edges, nb = static_cast<std::size_t>(c_.n_bessel);
  const std::size_t nh = c_.radial_hidden.size();
  lt.z.resize(nh);
  lt.a.resize(nh);
  for (std::size_t i = 0; i < nh; ++i) {
    lt.z[i].assign(E * static_cast<std::size_t>(c_.radial_hidden[i]), T(0.0));
    lt.a[i].assign(lt.z[i].size(), T(0.0));
  }
  const std::size_t no = plan.radial_outputs;
  lt.lin.assign(E * no, T(0.0));
  lt.R.assign(E * no, T(0.0));
  if constexpr (std::is_same_v<T, double>) {
    // all edges at once: Z = s X W^T
    const double* x = tape_.basis.data();
    std::size_t fan = nb;
    for (std::size_t i = 0; i <= nh; ++i) {
      const std::size_t width = i < nh ? static_cast<std::size_t>(c_.radial_hidden[i]) : no;
      double* z = i < nh ? lt.z[i].data() : lt.lin.data();
      const double s = 1.0 / std::sqrt(static_cast<double>(fan));
      rowmat_map(z, E, width).noalias() = s * crowmat_map(x, E, fan) * crowmat_map(w_ + plan.radial[i], width, fan).transpose();
      if (i < nh) {
        double* a = lt.a[i].data();
        for (std::size_t o = 0; o < E * width; ++o) a[o] = silu(z[o]);
        x = a;
        fan = width;
      }
    }
    for (std::size_t e = 0; e < E; ++e)
      for (std::size_t o = 0; o < no; ++o) lt.R[e * no + o] = lt.lin[e * no + o] * tape_.fc[e];
    return;
  }
  for (std::size_t e = 0; e < E; ++e) {
    const T* x = tape_.basis.data() + e * nb;
    std::size_t fan = nb;
    for (std::size_t i = 0; i <= nh; ++i) {
      const std::size_t width = i < nh ? static_cast<std::size_t>(c_.radial_hidden[i]) : no;
      const double* W = w_ + plan.radial[i];
      const double s = 1.0 / std::sqrt(static_cast<double>(fan));
      T* z = i < nh ? lt.z[i].data() + e * width : lt.lin.data() + e * no;
      for (std::size_t o = 0; o < width; ++o) {
        T acc = T(0.0);
        for (std::size_t j = 0; j < fan; ++j) acc += W[o * fan + j] * x[j];
        z[o] = s * acc;
      }
      if (i < nh) {
        T* a = lt.a[i].data() + e * width;
        for (std::size_t o = 0; o < width; ++o) a[o] = silu(z[o]);
        x = a;
        fan = width;
      }
    }
    for (std::size_t o = 0; o < no; ++o) lt.R[e * no + o] = lt.lin[e * no + o] * tape_.fc[e];
  }
}

template <class T>
T Evaluator<T>::forward(const std::vector<std::array<T, 3>>& pos) {
  using std::sqrt;
  using std::sin;
  auto& tp = tape_;
  const std::size_t N = tp.n_atoms, E = tp.n_edges, nb = static_cast<std::size_t>(c_.n_bessel);
  if (pos.size() != N) throw InvalidArgument("positions do not match the configuration");
  tp.vec.assign(3 * E, T(0.0));
  tp.r.assign(E, T(0.0));
  tp.rhat.assign(3 * E, T(0.0));
  tp.Y.assign(E * tp.y_size, T(0.0));
  tp.basis.assign(E * nb, T(0.0));
  tp.fc.assign(E, T(0.0));
  tp.dfc.assign(E, T(0.0));
  const double rc = c_.cutoff;
  for (std::size_t e = 0; e < E; ++e) {
    const auto& edge = nl_.edges[e];
    const auto& pu = pos[static_cast<std::size_t>(edge.u)];
    const auto& pv = pos[static_cast<std::size_t>(edge.v)];
    T* v = tp.vec.data() + 3 * e;
    for (std::size_t i = 0; i < 3; ++i) v[i] = pu[i] - pv[i] - edge.offset[i];
    const T r = sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]);
    tp.r[e] = r;
    for (std::size_t i = 0; i < 3; ++i) tp.rhat[3 * e + i] = v[i] / r;
    for (int l = 0; l <= c_.l_max; ++l)
      detail::build_irreducible(tp.rhat.data() + 3 * e, l, tp.Y.data() + e * tp.y_size + tp.y_off[static_cast<std::size_t>(l)]);
    envelope(r, rc, c_.envelope_p, tp.fc[e], tp.dfc[e]);
    const double pref = std::sqrt(2.0 / rc);
    for (std::size_t j = 0; j < nb; ++j)
      tp.basis[e * nb + j] = pref * sin(static_cast<double>(j + 1) * std::numbers::pi / rc * r) / r * tp.fc[e];
  }

  tp.layers.assign(static_cast<std::size_t>(c_.layers), {});
  tp.atom_e.assign(N, T(0.0));
  const double inv_sd = 1.0 / std::sqrt(static_cast<double>(d_));
  const double res_scale = 1.0 / std::sqrt(static_cast<double>(d_ * ns_));
  const std::size_t ns_store = m_.node_storage();
  auto& P = detail::scratch<T>(6, pow3(c_.l_max));

  for (int t = 1; t <= c_.layers; ++t) {
    const auto& plan = m_.plans()[static_cast<std::size_t>(t - 1)];
    auto& lt = tp.layers[static_cast<std::size_t>(t - 1)];
    radial_forward(plan, lt);
    const std::size_t no = plan.radial_outputs;
    lt.A.assign(N * fa_.stride, T(0.0));

    if (t == 1) {
      const double* emb = w_ + m_.block("embedding").offset;
      for (std::size_t e = 0; e < E; ++e) {
        const auto& edge = nl_.edges[e];
        const auto u = static_cast<std::size_t>(edge.u);
        const std::size_t sv = tp.species[static_cast<std::size_t>(edge.v)];
        for (int l = 0; l <= c_.l_max; ++l) {
          const T* y = tp.Y.data() + e * tp.y_size + tp.y_off[static_cast<std::size_t>(l)];
          for (std::size_t k = 0; k < d_; ++k) {
            const T coef = lt.R[e * no + static_cast<std::size_t>(l) * d_ + k] * emb[k * ns_ + sv];
            axpy(coef, y, lt.A.data() + fa_.at(u, l, k), pow3(l));
          }
        }
      }
    } else {
      const auto& hprev = tp.layers[static_cast<std::size_t>(t - 2)].h;
      lt.hmix.assign(N * fh_.stride, T(0.0));
      for (std::size_t a = 0; a < N; ++a)
        for (int l = 0; l <= c_.L_max; ++l)
          for (std::size_t k = 0; k < d_; ++k) {
            T* out = lt.hmix.data() + fh_.at(a, l, k);
            for (std::size_t kk = 0; kk < d_; ++kk) {
              const double wk = inv_sd * w_[plan.mix + (static_cast<std::size_t>(l) * d_ + k) * d_ + kk];
              axpy(T(wk), hprev.data() + fh_.at(a, l, kk), out, pow3(l));
            }
          }
      const auto& triples = m_.triples();
      for (std::size_t e = 0; e < E; ++e) {
        const auto& edge = nl_.edges[e];
        const auto u = static_cast<std::size_t>(edge.u), v = static_cast<std::size_t>(edge.v);
        for (std::size_t ti = 0; ti < triples.size(); ++ti) {
          const auto& tr = triples[ti];
          const T* y = tp.Y.data() + e * tp.y_size + tp.y_off[static_cast<std::size_t>(tr.l1)];
          const std::size_t n3 = pow3(tr.l3);
          for (std::size_t k = 0; k < d_; ++k) {
            for (std::size_t i = 0; i < n3; ++i) P[i] = T(0.0);
            detail::product_accumulate(*tr.spec, y, lt.hmix.data() + fh_.at(v, tr.l2, k), P.data());
            axpy(lt.R[e * no + ti * d_ + k], P.data(), lt.A.data() + fa_.at(u, tr.l3, k), n3);
          }
        }
      }
    }

    // mixed features for the product basis
    lt.At.assign(N * fat_.stride, T(0.0));
    for (std::size_t a = 0; a < N; ++a)
      for (int l = 0; l <= c_.l_max; ++l)
        for (std::size_t kp = 0; kp < dp_; ++kp) {
          T* out = lt.At.data() + fat_.at(a, l, kp);
          for (std::size_t k = 0; k < d_; ++k) {
            const double wk = inv_sd * w_[plan.product_mix + (static_cast<std::size_t>(l) * dp_ + kp) * d_ + k];
            axpy(T(wk), lt.A.data() + fa_.at(a, l, k), out, pow3(l));
          }
        }

    lt.nodes.assign(N * dp_ * ns_store, T(0.0));
    const auto& trie = m_.trie();
    for (std::size_t n = 0; n < trie.size(); ++n) {
      const auto& node = trie[n];
      if (node.parent < 0) continue;
      for (std::size_t a = 0; a < N; ++a)
        for (std::size_t kp = 0; kp < dp_; ++kp) {
          const T* x = node_ptr(m_, fat_, dp_, lt.At.data(), lt.nodes.data(), node.parent, a, kp);
          const T* y = lt.At.data() + fat_.at(a, node.leaf, kp);
          T* z = node_ptr(m_, fat_, dp_, lt.At.data(), lt.nodes.data(), static_cast<int>(n), a, kp);
          detail::product_accumulate(*node.spec, x, y, z);
        }
    }

    const bool coupled = c_.variant == ModelVariant::sym_lt;
    const std::size_t per_path = coupled ? d_ * dp_ : d_;
    lt.m.assign(N * fh_.stride, T(0.0));
    for (std::size_t a = 0; a < N; ++a) {
      const std::size_t s = tp.species[a];
      for (std::size_t p = 0; p < np_; ++p) {
        const auto& path = m_.paths()[p];
        const int L = path.spec.target;
        const std::size_t nL = pow3(L);
        const double* W = w_ + plan.message + (s * np_ + p) * per_path;
        for (std::size_t k = 0; k < d_; ++k) {
          T* out = lt.m.data() + fh_.at(a, L, k);
          if (!coupled) {
            axpy(T(W[k]), node_ptr(m_, fat_, dp_, lt.At.data(), lt.nodes.data(), path.node, a, k), out, nL);
          } else {
            for (std::size_t kp = 0; kp < dp_; ++kp)
              axpy(T(W[k * dp_ + kp]), node_ptr(m_, fat_, dp_, lt.At.data(), lt.nodes.data(), path.node, a, kp), out,
                   nL);
          }
        }
      }
    }

    lt.h.assign(N * fh_.stride, T(0.0));
    for (std::size_t a = 0; a < N; ++a) {
      const std::size_t s = tp.species[a];
      for (int L = 0; L <= c_.L_max; ++L) {
        const std::size_t nL = pow3(L);
        for (std::size_t k = 0; k < d_; ++k) {
          T* out = lt.h.data() + fh_.at(a, L, k);
          for (std::size_t kk = 0; kk < d_; ++kk) {
            const double wu = inv_sd * w_[plan.update + (static_cast<std::size_t>(L) * d_ + k) * d_ + kk];
            axpy(T(wu), lt.m.data() + fh_.at(a, L, kk), out, nL);
          }
          if (t >= 2) {
            const auto& hprev = tp.layers[static_cast<std::size_t>(t - 2)].h;
            for (std::size_t kk = 0; kk < d_; ++kk) {
              const double wr =
                  res_scale * w_[plan.residual + ((s * static_cast<std::size_t>(c_.L_max + 1) + static_cast<std::size_t>(L)) * d_ + k) * d_ + kk];
              axpy(T(wr), hprev.data() + fh_.at(a, L, kk), out, nL);
            }
          }
        }
      }
    }

    // readout of the invariant channels of h^{(t+1)}
    if (t < c_.layers) {
      for (std::size_t a = 0; a < N; ++a) {
        T acc = T(0.0);
        for (std::size_t k = 0; k < d_; ++k) acc += w_[plan.readout + k] * lt.h[fh_.at(a, 0, k)];
        tp.atom_e[a] += inv_sd * acc;
      }
    } else {
      const auto H = static_cast<std::size_t>(c_.readout_hidden);
      const double inv_sh = 1.0 / std::sqrt(static_cast<double>(H));
      lt.ro_z.assign(N * H, T(0.0));
      for (std::size_t a = 0; a < N; ++a) {
        T acc = T(0.0);
        for (std::size_t j = 0; j < H; ++j) {
          T z = T(0.0);
          for (std::size_t k = 0; k < d_; ++k) z += w_[plan.readout + j * d_ + k] * lt.h[fh_.at(a, 0, k)];
          z = inv_sd * z;
          lt.ro_z[a * H + j] = z;
          acc += w_[plan.readout2 + j] * silu(z);
        }
        tp.atom_e[a] += inv_sh * acc;
      }
    }
  }

  T energy = T(0.0);
  for (std::size_t a = 0; a < N; ++a) {
    tp.atom_e[a] = params_.shift[tp.species[a]] + params_.scale * tp.atom_e[a];
    energy += tp.atom_e[a];
  }
  return energy;
}

template <class T>
void Evaluator<T>::radial_backward(const LayerPlan& plan, const LayerTape<T>& lt, const buf<T>& dR, buf<T>& dbasis,
                                   buf<T>& dfc_acc, T* gp) {
  const std::size_t E = tape_.n_edges, nb = static_cast<std::size_t>(c_.n_bessel);
  const std::size_t nh = c_.radial_hidden.size();
  const std::size_t no = plan.radial_outputs;
  std::size_t wmax = no;
  for (int w : c_.radial_hidden) wmax = std::max(wmax, static_cast<std::size_t>(w));
  if constexpr (std::is_same_v<T, double>) {
    buf<double> dcur(E * no), dnext;
    for (std::size_t e = 0; e < E; ++e) {
      double dfc = 0.0;
      for (std::size_t o = 0; o < no; ++o) {
        dcur[e * no + o] = dR[e * no + o] * tape_.fc[e];
        dfc += dR[e * no + o] * lt.lin[e * no + o];
      }
      dfc_acc[e] += dfc;
    }
    std::size_t width = no;
    for (std::size_t i = nh + 1; i-- > 0;) {
      const std::size_t fan = i == 0 ? nb : static_cast<std::size_t>(c_.radial_hidden[i - 1]);
      const double* x = i == 0 ? tape_.basis.data() : lt.a[i - 1].data();
      const double s = 1.0 / std::sqrt(static_cast<double>(fan));
      const auto W = crowmat_map(w_ + plan.radial[i], width, fan);
      const auto G = crowmat_map(dcur.data(), E, width);
      if (gp) rowmat_map(gp + plan.radial[i], width, fan).noalias() += s * G.transpose() * crowmat_map(x, E, fan);
      if (i == 0) {
        rowmat_map(dbasis.data(), E, nb).noalias() += s * G * W;
      } else {
        dnext.assign(E * fan, 0.0);
        rowmat_map(dnext.data(), E, fan).noalias() = s * G * W;
        const double* z = lt.z[i - 1].data();
        for (std::size_t j = 0; j < E * fan; ++j) dnext[j] *= silu_grad(z[j]);
        std::swap(dcur, dnext);
        width = fan;
      }
    }
    return;
  }
  std::vector<T> dcur(wmax), dnext(wmax);
  for (std::size_t e = 0; e < E; ++e) {
    // output layer: R = lin * fc
    T dfc = T(0.0);
    for (std::size_t o = 0; o < no; ++o) {
      dcur[o] = dR[e * no + o] * tape_.fc[e];
      dfc += dR[e * no + o] * lt.lin[e * no + o];
    }
    dfc_acc[e] += dfc;
    std::size_t width = no;
    for (std::size_t i = nh + 1; i-- > 0;) {
      // dcur holds d/dz of layer i (linear output for i == nh)
      const std::size_t fan = i == 0 ? nb : static_cast<std::size_t>(c_.radial_hidden[i - 1]);
      const T* x = i == 0 ? tape_.basis.data() + e * nb : lt.a[i - 1].data() + e * fan;
      const double* W = w_ + plan.radial[i];
      const double s = 1.0 / std::sqrt(static_cast<double>(fan));
      for (std::size_t j = 0; j < fan; ++j) dnext[j] = T(0.0);
      for (std::size_t o = 0; o < width; ++o) {
        const T g = s * dcur[o];
        for (std::size_t j = 0; j < fan; ++j) dnext[j] += W[o * fan + j] * g;
        if (gp)
          for (std::size_t j = 0; j < fan; ++j) gp[plan.radial[i] + o * fan + j] += g * x[j];
      }
      if (i == 0) {
        for (std::size_t j = 0; j < nb; ++j) dbasis[e * nb + j] += dnext[j];
      } else {
        const T* z = lt.z[i - 1].data() + e * fan;
        for (std::size_t j = 0; j < fan; ++j) dcur[j] = dnext[j] * silu_grad(z[j]);
        width = fan;
      }
    }
  }
}

template <class T>
void Evaluator<T>::backward(const EvalOptions& opt, Evaluation<T>& out) {
  using std::cos;
  using std::sin;
  auto& tp = tape_;
  const std::size_t N = tp.n_atoms, E = tp.n_edges, nb = static_cast<std::size_t>(c_.n_bessel);
  const std::size_t lh = static_cast<std::size_t>(c_.L_max + 1);
  const double inv_sd = 1.0 / std::sqrt(static_cast<double>(d_));
  const double res_scale = 1.0 / std::sqrt(static_cast<double>(d_ * ns_));
  const double scale = params_.scale;
  const std::size_t ns_store = m_.node_storage();
  const bool coupled = c_.variant == ModelVariant::sym_lt;
  const std::size_t per_path = coupled ? d_ * dp_ : d_;

  T* gp = nullptr;
  if (opt.param_grad) {
    out.grad_params.assign(m_.num_params(), T(0.0));
    gp = out.grad_params.data();
  }
  buf<T> dY(E * tp.y_size, T(0.0)), dbasis(E * nb, T(0.0)), dfc_acc(E, T(0.0));
  buf<T> dh(N * fh_.stride, T(0.0));
  auto& P = detail::scratch<T>(6, pow3(c_.l_max));
  auto& dP = detail::scratch<T>(7, pow3(c_.l_max));

  for (int t = c_.layers; t >= 1; --t) {
    const auto& plan = m_.plans()[static_cast<std::size_t>(t - 1)];
    const auto& lt = tp.layers[static_cast<std::size_t>(t - 1)];
    const std::size_t no = plan.radial_outputs;

    // readout
    if (t < c_.layers) {
      for (std::size_t a = 0; a < N; ++a)
        for (std::size_t k = 0; k < d_; ++k) {
          dh[fh_.at(a, 0, k)] += scale * inv_sd * w_[plan.readout + k];
          if (gp) gp[plan.readout + k] += scale * inv_sd * lt.h[fh_.at(a, 0, k)];
        }
    } else {
      const auto H = static_cast<std::size_t>(c_.readout_hidden);
      const double inv_sh = 1.0 / std::sqrt(static_cast<double>(H));
      for (std::size_t a = 0; a < N; ++a)
        for (std::size_t j = 0; j < H; ++j) {
          const T& z = lt.ro_z[a * H + j];
          if (gp) gp[plan.readout2 + j] += scale * inv_sh * silu(z);
          const T dz = scale * inv_sh * w_[plan.readout2 + j] * silu_grad(z);
          for (std::size_t k = 0; k < d_; ++k) {
            dh[fh_.at(a, 0, k)] += inv_sd * w_[plan.readout + j * d_ + k] * dz;
            if (gp) gp[plan.readout + j * d_ + k] += inv_sd * dz * lt.h[fh_.at(a, 0, k)];
          }
        }
    }

    // update
    buf<T> dm(N * fh_.stride, T(0.0));
    buf<T> dhprev;
    if (t >= 2) dhprev.assign(N * fh_.stride, T(0.0));
    for (std::size_t a = 0; a < N; ++a) {
      const std::size_t s = tp.species[a];
      for (int L = 0; L <= c_.L_max; ++L) {
        const std::size_t nL = pow3(L);
        for (std::size_t k = 0; k < d_; ++k) {
          const T* g = dh.data() + fh_.at(a, L, k);
          for (std::size_t kk = 0; kk < d_; ++kk) {
            const std::size_t wi = plan.update + (static_cast<std::size_t>(L) * d_ + k) * d_ + kk;
            axpy(T(inv_sd * w_[wi]), g, dm.data() + fh_.at(a, L, kk), nL);
            if (gp) gp[wi] += inv_sd * dot(g, lt.m.data() + fh_.at(a, L, kk), nL);
          }
          if (t >= 2) {
            const auto& hprev = tp.layers[static_cast<std::size_t>(t - 2)].h;
            for (std::size_t kk = 0; kk < d_; ++kk) {
              const std::size_t wi = plan.residual + ((s * lh + static_cast<std::size_t>(L)) * d_ + k) * d_ + kk;
              axpy(T(res_scale * w_[wi]), g, dhprev.data() + fh_.at(a, L, kk), nL);
              if (gp) gp[wi] += res_scale * dot(g, hprev.data() + fh_.at(a, L, kk), nL);
            }
          }
        }
      }
    }

    // messages
    buf<T> dAt(N * fat_.stride, T(0.0)), dnodes(N * dp_ * ns_store, T(0.0));
    for (std::size_t a = 0; a < N; ++a) {
      const std::size_t s = tp.species[a];
      for (std::size_t p = 0; p < np_; ++p) {
        const auto& path = m_.paths()[p];
        const int L = path.spec.target;
        const std::size_t nL = pow3(L);
        const std::size_t wbase = plan.message + (s * np_ + p) * per_path;
        for (std::size_t k = 0; k < d_; ++k) {
          const T* g = dm.data() + fh_.at(a, L, k);
          if (!coupled) {
            axpy(T(w_[wbase + k]), g, node_ptr(m_, fat_, dp_, dAt.data(), dnodes.data(), path.node, a, k), nL);
            if (gp) gp[wbase + k] += dot(g, node_ptr(m_, fat_, dp_, lt.At.data(), lt.nodes.data(), path.node, a, k), nL);
          } else {
            for (std::size_t kp = 0; kp < dp_; ++kp) {
              axpy(T(w_[wbase + k * dp_ + kp]), g, node_ptr(m_, fat_, dp_, dAt.data(), dnodes.data(), path.node, a, kp),
                   nL);
              if (gp)
                gp[wbase + k * dp_ + kp] +=
                    dot(g, node_ptr(m_, fat_, dp_, lt.At.data(), lt.nodes.data(), path.node, a, kp), nL);
            }
          }
        }
      }
    }

    // product basis, children before parents
    const auto& trie = m_.trie();
    for (std::size_t n = trie.size(); n-- > 0;) {
      const auto& node = trie[n];
      if (node.parent < 0) continue;
      for (std::size_t a = 0; a < N; ++a)
        for (std::size_t kp = 0; kp < dp_; ++kp) {
          const T* x = node_ptr(m_, fat_, dp_, lt.At.data(), lt.nodes.data(), node.parent, a, kp);
          const T* y = lt.At.data() + fat_.at(a, node.leaf, kp);
          const T* dz = node_ptr(m_, fat_, dp_, dAt.data(), dnodes.data(), static_cast<int>(n), a, kp);
          T* dx = node_ptr(m_, fat_, dp_, dAt.data(), dnodes.data(), node.parent, a, kp);
          T* dy = dAt.data() + fat_.at(a, node.leaf, kp);
          detail::product_backward(*node.spec, x, y, dz, dx, dy);
        }
    }

    // channel mixing into the product basis
    buf<T> dA(N * fa_.stride, T(0.0));
    for (std::size_t a = 0; a < N; ++a)
      for (int l = 0; l <= c_.l_max; ++l)
        for (std::size_t kp = 0; kp < dp_; ++kp) {
          const T* g = dAt.data() + fat_.at(a, l, kp);
          for (std::size_t k = 0; k < d_; ++k) {
            const std::size_t wi = plan.product_mix + (static_cast<std::size_t>(l) * dp_ + kp) * d_ + k;
            axpy(T(inv_sd * w_[wi]), g, dA.data() + fa_.at(a, l, k), pow3(l));
            if (gp) gp[wi] += inv_sd * dot(g, lt.A.data() + fa_.at(a, l, k), pow3(l));
          }
        }

    // two-body features
    buf<T> dR(E * no, T(0.0));
    if (t == 1) {
      const std::size_t eoff = m_.block("embedding").offset;
      for (std::size_t e = 0; e < E; ++e) {
        const auto& edge = nl_.edges[e];
        const auto u = static_cast<std::size_t>(edge.u);
        const std::size_t sv = tp.species[static_cast<std::size_t>(edge.v)];
        for (int l = 0; l <= c_.l_max; ++l) {
          const std::size_t yo = e * tp.y_size + tp.y_off[static_cast<std::size_t>(l)];
          for (std::size_t k = 0; k < d_; ++k) {
            const T* g = dA.data() + fa_.at(u, l, k);
            const T gy = dot(g, tp.Y.data() + yo, pow3(l));
            const double wemb = w_[eoff + k * ns_ + sv];
            const T Rv = lt.R[e * no + static_cast<std::size_t>(l) * d_ + k];
            dR[e * no + static_cast<std::size_t>(l) * d_ + k] = gy * wemb;
            if (gp) gp[eoff + k * ns_ + sv] += gy * Rv;
            axpy(Rv * wemb, g, dY.data() + yo, pow3(l));
          }
        }
      }
    } else {
      buf<T> dhmix(N * fh_.stride, T(0.0));
      const auto& triples = m_.triples();
      for (std::size_t e = 0; e < E; ++e) {
        const auto& edge = nl_.edges[e];
        const auto u = static_cast<std::size_t>(edge.u), v = static_cast<std::size_t>(edge.v);
        for (std::size_t ti = 0; ti < triples.size(); ++ti) {
          const auto& tr = triples[ti];
          const std::size_t yo = e * tp.y_size + tp.y_off[static_cast<std::size_t>(tr.l1)];
          const T* y = tp.Y.data() + yo;
          const std::size_t n3 = pow3(tr.l3);
          for (std::size_t k = 0; k < d_; ++k) {
            const T* g = dA.data() + fa_.at(u, tr.l3, k);
            const T* hm = lt.hmix.data() + fh_.at(v, tr.l2, k);
            for (std::size_t i = 0; i < n3; ++i) P[i] = T(0.0);
            detail::product_accumulate(*tr.spec, y, hm, P.data());
            dR[e * no + ti * d_ + k] = dot(g, P.data(), n3);
            const T Rv = lt.R[e * no + ti * d_ + k];
            for (std::size_t i = 0; i < n3; ++i) dP[i] = Rv * g[i];
            detail::product_backward(*tr.spec, y, hm, dP.data(), dY.data() + yo, dhmix.data() + fh_.at(v, tr.l2, k));
          }
        }
      }
      const auto& hprev = tp.layers[static_cast<std::size_t>(t - 2)].h;
      for (std::size_t a = 0; a < N; ++a)
        for (int l = 0; l <= c_.L_max; ++l)
          for (std::size_t k = 0; k < d_; ++k) {
            const T* g = dhmix.data() + fh_.at(a, l, k);
            for (std::size_t kk = 0; kk < d_; ++kk) {
              const std::size_t wi = plan.mix + (static_cast<std::size_t>(l) * d_ + k) * d_ + kk;
              axpy(T(inv_sd * w_[wi]), g, dhprev.data() + fh_.at(a, l, kk), pow3(l));
              if (gp) gp[wi] += inv_sd * dot(g, hprev.data() + fh_.at(a, l, kk), pow3(l));
            }
          }
    }
    radial_backward(plan, lt, dR, dbasis, dfc_acc, gp);
    if (t >= 2) dh.swap(dhprev);
  }

  if (!opt.position_grad) return;
  out.grad_positions.assign(N, {T(0.0), T(0.0), T(0.0)});
  const double rc = c_.cutoff, pref = std::sqrt(2.0 / rc);
  for (std::size_t e = 0; e < E; ++e) {
    const T& r = tp.r[e];
    const T* rh = tp.rhat.data() + 3 * e;
    T dr = dfc_acc[e] * tp.dfc[e];
    for (std::size_t j = 0; j < nb; ++j) {
      const double aj = static_cast<double>(j + 1) * std::numbers::pi / rc;
      const T sv = sin(aj * r), cv = cos(aj * r);
      const T g = pref * sv / r;
      const T dg = pref * (aj * cv * r - sv) / (r * r);
      dr += dbasis[e * nb + j] * (dg * tp.fc[e] + g * tp.dfc[e]);
    }
    T drh[3] = {T(0.0), T(0.0), T(0.0)};
    for (int l = 1; l <= c_.l_max; ++l)
      detail::build_irreducible_backward(rh, l, dY.data() + e * tp.y_size + tp.y_off[static_cast<std::size_t>(l)], drh);
    const T proj = rh[0] * drh[0] + rh[1] * drh[1] + rh[2] * drh[2];
    const auto& edge = nl_.edges[e];
    auto& gu = out.grad_positions[static_cast<std::size_t>(edge.u)];
    auto& gv = out.grad_positions[static_cast<std::size_t>(edge.v)];
    for (std::size_t i = 0; i < 3; ++i) {
      const T dv = (drh[i] - rh[i] * proj) / r + dr * rh[i];
      gu[i] += dv;
      gv[i] -= dv;
    }
  }
}

}  // namespace

template <class T>
Evaluation<T> evaluate(const Model& model, const ModelParams& params, const AtomicConfiguration& cfg,
                       const NeighborList& nl, const std::vector<std::array<T, 3>>& positions,
                       const EvalOptions& options) {
  Evaluator<T> ev(model, params, cfg, nl);
  Evaluation<T> out;
  out.energy = ev.forward(positions);
  out.atom_energies.assign(ev.tape().atom_e.begin(), ev.tape().atom_e.end());
  if (options.position_grad || options.param_grad) ev.backward(options, out);
  return out;
}

template Evaluation<double> evaluate<double>(const Model&, const ModelParams&, const AtomicConfiguration&,
                                             const NeighborList&, const std::vector<std::array<double, 3>>&,
                                             const EvalOptions&);
template Evaluation<Dual> evaluate<Dual>(const Model&, const ModelParams&, const AtomicConfiguration&,
                                         const NeighborList&, const std::vector<std::array<Dual, 3>>&,
                                         const EvalOptions&);

std::vector<IntermediateTensor> collect_intermediates(const Model& model, const ModelParams& params,
                                                      const AtomicConfiguration& cfg) {
  const auto nl = build_neighbor_list(cfg, model.config().cutoff);
  Evaluator<double> ev(model, params, cfg, nl);
  ev.forward(cfg.positions);
  const auto& c = model.config();
  const auto d = static_cast<std::size_t>(c.channels), dp = static_cast<std::size_t>(c.product_channels());
  const FeatureLayout fa(c.l_max, d), fat(c.l_max, dp), fh(c.L_max, d);
  std::vector<IntermediateTensor> out;
  auto emit = [&](const char* kind, int layer, std::size_t atom, std::size_t k, int rank, const double* data) {
    out.push_back({kind, layer, static_cast<int>(atom), static_cast<int>(k),
                   IrrepTensor(rank, std::vector<double>(data, data + pow3(rank)))});
  };
  for (int t = 1; t <= c.layers; ++t) {
    const auto& lt = ev.tape().layers[static_cast<std::size_t>(t - 1)];
    for (std::size_t a = 0; a < cfg.size(); ++a) {
      for (int l = 0; l <= c.l_max; ++l) {
        for (std::size_t k = 0; k < d; ++k) emit("A", t, a, k, l, lt.A.data() + fa.at(a, l, k));
        for (std::size_t k = 0; k < dp; ++k) emit("A_mixed", t, a, k, l, lt.At.data() + fat.at(a, l, k));
      }
      for (std::size_t n = 0; n < model.trie().size(); ++n) {
        const auto& node = model.trie()[n];
        if (node.parent < 0) continue;
        for (std::size_t k = 0; k < dp; ++k)
          emit("B", t, a, k, node.rank,
               Evaluator<double>::node_ptr(model, fat, dp, lt.At.data(), lt.nodes.data(), static_cast<int>(n), a, k));
      }
      for (int L = 0; L <= c.L_max; ++L)
        for (std::size_t k = 0; k < d; ++k) {
          emit("m", t, a, k, L, lt.m.data() + fh.at(a, L, k));
          emit("h", t, a, k, L, lt.h.data() + fh.at(a, L, k));
        }
    }
  }
  return out;
}

}  // namespace ictp
