#include "ictp/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <atomic>
#include <memory>
#include <new>
#include <numeric>
#include <ostream>
#include <random>
#include <set>
#include <thread>

#include "ictp/detail/kernels.hpp"
#include "ictp/detail/product_kernels.hpp"
#include "ictp/error.hpp"
#include "ictp/grad.hpp"
#include "ictp/memory.hpp"
#include "ictp/spherical.hpp"

namespace ictp {

ProductCounters count_product_ops(int l1, int l2, int l3) { return product_spec(l1, l2, l3).counters; }

std::uint64_t placement_count(int l, int m) {
  if (l < 0 || m < 0 || 2 * m > l) throw InvalidArgument("placement_count: need 0 <= 2m <= l");
  std::uint64_t num = 1;
  for (int i = l - 2 * m + 1; i <= l; ++i) num *= static_cast<std::uint64_t>(i);
  std::uint64_t den = 1;
  for (int i = 1; i <= m; ++i) den *= 2u * static_cast<std::uint64_t>(i);
  return num / den;
}

std::string to_string(BenchVariant v) {
  switch (v) {
    case BenchVariant::full: return "full";
    case BenchVariant::sym: return "sym";
    case BenchVariant::sym_lt: return "sym_lt";
    case BenchVariant::cartesian_kernel: return "cartesian_kernel";
    case BenchVariant::cg_kernel: return "cg_kernel";
  }
  return "?";
}

BenchVariant parse_bench_variant(const std::string& s) {
  for (auto v : {BenchVariant::full, BenchVariant::sym, BenchVariant::sym_lt, BenchVariant::cartesian_kernel,
                 BenchVariant::cg_kernel})
    if (s == to_string(v)) return v;
  if (s == "sym+lt" || s == "lt") return BenchVariant::sym_lt;
  if (s == "cartesian") return BenchVariant::cartesian_kernel;
  if (s == "cg") return BenchVariant::cg_kernel;
  throw InvalidArgument("unknown benchmark variant '" + s + "'");
}

AtomicConfiguration bench_structure() {
  AtomicConfiguration c;
  std::mt19937_64 rng(27);
  std::uniform_real_distribution<double> jitter(-0.1, 0.1);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      for (int k = 0; k < 3; ++k)
        c.positions.push_back({1.6 * i + jitter(rng), 1.6 * j + jitter(rng), 1.6 * k + jitter(rng)});
  c.atomic_numbers.assign(c.size(), 1);
  return c;
}

ModelConfig bench_model_config(BenchVariant variant, int L, int nu, int channels) {
  auto c = ModelConfig::preset("bench");
  c.l_max = L;
  c.L_max = L;
  c.nu = nu;
  c.channels = channels;
  c.latent_channels = std::max(1, channels / 2);
  c.species = {1};
  c.variant = variant == BenchVariant::sym || variant == BenchVariant::sym_lt
                  ? (variant == BenchVariant::sym ? ModelVariant::sym : ModelVariant::sym_lt)
                  : ModelVariant::full;
  return c;
}

namespace {

using Clock = std::chrono::steady_clock;

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

double thread_cpu_ms() {
  timespec ts{};
  clock_gettime(CLOCK_THREAD_CPUTIME_ID, &ts);
  return 1e3 * static_cast<double>(ts.tv_sec) + 1e-6 * static_cast<double>(ts.tv_nsec);
}

/// Milliseconds per call of `work`. A single thread is timed with its own CPU
/// clock, which ignores time spent descheduled by other processes; throughput
/// mode runs one call per thread concurrently and divides the wall time.
template <class F>
double timed(int threads, F&& work) {
  if (threads <= 1) {
    const double t0 = thread_cpu_ms();
    work();
    return thread_cpu_ms() - t0;
  }
  const auto t0 = Clock::now();
  std::vector<std::thread> pool;
  for (int i = 0; i < threads; ++i) pool.emplace_back(work);
  for (auto& t : pool) t.join();
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count() / threads;
}

/// Product basis alone over the model trie, for every atom and channel.
class KernelBench {
 public:
  KernelBench(const Model& model, bool spherical, std::size_t atoms)
      : model_(model), spherical_(spherical), atoms_(atoms), channels_(static_cast<std::size_t>(model.config().channels)) {
    const auto& trie = model.trie();
    offset_.resize(trie.size());
    for (std::size_t i = 0; i < trie.size(); ++i) {
      offset_[i] = storage_;
      storage_ += width(trie[i].rank);
    }
    std::mt19937_64 rng(5);
    std::normal_distribution<double> n(0.0, 1.0);
    values_.assign(atoms_ * channels_ * storage_, 0.0);
    for (std::size_t u = 0; u < atoms_ * channels_; ++u)
      for (std::size_t i = 0; i < trie.size(); ++i) {
        if (trie[i].parent >= 0) continue;
        const auto r = UnitVector::random(rng);
        const double s = n(rng);
        double* out = values_.data() + u * storage_ + offset_[i];
        if (spherical_) {
          const auto y = real_sh(trie[i].rank, r);
          for (std::size_t j = 0; j < y.size(); ++j) out[j] = s * y.components()[j];
        } else {
          detail::build_irreducible(r.c.data(), trie[i].rank, out);
          for (std::size_t j = 0; j < width(trie[i].rank); ++j) out[j] *= s;
        }
      }
  }


  void run() {
    const auto& trie = model_.trie();
    for (std::size_t u = 0; u < atoms_ * channels_; ++u) {
      double* base = values_.data() + u * storage_;
      for (std::size_t i = 0; i < trie.size(); ++i) {
        const auto& node = trie[i];
        if (node.parent < 0) continue;
        double* z = base + offset_[i];
        std::fill(z, z + width(node.rank), 0.0);
        const double* x = base + offset_[static_cast<std::size_t>(node.parent)];
        const double* y = base + offset_[static_cast<std::size_t>(node.leaf)];
        if (spherical_)
          cg_accumulate(trie[static_cast<std::size_t>(node.parent)].rank, node.leaf, node.rank, x, y, z);
        else
          detail::product_accumulate(*node.spec, x, y, z);
      }
    }
  }

 private:
  std::size_t width(int rank) const {
    return spherical_ ? static_cast<std::size_t>(2 * rank + 1) : pow3(rank);
  }

  const Model& model_;
  bool spherical_;
  std::size_t atoms_, channels_;
  std::size_t storage_ = 0;
  std::vector<std::size_t> offset_;
  tracked_vector<double> values_;
};

std::size_t predicted_bytes(const Model& model, std::size_t atoms) {
  const auto& c = model.config();
  const std::size_t dp = static_cast<std::size_t>(model.config().product_channels());
  std::size_t features = 0;
  for (int l = 0; l <= c.l_max; ++l) features += pow3(l);
  // two-body features and product-basis nodes, with their adjoints, for every layer
  const std::size_t per_atom = static_cast<std::size_t>(c.channels) * features + dp * model.node_storage();
  return 2 * static_cast<std::size_t>(c.layers) * atoms * per_atom * sizeof(double);
}

/// One grid point: its record, the prepared workload and the timings collected so far.
struct GridCell {
  BenchRecord rec;
  std::unique_ptr<Model> model;
  ModelParams params;
  std::vector<KernelBench> kernels;  // one per thread
  std::vector<double> times;
};

void prepare(const BenchConfig& cfg, GridCell& cell, const AtomicConfiguration& structure) {
  auto& rec = cell.rec;
  cell.model = std::make_unique<Model>(bench_model_config(rec.variant, rec.L, rec.nu, cfg.channels));
  const Model& model = *cell.model;
  rec.channels = cfg.channels;
  rec.paths = model.paths().size();
  for (const auto& p : model.paths())
    if (p.spec.order() == rec.nu) ++rec.top_paths;
  rec.basis_madds = model.product_basis_madds();
  if (predicted_bytes(model, structure.size()) > cfg.memory_budget) {
    rec.status = "OOM";
    return;
  }
  try {
    MemoryStats::reset_peak();
    const std::size_t base = MemoryStats::current();
    OpTally before;
    if (rec.variant == BenchVariant::cartesian_kernel || rec.variant == BenchVariant::cg_kernel) {
      const bool sph = rec.variant == BenchVariant::cg_kernel;
      cell.kernels.emplace_back(model, sph, structure.size());
      rec.peak_bytes = MemoryStats::peak() - base;
      for (int i = 1; i < cfg.threads; ++i) cell.kernels.push_back(cell.kernels.front());
      for (int i = 0; i < cfg.warmup; ++i) cell.kernels.front().run();
      before = op_tally();
      cell.kernels.front().run();
    } else {
      cell.params = model.init_params(1);
      for (int i = 0; i < cfg.warmup; ++i) energy_forces(model, cell.params, structure);
      MemoryStats::reset_peak();
      before = op_tally();
      energy_forces(model, cell.params, structure);
      rec.peak_bytes = MemoryStats::peak() - base;
    }
    rec.product_madds = op_tally().madds - before.madds;
    rec.permutation_terms = op_tally().permutation_terms - before.permutation_terms;
  } catch (const std::bad_alloc&) {
    rec.status = "OOM";
    cell.kernels.clear();
  }
}

double measure(int threads, GridCell& cell, const AtomicConfiguration& structure) {
  if (!cell.kernels.empty()) {
    if (threads <= 1) return timed(1, [&] { cell.kernels.front().run(); });
    std::atomic<std::size_t> next{0};
    return timed(threads, [&] { cell.kernels[next++].run(); });
  }
  return timed(threads, [&] { energy_forces(*cell.model, cell.params, structure); });
}

}  // namespace

std::vector<BenchRecord> bench_scaling(const BenchConfig& cfg) {
  if (cfg.channels < 1 || cfg.repeats < 1) throw InvalidArgument("bench_scaling: channels and repeats must be >= 1");
  for (int L : cfg.ranks)
    if (L < 0 || L > kMaxSphericalDegree - 1)
      throw InvalidArgument("bench_scaling: ranks must lie in 0.." + std::to_string(kMaxSphericalDegree - 1));
  for (int nu : cfg.orders)
    if (nu < 1) throw InvalidArgument("bench_scaling: correlation orders must be >= 1");
  const auto structure = bench_structure();

  std::vector<GridCell> cells;
  for (auto v : cfg.variants)
    for (int L : cfg.ranks)
      for (int nu : cfg.orders) {
        GridCell c;
        c.rec.variant = v;
        c.rec.L = L;
        c.rec.nu = nu;
        prepare(cfg, c, structure);
        cells.push_back(std::move(c));
      }

  // bring the core to a steady clock before the first measured round
  {
    const Model model(bench_model_config(BenchVariant::full, 2, 2, cfg.channels));
    const auto params = model.init_params(1);
    const auto t0 = Clock::now();
    while (std::chrono::duration<double>(Clock::now() - t0).count() < cfg.warmup_seconds)
      energy_forces(model, params, structure);
  }
  // Rounds visit every cell once in a fresh order, so drift in machine load
  // and the cache state left by the previous cell hit all cells alike; an
  // untimed call first brings the cell's own buffers back into cache.
  std::vector<std::size_t> order(cells.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(20);
  for (int r = 0; r < cfg.repeats; ++r) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t idx : order)
      if (auto& c = cells[idx]; c.rec.status == "ok") {
        try {
          measure(cfg.threads, c, structure);
          c.times.push_back(measure(cfg.threads, c, structure));
        } catch (const std::bad_alloc&) {
          c.rec.status = "OOM";
        }
      }
  }

  std::vector<BenchRecord> out;
  for (auto& c : cells) {
    if (c.rec.status == "ok") {
      c.rec.time_ms = median(c.times);
      std::vector<double> dev;
      for (double t : c.times) dev.push_back(std::abs(t - c.rec.time_ms));
      // sigma ~ 1.4826 MAD for normal noise; the median's error is ~1.2533 sigma / sqrt(n)
      c.rec.time_se_ms = 1.2533 * 1.4826 * median(dev) / std::sqrt(static_cast<double>(c.times.size()));
    }
    out.push_back(c.rec);
  }
  return out;
}

void write_bench_csv(std::ostream& os, const std::vector<BenchRecord>& records) {
  os << "variant,L,nu,channels,paths,top_paths,time_ms,time_se_ms,peak_bytes,product_madds,permutation_terms,basis_madds,"
        "status\n";
  char buf[128];
  for (const auto& r : records) {
    std::snprintf(buf, sizeof buf, "%.6g,%.3g", r.time_ms, r.time_se_ms);
    os << to_string(r.variant) << ',' << r.L << ',' << r.nu << ',' << r.channels << ',' << r.paths << ','
       << r.top_paths << ',' << buf << ',' << r.peak_bytes << ',' << r.product_madds << ',' << r.permutation_terms
       << ',' << r.basis_madds << ',' << r.status << '\n';
  }
}

void write_gnuplot_script(std::ostream& os, const std::string& csv_path, const std::vector<BenchRecord>& records) {
  std::set<std::string> variants;
  std::set<int> ranks;
  for (const auto& r : records) {
    variants.insert(to_string(r.variant));
    ranks.insert(r.L);
  }
  os << "set datafile separator ','\n"
        "set key autotitle columnhead\n"
        "set logscale y\n"
        "set xlabel 'correlation order nu'\n"
        "set ylabel 'time per structure (ms)'\n"
        "set terminal pngcairo size 1200,400\n"
        "set output 'bench.png'\n"
        "set multiplot layout 1,"
     << variants.size() << "\n";
  for (const auto& v : variants) {
    os << "set title '" << v << "'\nplot";
    bool first = true;
    for (int L : ranks) {
      os << (first ? " " : ", \\\n     ") << "'" << csv_path << "' using (strcol(1) eq '" << v << "' && $2 == " << L
         << " && strcol(13) eq 'ok' ? $3 : 1/0):7 with linespoints title 'L=" << L << "'";
      first = false;
    }
    os << "\n";
  }
  os << "unset multiplot\n";
}

double cost_model(int L, int nu, std::size_t top_paths) {
  const double f = std::pow(9.0, L) * std::tgamma(L + 1.0) / (std::pow(2.0, 0.5 * L) * std::tgamma(0.5 * L + 1.0));
  return static_cast<double>(top_paths) * std::pow(f, nu - 1);
}

const BenchRecord* find_record(const std::vector<BenchRecord>& records, BenchVariant variant, int L, int nu) {
  for (const auto& r : records)
    if (r.variant == variant && r.L == L && r.nu == nu) return &r;
  return nullptr;
}

bool not_slower(const BenchRecord& a, const BenchRecord& b, double z) {
  return a.time_ms <= b.time_ms + z * std::hypot(a.time_se_ms, b.time_se_ms);
}

std::vector<TrendViolation> monotonicity_violations(const std::vector<BenchRecord>& records, BenchVariant variant,
                                                    double z) {
  std::vector<TrendViolation> out;
  auto check = [&](const BenchRecord* lo, const BenchRecord* hi) {
    if (!lo || !hi || lo->status != "ok" || hi->status != "ok") return;
    if (!not_slower(*lo, *hi, z)) out.push_back({lo->L, lo->nu, hi->L, hi->nu, lo->time_ms, hi->time_ms});
  };
  for (const auto& r : records) {
    if (r.variant != variant) continue;
    check(&r, find_record(records, variant, r.L + 1, r.nu));
    check(&r, find_record(records, variant, r.L, r.nu + 1));
  }
  return out;
}

CostModelFit fit_cost_model(const std::vector<BenchRecord>& records, BenchVariant variant) {
  std::vector<double> y, d;
  for (const auto& r : records) {
    if (r.variant != variant || r.nu < 2 || r.basis_madds == 0 || r.top_paths == 0) continue;
    const double ly = std::log(static_cast<double>(r.basis_madds));
    y.push_back(ly);
    d.push_back(ly - std::log(cost_model(r.L, r.nu, r.top_paths)));
  }
  CostModelFit fit;
  fit.points = y.size();
  if (y.size() < 2) return fit;
  // single free constant: c = mean(log y - log model)
  double c = 0, ybar = 0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    c += d[i];
    ybar += y[i];
  }
  c /= static_cast<double>(y.size());
  ybar /= static_cast<double>(y.size());
  double ss_res = 0, ss_tot = 0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    ss_res += (d[i] - c) * (d[i] - c);
    ss_tot += (y[i] - ybar) * (y[i] - ybar);
  }
  fit.log_constant = c;
  fit.r2 = ss_tot > 0 ? 1.0 - ss_res / ss_tot : 0.0;
  return fit;
}

}  // namespace ictp
