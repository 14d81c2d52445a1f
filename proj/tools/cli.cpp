#include "cli.hpp"

#include <CLI11.hpp>
#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <numeric>
#include <random>
#include <sstream>
#include <thread>

#include "ictp/bench.hpp"
#include "ictp/check.hpp"
#include "ictp/checkpoint.hpp"
#include "ictp/error.hpp"
#include "ictp/grad.hpp"
#include "ictp/train.hpp"

namespace ictp::cli {
namespace {

constexpr std::uint64_t kDefaultSeed = 20240531;

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// "1..3" or "1,2,4".
std::vector<int> parse_int_list(const std::string& s) {
  std::vector<int> out;
  const auto dots = s.find("..");
  try {
    if (dots != std::string::npos) {
      const int a = std::stoi(s.substr(0, dots)), b = std::stoi(s.substr(dots + 2));
      if (b < a) throw InvalidArgument("empty range '" + s + "'");
      for (int i = a; i <= b; ++i) out.push_back(i);
      return out;
    }
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(std::stoi(item));
  } catch (const std::logic_error&) {
    throw InvalidArgument("expected a list like 1..3 or 1,2,4, got '" + s + "'");
  }
  if (out.empty()) throw InvalidArgument("empty list '" + s + "'");
  return out;
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, sep))
    if (!item.empty()) out.push_back(item);
  return out;
}

int resolve_threads(int t) {
  if (t < 0) throw InvalidArgument("--threads must be >= 0");
  return t == 0 ? static_cast<int>(std::max(1u, std::thread::hardware_concurrency())) : t;
}

/// Writes to `path`, or to `out` when the path is "-".
template <class F>
void emit(const std::string& path, std::ostream& out, F&& write) {
  if (path == "-") {
    write(out);
    return;
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open '" + path + "' for writing");
  write(f);
}

struct CheckArgs {
  std::uint64_t seed = kDefaultSeed;
  double tol = -1.0;
  bool fault = false;
};

int cmd_check(const CheckArgs& a, std::ostream& out, std::ostream& err) {
  CheckOptions o;
  o.seed = a.seed;
  if (a.tol >= 0) o.tolerance = a.tol;
  err << "seed = " << a.seed << "\n";
  std::vector<CheckResult> rs;
  if (a.fault) {
    testing::ScopedLeviCivitaFault fault;
    rs = run_check_suite(o);
  } else {
    rs = run_check_suite(o);
  }
  write_check_report(out, rs);
  const auto failed = std::count_if(rs.begin(), rs.end(), [](const CheckResult& r) { return !r.pass; });
  out << (failed ? "checks failed: " + std::to_string(failed) + " of " + std::to_string(rs.size())
                 : "all " + std::to_string(rs.size()) + " checks passed")
      << "\n";
  return failed ? check_failed : ok;
}

struct BenchArgs {
  std::string ranks = "1..3", orders = "1..4", variants = "full";
  int channels = 8, repeats = 20, threads = 1;
  double warmup_seconds = 1.0;
  double memory_mb = 8192;
  std::string csv = "-", plot;
};

int cmd_bench(const BenchArgs& a, std::ostream& out, std::ostream& err) {
  BenchConfig c;
  c.ranks = parse_int_list(a.ranks);
  c.orders = parse_int_list(a.orders);
  c.variants.clear();
  for (const auto& v : split(a.variants, ',')) c.variants.push_back(parse_bench_variant(v));
  c.channels = a.channels;
  c.repeats = a.repeats;
  c.threads = resolve_threads(a.threads);
  c.warmup_seconds = a.warmup_seconds;
  if (a.memory_mb <= 0) throw InvalidArgument("--memory-budget-mb must be positive");
  c.memory_budget = static_cast<std::size_t>(a.memory_mb * 1024.0 * 1024.0);
  const auto recs = bench_scaling(c);
  emit(a.csv, out, [&](std::ostream& os) { write_bench_csv(os, recs); });
  if (!a.plot.empty())
    emit(a.plot, out, [&](std::ostream& os) { write_gnuplot_script(os, a.csv == "-" ? "bench.csv" : a.csv, recs); });
  for (auto v : c.variants) {
    const auto fit = fit_cost_model(recs, v);
    if (fit.points >= 2)
      err << to_string(v) << ": cost-model fit over " << fit.points << " cells, log constant " << fit.log_constant
          << ", R^2 (log space) " << fit.r2 << "\n";
  }
  return ok;
}

struct TrainArgs {
  std::string manifest;
  std::string preset;
  std::string train_file, val_file;
  bool synthetic = false;
  int synthetic_count = 20;
  int epochs = -1;
  std::uint64_t seed = kDefaultSeed;
  bool seed_set = false;
  int threads = 1;
  std::string output, history;
};

int cmd_train(const TrainArgs& a, std::ostream& out, std::ostream& err) {
  Manifest m;
  if (!a.manifest.empty()) m = parse_manifest(slurp(a.manifest));
  if (!a.preset.empty()) {
    const auto species = m.model.species;
    m.model = ModelConfig::preset(a.preset);
    m.model.species = species;
  }
  if (a.synthetic) m.synthetic = a.synthetic_count;
  if (!a.train_file.empty()) m.train_file = a.train_file;
  if (!a.val_file.empty()) m.val_file = a.val_file;
  if (a.epochs >= 0) m.train.epochs = a.epochs;
  if (a.seed_set || a.manifest.empty()) m.train.seed = a.seed;
  m.train.threads = resolve_threads(a.threads);
  if (!a.output.empty()) m.output_model = a.output;
  if (!a.history.empty()) m.history_csv = a.history;
  err << "seed = " << m.train.seed << "\n";

  std::vector<AtomicConfiguration> train, val;
  if (m.synthetic > 0) {
    PairPotential pot;
    pot.z = m.model.species.front();
    train = synthetic_dataset(m.synthetic, m.train.seed, pot);
  } else if (!m.train_file.empty()) {
    train = read_extxyz(m.train_file);
  } else {
    throw InvalidArgument("train: give --synthetic, --train FILE or a manifest naming the data");
  }
  if (!m.val_file.empty()) {
    val = read_extxyz(m.val_file);
  } else {
    // deterministic split of the training pool
    std::vector<std::size_t> idx(train.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::mt19937_64 rng(m.train.seed ^ 0x9e3779b97f4a7c15ull);
    std::shuffle(idx.begin(), idx.end(), rng);
    const auto n_val = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(m.val_fraction * static_cast<double>(train.size()))));
    if (n_val >= train.size()) throw DataError("train: not enough configurations to hold out a validation set");
    std::vector<AtomicConfiguration> t2;
    for (std::size_t i = 0; i < idx.size(); ++i) (i < n_val ? val : t2).push_back(train[idx[i]]);
    train = std::move(t2);
  }
  const Model model(m.model);
  const auto result = train_loop(model, model.init_params(m.train.seed), train, val, m.train);
  save_checkpoint(m.output_model, model, result.params);
  emit(m.history_csv, out, [&](std::ostream& os) { write_history_csv(os, result.history); });
  const auto& first = result.history.front();
  const auto& last = result.history.back();
  err << "trained " << m.train.epochs << " epochs on " << train.size() << "+" << val.size()
      << " configurations; train force MAE " << first.train_force_mae << " -> " << last.train_force_mae
      << ", best validation epoch " << result.best_epoch << "; model written to " << m.output_model << "\n";
  return ok;
}

struct PredictArgs {
  std::string model, input, output = "-";
};

int cmd_predict(const PredictArgs& a, std::ostream& out, std::ostream&) {
  const auto ck = load_checkpoint(a.model);
  const Model model(ck.config);
  const auto frames = parse_extxyz_frames(slurp(a.input));
  if (frames.configs.empty()) throw DataError("predict: '" + a.input + "' contains no frames");
  std::string text;
  for (std::size_t i = 0; i < frames.configs.size(); ++i) {
    EnergyForces ef;
    try {
      ef = energy_forces(model, ck.params, frames.configs[i]);
    } catch (const DataError& e) {
      throw DataError("frame " + std::to_string(i) + " (line " + std::to_string(frames.raw[i].first_line) +
                      "): " + e.what());
    }
    text += annotate_frame(frames.raw[i], ef.energy, ef.forces);
  }
  emit(a.output, out, [&](std::ostream& os) { os << text; });
  return ok;
}

struct TensorArgs {
  int l = -1;
  std::string dir = "0,0,1";
  std::string product;
};

int cmd_tensor(const TensorArgs& a, std::ostream& out, std::ostream&) {
  if (!a.product.empty()) {
    const auto t = parse_int_list(a.product);
    if (t.size() != 3) throw InvalidArgument("--product expects l1,l2,l3");
    const auto& s = product_spec(t[0], t[1], t[2]);
    out << "product (" << s.l1 << "," << s.l2 << ")->" << s.l3 << "  parity "
        << (s.parity == Parity::even ? "even" : "odd") << "  k " << s.k << "  norm " << s.norm << "\n";
    for (const auto& term : s.terms)
      out << "  m=" << term.m << " folds=" << term.folds << " coefficient=" << term.coefficient
          << " placements=" << term.bracket.placements << " gather_entries=" << term.bracket.entries.size() << "\n";
    out << "  contraction_madds=" << s.counters.contraction_madds << " epsilon_madds=" << s.counters.epsilon_madds
        << " bracket_terms=" << s.counters.bracket_terms << " permutation_terms=" << s.counters.permutation_terms
        << " output_elements=" << s.counters.output_elements << "\n";
    if (a.l < 0) return ok;
  }
  if (a.l < 0) throw InvalidArgument("tensor: give --l or --product");
  const auto d = split(a.dir, ',');
  if (d.size() != 3) throw InvalidArgument("--dir expects x,y,z");
  std::array<double, 3> v{};
  try {
    for (std::size_t i = 0; i < 3; ++i) v[i] = std::stod(d[i]);
  } catch (const std::logic_error&) {
    throw InvalidArgument("--dir expects three numbers");
  }
  const auto t = build_irreducible(UnitVector::normalized(v), a.l);
  const char axis[] = {'x', 'y', 'z'};
  for (std::size_t i = 0; i < t.size(); ++i) {
    std::string name;
    std::size_t rest = i;
    for (int k = 0; k < a.l; ++k) {
      name.insert(name.begin(), axis[rest % 3]);
      rest /= 3;
    }
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", t[i]);
    out << "T[" << (a.l == 0 ? "" : name) << "] = " << buf << "\n";
  }
  return ok;
}

struct EdgeArgs {
  std::string input;
  double cutoff = 5.0;
  int frame = 0;
  std::string output = "-";
};

int cmd_dump_edges(const EdgeArgs& a, std::ostream& out, std::ostream&) {
  const auto frames = parse_extxyz(slurp(a.input));
  if (a.frame < 0 || static_cast<std::size_t>(a.frame) >= frames.size())
    throw DataError("dump-edges: frame " + std::to_string(a.frame) + " out of range (" +
                    std::to_string(frames.size()) + " frames)");
  const auto nl = build_neighbor_list(frames[static_cast<std::size_t>(a.frame)], a.cutoff);
  emit(a.output, out, [&](std::ostream& os) { write_edges_csv(os, nl); });
  return ok;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Irreducible Cartesian tensor potentials: checks, benchmarks, training and prediction", "ictp"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all");

  CheckArgs ca;
  auto* check = app.add_subcommand("check", "run the invariant suite; exit 1 on any failure");
  check->add_option("--seed", ca.seed, "random seed")->capture_default_str();
  check->add_option("--tol", ca.tol, "override every tolerance (>= 0)")->check(CLI::NonNegativeNumber);
  check->add_flag("--inject-epsilon-fault", ca.fault)->group("");
  int check_threads = 1;
  check->add_option("--threads", check_threads, "0 = auto, 1 = deterministic")->capture_default_str();

  BenchArgs ba;
  auto* bench = app.add_subcommand("bench", "scaling benchmark in L and nu, CSV output");
  bench->add_option("--L", ba.ranks, "tensor ranks, e.g. 1..3")->capture_default_str();
  bench->add_option("--nu", ba.orders, "correlation orders, e.g. 1..4")->capture_default_str();
  bench->add_option("--variants", ba.variants, "full,sym,sym_lt,cartesian_kernel,cg_kernel")->capture_default_str();
  bench->add_option("--channels", ba.channels)->capture_default_str();
  bench->add_option("--repeats", ba.repeats, "timed repeats per cell (median)")->capture_default_str();
  bench->add_option("--warmup-seconds", ba.warmup_seconds)->capture_default_str();
  bench->add_option("--memory-budget-mb", ba.memory_mb, "cells predicted above this are reported as OOM")
      ->capture_default_str();
  bench->add_option("--threads", ba.threads, "0 = auto, 1 = single-thread timing")->capture_default_str();
  bench->add_option("--csv", ba.csv, "output CSV ('-' = stdout)")->capture_default_str();
  bench->add_option("--plot", ba.plot, "also write a gnuplot script");

  TrainArgs ta;
  auto* train = app.add_subcommand("train", "train a model (manifest, extended-XYZ or synthetic data)");
  train->add_option("--manifest", ta.manifest, "key = value training manifest")->check(CLI::ExistingFile);
  train->add_option("--preset", ta.preset, "model preset: desk, bench, large");
  train->add_option("--train", ta.train_file, "training frames (extended XYZ)")->check(CLI::ExistingFile);
  train->add_option("--val", ta.val_file, "validation frames (extended XYZ)")->check(CLI::ExistingFile);
  train->add_flag("--synthetic", ta.synthetic, "train on pair-potential labelled dimers and trimers");
  train->add_option("--synthetic-count", ta.synthetic_count)->capture_default_str();
  train->add_option("--epochs", ta.epochs);
  train->add_option("--seed", ta.seed)->capture_default_str()->each([&](const std::string&) { ta.seed_set = true; });
  train->add_option("--threads", ta.threads, "0 = auto, 1 = deterministic")->capture_default_str();
  train->add_option("--output", ta.output, "model file (default model.ictp)");
  train->add_option("--history", ta.history, "history CSV (default history.csv, '-' = stdout)");

  PredictArgs pa;
  auto* predict = app.add_subcommand("predict", "annotate extended-XYZ frames with energies and forces");
  predict->add_option("--model", pa.model)->required()->check(CLI::ExistingFile);
  predict->add_option("--input", pa.input)->required()->check(CLI::ExistingFile);
  predict->add_option("--output", pa.output, "'-' = stdout")->capture_default_str();
  int predict_threads = 1;
  predict->add_option("--threads", predict_threads)->capture_default_str();

  TensorArgs xa;
  auto* tensor = app.add_subcommand("tensor", "print T_l(r) or a product table");
  tensor->add_option("--l", xa.l, "rank")->check(CLI::Range(0, kDefaultRankCap));
  tensor->add_option("--dir", xa.dir, "direction x,y,z (normalized)")->capture_default_str();
  tensor->add_option("--product", xa.product, "l1,l2,l3: print the product table");

  EdgeArgs ea;
  auto* edges = app.add_subcommand("dump-edges", "neighbor list of one frame as CSV");
  edges->add_option("--input", ea.input)->required()->check(CLI::ExistingFile);
  edges->add_option("--cutoff", ea.cutoff)->capture_default_str()->check(CLI::PositiveNumber);
  edges->add_option("--frame", ea.frame)->capture_default_str();
  edges->add_option("--output", ea.output)->capture_default_str();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? ok : usage_error;
  }

  try {
    if (*check) {
      resolve_threads(check_threads);
      return cmd_check(ca, out, err);
    }
    if (*bench) return cmd_bench(ba, out, err);
    if (*train) return cmd_train(ta, out, err);
    if (*predict) {
      resolve_threads(predict_threads);
      return cmd_predict(pa, out, err);
    }
    if (*tensor) return cmd_tensor(xa, out, err);
    if (*edges) return cmd_dump_edges(ea, out, err);
  } catch (const InvalidArgument& e) {
    err << "error: " << e.what() << "\n";
    return usage_error;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return data_error;
  } catch (const std::bad_alloc&) {
    err << "error: out of memory\n";
    return data_error;
  }
  return usage_error;
}

}  // namespace ictp::cli
