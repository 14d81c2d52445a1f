#include "ictp/atoms.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <ostream>
#include <set>
#include <sstream>
#include <tuple>

#include "ictp/error.hpp"

namespace ictp {

namespace {

constexpr std::string_view kSymbols[] = {
    "X",  "H",  "He", "Li", "Be", "B",  "C",  "N",  "O",  "F",  "Ne", "Na", "Mg", "Al", "Si", "P",  "S",
    "Cl", "Ar", "K",  "Ca", "Sc", "Ti", "V",  "Cr", "Mn", "Fe", "Co", "Ni", "Cu", "Zn", "Ga", "Ge", "As",
    "Se", "Br", "Kr", "Rb", "Sr", "Y",  "Zr", "Nb", "Mo", "Tc", "Ru", "Rh", "Pd", "Ag", "Cd", "In", "Sn",
    "Sb", "Te", "I",  "Xe", "Cs", "Ba", "La", "Ce", "Pr", "Nd", "Pm", "Sm", "Eu", "Gd", "Tb", "Dy", "Ho",
    "Er", "Tm", "Yb", "Lu", "Hf", "Ta", "W",  "Re", "Os", "Ir", "Pt", "Au", "Hg", "Tl", "Pb", "Bi", "Po",
    "At", "Rn", "Fr", "Ra", "Ac", "Th", "Pa", "U",  "Np", "Pu", "Am", "Cm", "Bk", "Cf", "Es", "Fm", "Md",
    "No", "Lr", "Rf", "Db", "Sg", "Bh", "Hs", "Mt", "Ds", "Rg", "Cn", "Nh", "Fl", "Mc", "Lv", "Ts", "Og"};
constexpr int kMaxZ = static_cast<int>(std::size(kSymbols)) - 1;

double det3(const Cell& a) {
  return a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1]) - a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0]) +
         a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0]);
}

Vec3 cross(const Vec3& a, const Vec3& b) {
  return {a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]};
}

double norm(const Vec3& a) { return std::sqrt(a[0] * a[0] + a[1] * a[1] + a[2] * a[2]); }

// Inverse of the row-vector cell so that s = r . inv.
Cell inverse(const Cell& a) {
  const double d = det3(a);
  Cell inv{};
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      const int i1 = (j + 1) % 3, i2 = (j + 2) % 3, j1 = (i + 1) % 3, j2 = (i + 2) % 3;
      inv[i][j] = (a[i1][j1] * a[i2][j2] - a[i1][j2] * a[i2][j1]) / d;
    }
  return inv;
}

Vec3 row_times(const Vec3& r, const Cell& m) {
  return {r[0] * m[0][0] + r[1] * m[1][0] + r[2] * m[2][0], r[0] * m[0][1] + r[1] * m[1][1] + r[2] * m[2][1],
          r[0] * m[0][2] + r[1] * m[1][2] + r[2] * m[2][2]};
}

struct Geometry {
  const AtomicConfiguration* cfg;
  double cutoff;
  bool periodic = false;
  std::array<bool, 3> pbc{false, false, false};
  Cell cell{};
  Cell inv{};
};

// The single edge test shared by both list builders, so their outputs are
// bit-identical. Appends the minimum-image edge u <- v if it lies within r_c.
void try_edge(const Geometry& g, int u, int v, std::vector<Edge>& out) {
  const auto& ru = g.cfg->positions[static_cast<std::size_t>(u)];
  const auto& rv = g.cfg->positions[static_cast<std::size_t>(v)];
  const Vec3 d{ru[0] - rv[0], ru[1] - rv[1], ru[2] - rv[2]};
  if (!g.periodic) {
    const double r = norm(d);
    if (r > g.cutoff) return;
    if (!(r > 0.0)) throw DataError("neighbor list: atoms " + std::to_string(u) + " and " + std::to_string(v) +
                                    " coincide");
    Edge e;
    e.u = u;
    e.v = v;
    e.r = r;
    e.r_hat = UnitVector::normalized(d);
    out.push_back(e);
    return;
  }
  const Vec3 ds = row_times(d, g.inv);
  std::array<int, 3> base{0, 0, 0};
  for (int i = 0; i < 3; ++i)
    if (g.pbc[static_cast<std::size_t>(i)]) base[static_cast<std::size_t>(i)] = static_cast<int>(std::lround(ds[static_cast<std::size_t>(i)]));
  double best = 0.0;
  std::array<int, 3> best_shift{};
  Vec3 best_vec{}, best_off{};
  bool found = false;
  const int span[3] = {g.pbc[0] ? 1 : 0, g.pbc[1] ? 1 : 0, g.pbc[2] ? 1 : 0};
  for (int a = -span[0]; a <= span[0]; ++a)
    for (int b = -span[1]; b <= span[1]; ++b)
      for (int c = -span[2]; c <= span[2]; ++c) {
        const std::array<int, 3> s{base[0] + a, base[1] + b, base[2] + c};
        Vec3 off{};
        for (int k = 0; k < 3; ++k)
          off[static_cast<std::size_t>(k)] = s[0] * g.cell[0][static_cast<std::size_t>(k)] +
                                             s[1] * g.cell[1][static_cast<std::size_t>(k)] +
                                             s[2] * g.cell[2][static_cast<std::size_t>(k)];
        const Vec3 vec{d[0] - off[0], d[1] - off[1], d[2] - off[2]};
        const double r = norm(vec);
        if (!found || r < best) {
          found = true;
          best = r;
          best_shift = s;
          best_vec = vec;
          best_off = off;
        }
      }
  if (best > g.cutoff) return;
  if (!(best > 0.0))
    throw DataError("neighbor list: atoms " + std::to_string(u) + " and " + std::to_string(v) + " coincide");
  Edge e;
  e.u = u;
  e.v = v;
  e.r = best;
  e.r_hat = UnitVector::normalized(best_vec);
  e.shift = best_shift;
  e.offset = best_off;
  out.push_back(e);
}

Geometry make_geometry(const AtomicConfiguration& cfg, double cutoff) {
  if (!(cutoff > 0.0) || !std::isfinite(cutoff)) throw InvalidArgument("neighbor list: cutoff must be positive");
  cfg.validate();
  Geometry g;
  g.cfg = &cfg;
  g.cutoff = cutoff;
  g.periodic = cfg.periodic();
  if (cfg.cell) {
    g.cell = *cfg.cell;
    g.inv = inverse(g.cell);
    g.pbc = cfg.pbc;
  }
  if (g.periodic) {
    const auto h = cell_heights(g.cell);
    for (int i = 0; i < 3; ++i)
      if (g.pbc[static_cast<std::size_t>(i)] && cutoff > 0.5 * h[static_cast<std::size_t>(i)])
        throw DataError("neighbor list: cutoff " + std::to_string(cutoff) + " exceeds half the cell height " +
                        std::to_string(h[static_cast<std::size_t>(i)]) + " along axis " + std::to_string(i) +
                        "; minimum-image convention does not apply");
  }
  return g;
}

void sort_edges(std::vector<Edge>& edges) {
  std::sort(edges.begin(), edges.end(), [](const Edge& a, const Edge& b) {
    return std::tie(a.u, a.v, a.shift) < std::tie(b.u, b.v, b.shift);
  });
}

std::vector<Edge> brute_force(const Geometry& g) {
  std::vector<Edge> edges;
  const int n = static_cast<int>(g.cfg->size());
  for (int u = 0; u < n; ++u)
    for (int v = 0; v < n; ++v)
      if (u != v) try_edge(g, u, v, edges);
  return edges;
}

// Bins atoms in fractional (or, without a cell, Cartesian) coordinates with
// bin width >= r_c / h_i, so any pair within r_c lies in adjacent bins.
std::vector<Edge> cell_list(const Geometry& g) {
  const auto& cfg = *g.cfg;
  const int n = static_cast<int>(cfg.size());
  std::vector<Vec3> s(cfg.size());
  Vec3 h{1.0, 1.0, 1.0};
  if (cfg.cell) h = cell_heights(g.cell);
  for (std::size_t a = 0; a < cfg.size(); ++a) {
    s[a] = cfg.cell ? row_times(cfg.positions[a], g.inv) : cfg.positions[a];
    for (std::size_t i = 0; i < 3; ++i)
      if (g.periodic && g.pbc[i]) s[a][i] -= std::floor(s[a][i]);
  }
  std::array<int, 3> nb{};
  Vec3 lo{}, width{};
  for (std::size_t i = 0; i < 3; ++i) {
    const double w = g.cutoff / h[i];
    if (g.periodic && g.pbc[i]) {
      nb[i] = std::max(1, static_cast<int>(std::floor(1.0 / w)));
      lo[i] = 0.0;
      width[i] = 1.0 / nb[i];
    } else {
      double mn = s[0][i], mx = s[0][i];
      for (const auto& p : s) {
        mn = std::min(mn, p[i]);
        mx = std::max(mx, p[i]);
      }
      // Sparse, widely spread systems get coarser (never finer) bins.
      constexpr int kMaxBins = 64;
      lo[i] = mn;
      width[i] = std::max(w, (mx - mn) / (kMaxBins - 1));
      nb[i] = std::clamp(static_cast<int>(std::floor((mx - mn) / width[i])) + 1, 1, kMaxBins);
    }
  }
  auto bin_of = [&](const Vec3& p) {
    std::array<int, 3> b{};
    for (std::size_t i = 0; i < 3; ++i) {
      b[i] = static_cast<int>(std::floor((p[i] - lo[i]) / width[i]));
      b[i] = std::clamp(b[i], 0, nb[i] - 1);
    }
    return b;
  };
  auto flat = [&](const std::array<int, 3>& b) { return (b[0] * nb[1] + b[1]) * nb[2] + b[2]; };
  std::vector<std::vector<int>> bins(static_cast<std::size_t>(nb[0] * nb[1] * nb[2]));
  std::vector<std::array<int, 3>> where(cfg.size());
  for (int a = 0; a < n; ++a) {
    where[static_cast<std::size_t>(a)] = bin_of(s[static_cast<std::size_t>(a)]);
    bins[static_cast<std::size_t>(flat(where[static_cast<std::size_t>(a)]))].push_back(a);
  }
  std::vector<Edge> edges;
  std::vector<int> nbr_bins;
  for (int u = 0; u < n; ++u) {
    const auto b = where[static_cast<std::size_t>(u)];
    nbr_bins.clear();
    for (int dx = -1; dx <= 1; ++dx)
      for (int dy = -1; dy <= 1; ++dy)
        for (int dz = -1; dz <= 1; ++dz) {
          std::array<int, 3> c{b[0] + dx, b[1] + dy, b[2] + dz};
          bool ok = true;
          for (std::size_t i = 0; i < 3; ++i) {
            if (g.periodic && g.pbc[i]) {
              c[i] = ((c[i] % nb[i]) + nb[i]) % nb[i];
            } else if (c[i] < 0 || c[i] >= nb[i]) {
              ok = false;
            }
          }
          if (ok) nbr_bins.push_back(flat(c));
        }
    std::sort(nbr_bins.begin(), nbr_bins.end());
    nbr_bins.erase(std::unique(nbr_bins.begin(), nbr_bins.end()), nbr_bins.end());
    for (int c : nbr_bins)
      for (int v : bins[static_cast<std::size_t>(c)])
        if (v != u) try_edge(g, u, v, edges);
  }
  return edges;
}

}  // namespace

void AtomicConfiguration::validate() const {
  if (positions.empty()) throw DataError("configuration has no atoms");
  if (atomic_numbers.size() != positions.size()) throw DataError("configuration: species/positions length mismatch");
  for (const auto& p : positions)
    for (double x : p)
      if (!std::isfinite(x)) throw DataError("configuration: non-finite coordinate");
  for (int z : atomic_numbers)
    if (z < 1 || z > kMaxZ) throw DataError("configuration: atomic number out of range: " + std::to_string(z));
  if (cell) {
    const double d = det3(*cell);
    if (!std::isfinite(d) || std::abs(d) < 1e-12) throw DataError("configuration: singular cell");
  }
  if (reference_forces && reference_forces->size() != positions.size())
    throw DataError("configuration: reference forces length mismatch");
}

Vec3 cell_heights(const Cell& cell) {
  const double vol = std::abs(det3(cell));
  Vec3 h{};
  for (int i = 0; i < 3; ++i) {
    const auto c = cross(cell[static_cast<std::size_t>((i + 1) % 3)], cell[static_cast<std::size_t>((i + 2) % 3)]);
    h[static_cast<std::size_t>(i)] = vol / norm(c);
  }
  return h;
}

NeighborList build_neighbor_list(const AtomicConfiguration& cfg, double cutoff, NeighborMethod method) {
  const Geometry g = make_geometry(cfg, cutoff);
  NeighborList nl;
  nl.cutoff = cutoff;
  nl.edges = method == NeighborMethod::brute_force ? brute_force(g) : cell_list(g);
  sort_edges(nl.edges);
  return nl;
}

int atomic_number(std::string_view symbol) {
  for (int z = 1; z <= kMaxZ; ++z)
    if (kSymbols[z] == symbol) return z;
  throw DataError("unknown element symbol '" + std::string(symbol) + "'");
}

std::string_view element_symbol(int z) {
  if (z < 1 || z > kMaxZ) throw InvalidArgument("atomic number out of range: " + std::to_string(z));
  return kSymbols[z];
}

// ---------------------------------------------------------------------------
// extended XYZ

namespace {

struct CommentEntry {
  std::string key;
  std::string value;
  bool has_value = false;
};

bool iequals(std::string_view a, std::string_view b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (std::tolower(static_cast<unsigned char>(a[i])) != std::tolower(static_cast<unsigned char>(b[i]))) return false;
  return true;
}

std::vector<CommentEntry> parse_comment(std::string_view line, const std::string& where) {
  std::vector<CommentEntry> out;
  std::size_t i = 0;
  auto skip_ws = [&] {
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
  };
  auto read_token = [&](bool stop_at_eq) {
    std::string tok;
    if (i < line.size() && (line[i] == '"' || line[i] == '\'')) {
      const char q = line[i++];
      while (i < line.size() && line[i] != q) tok += line[i++];
      if (i >= line.size()) throw DataError(where + ": unterminated quote in comment line");
      ++i;
      return tok;
    }
    while (i < line.size() && !std::isspace(static_cast<unsigned char>(line[i])) && !(stop_at_eq && line[i] == '='))
      tok += line[i++];
    return tok;
  };
  skip_ws();
  while (i < line.size()) {
    CommentEntry e;
    e.key = read_token(true);
    skip_ws();
    if (i < line.size() && line[i] == '=') {
      ++i;
      skip_ws();
      e.value = read_token(false);
      e.has_value = true;
    }
    if (e.key.empty()) throw DataError(where + ": malformed key=value in comment line");
    out.push_back(std::move(e));
    skip_ws();
  }
  return out;
}

std::vector<std::string_view> split_ws(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i]))) ++i;
    const std::size_t b = i;
    while (i < s.size() && !std::isspace(static_cast<unsigned char>(s[i]))) ++i;
    if (i > b) out.push_back(s.substr(b, i - b));
  }
  return out;
}

double parse_double(std::string_view tok, const std::string& where) {
  std::string t(tok);
  char* end = nullptr;
  const double v = std::strtod(t.c_str(), &end);
  if (t.empty() || end != t.c_str() + t.size()) throw DataError(where + ": cannot parse number '" + t + "'");
  if (!std::isfinite(v)) throw DataError(where + ": non-finite number '" + t + "'");
  return v;
}

struct Column {
  std::string name;
  char type;
  int count;
  int offset;
};

std::vector<Column> parse_properties(const std::string& spec, const std::string& where) {
  std::vector<std::string> parts;
  std::string cur;
  for (char c : spec) {
    if (c == ':') {
      parts.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  parts.push_back(cur);
  if (parts.size() % 3 != 0) throw DataError(where + ": Properties must be name:type:count triples");
  std::vector<Column> cols;
  int offset = 0;
  for (std::size_t k = 0; k < parts.size(); k += 3) {
    Column c;
    c.name = parts[k];
    if (parts[k + 1].size() != 1 || std::string("SRIL").find(parts[k + 1][0]) == std::string::npos)
      throw DataError(where + ": unknown Properties type '" + parts[k + 1] + "'");
    c.type = parts[k + 1][0];
    try {
      c.count = std::stoi(parts[k + 2]);
    } catch (const std::exception&) {
      throw DataError(where + ": bad Properties column count '" + parts[k + 2] + "'");
    }
    if (c.count < 1) throw DataError(where + ": bad Properties column count");
    c.offset = offset;
    offset += c.count;
    cols.push_back(c);
  }
  return cols;
}

const Column* find_column(const std::vector<Column>& cols, std::initializer_list<std::string_view> names) {
  for (const auto& c : cols)
    for (auto n : names)
      if (iequals(c.name, n)) return &c;
  return nullptr;
}

bool parse_bool(std::string_view t) { return t == "T" || t == "t" || t == "True" || t == "true" || t == "1"; }

}  // namespace

ParsedFrames parse_extxyz_frames(std::string_view text) {
  std::vector<std::string> lines;
  {
    std::size_t b = 0;
    while (b <= text.size()) {
      const std::size_t e = text.find('\n', b);
      if (e == std::string_view::npos) {
        if (b < text.size()) lines.emplace_back(text.substr(b));
        break;
      }
      lines.emplace_back(text.substr(b, e - b));
      b = e + 1;
    }
    for (auto& l : lines)
      if (!l.empty() && l.back() == '\r') l.pop_back();
  }
  ParsedFrames out;
  std::size_t li = 0;
  int frame = 0;
  auto blank = [](const std::string& s) { return split_ws(s).empty(); };
  while (li < lines.size()) {
    if (blank(lines[li])) {
      ++li;
      continue;
    }
    const std::string where0 = "frame " + std::to_string(frame) + ", line " + std::to_string(li + 1);
    RawFrame raw;
    raw.first_line = li + 1;
    raw.count_line = lines[li];
    const auto count_tok = split_ws(lines[li]);
    long n = -1;
    if (count_tok.size() == 1) {
      const auto* b = count_tok[0].data();
      const auto res = std::from_chars(b, b + count_tok[0].size(), n);
      if (res.ec != std::errc() || res.ptr != b + count_tok[0].size()) n = -1;
    }
    if (n < 1) throw DataError(where0 + ": malformed atom count line '" + lines[li] + "'");
    if (li + 1 >= lines.size()) throw DataError(where0 + ": missing comment line");
    raw.comment_line = lines[li + 1];
    const std::string where_c = "frame " + std::to_string(frame) + ", line " + std::to_string(li + 2);
    const auto entries = parse_comment(lines[li + 1], where_c);

    AtomicConfiguration cfg;
    std::vector<Column> cols = parse_properties("species:S:1:pos:R:3", where_c);
    bool have_pbc = false;
    for (const auto& e : entries) {
      if (iequals(e.key, "Lattice")) {
        const auto t = split_ws(e.value);
        if (t.size() != 9) throw DataError(where_c + ": Lattice needs 9 numbers");
        Cell c{};
        for (std::size_t k = 0; k < 9; ++k) c[k / 3][k % 3] = parse_double(t[k], where_c);
        cfg.cell = c;
      } else if (iequals(e.key, "Properties")) {
        cols = parse_properties(e.value, where_c);
      } else if (iequals(e.key, "energy")) {
        cfg.reference_energy = parse_double(e.value, where_c);
      } else if (iequals(e.key, "pbc")) {
        const auto t = split_ws(e.value);
        if (t.size() != 3) throw DataError(where_c + ": pbc needs 3 flags");
        for (std::size_t k = 0; k < 3; ++k) cfg.pbc[k] = parse_bool(t[k]);
        have_pbc = true;
      }
    }
    if (cfg.cell && !have_pbc) cfg.pbc = {true, true, true};
    if (!cfg.cell) cfg.pbc = {false, false, false};
    const Column* species = find_column(cols, {"species"});
    const Column* zcol = find_column(cols, {"Z", "numbers"});
    const Column* pos = find_column(cols, {"pos", "positions"});
    const Column* forces = find_column(cols, {"forces", "force"});
    if (!pos || pos->count != 3 || pos->type != 'R') throw DataError(where_c + ": Properties lacks pos:R:3");
    if (!species && !zcol) throw DataError(where_c + ": Properties lacks species or Z");
    if (forces && (forces->count != 3 || forces->type != 'R')) throw DataError(where_c + ": forces must be R:3");
    int ncol = 0;
    for (const auto& c : cols) ncol += c.count;

    std::vector<Vec3> f;
    for (long a = 0; a < n; ++a) {
      const std::size_t row = li + 2 + static_cast<std::size_t>(a);
      const std::string where_r = "frame " + std::to_string(frame) + ", line " + std::to_string(row + 1);
      if (row >= lines.size())
        throw DataError(where_r + ": expected " + std::to_string(n) + " atom rows, file ended after " +
                        std::to_string(a));
      const auto tok = split_ws(lines[row]);
      if (static_cast<int>(tok.size()) != ncol)
        throw DataError(where_r + ": expected " + std::to_string(ncol) + " columns, found " +
                        std::to_string(tok.size()) + " (atom rows fewer than count line?)");
      raw.atom_lines.push_back(lines[row]);
      if (species) {
        cfg.atomic_numbers.push_back(atomic_number(tok[static_cast<std::size_t>(species->offset)]));
      } else {
        const double z = parse_double(tok[static_cast<std::size_t>(zcol->offset)], where_r);
        cfg.atomic_numbers.push_back(static_cast<int>(z));
      }
      Vec3 p{};
      for (std::size_t k = 0; k < 3; ++k) p[k] = parse_double(tok[static_cast<std::size_t>(pos->offset) + k], where_r);
      cfg.positions.push_back(p);
      if (forces) {
        Vec3 fv{};
        for (std::size_t k = 0; k < 3; ++k)
          fv[k] = parse_double(tok[static_cast<std::size_t>(forces->offset) + k], where_r);
        f.push_back(fv);
      }
    }
    if (forces) cfg.reference_forces = std::move(f);
    try {
      cfg.validate();
    } catch (const DataError& e) {
      throw DataError(where0 + ": " + e.what());
    }
    out.configs.push_back(std::move(cfg));
    out.raw.push_back(std::move(raw));
    li += 2 + static_cast<std::size_t>(n);
    ++frame;
  }
  return out;
}

std::vector<AtomicConfiguration> parse_extxyz(std::string_view text) { return parse_extxyz_frames(text).configs; }

std::vector<AtomicConfiguration> read_extxyz(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_extxyz(ss.str());
}

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.12f", v);
  return buf;
}

std::string quote_if_needed(const std::string& v) {
  if (v.find_first_of(" \t") != std::string::npos || v.empty()) return "\"" + v + "\"";
  return v;
}

}  // namespace

void write_extxyz(std::ostream& os, const AtomicConfiguration& cfg, const std::vector<Vec3>* forces,
                  const std::optional<double>& energy) {
  cfg.validate();
  const std::vector<Vec3>* f = forces ? forces : (cfg.reference_forces ? &*cfg.reference_forces : nullptr);
  const auto e = energy ? energy : cfg.reference_energy;
  os << cfg.size() << "\n";
  if (cfg.cell) {
    os << "Lattice=\"";
    for (int i = 0; i < 9; ++i) os << (i ? " " : "") << fmt((*cfg.cell)[static_cast<std::size_t>(i / 3)][static_cast<std::size_t>(i % 3)]);
    os << "\" pbc=\"" << (cfg.pbc[0] ? "T" : "F") << " " << (cfg.pbc[1] ? "T" : "F") << " " << (cfg.pbc[2] ? "T" : "F")
       << "\" ";
  }
  os << "Properties=species:S:1:pos:R:3" << (f ? ":forces:R:3" : "");
  if (e) os << " energy=" << fmt(*e);
  os << "\n";
  for (std::size_t a = 0; a < cfg.size(); ++a) {
    os << element_symbol(cfg.atomic_numbers[a]);
    for (double x : cfg.positions[a]) os << " " << fmt(x);
    if (f)
      for (double x : (*f)[a]) os << " " << fmt(x);
    os << "\n";
  }
}

std::string annotate_frame(const RawFrame& frame, double energy, const std::vector<Vec3>& forces) {
  if (forces.size() != frame.atom_lines.size()) throw InvalidArgument("annotate_frame: forces length mismatch");
  const std::string where = "line " + std::to_string(frame.first_line + 1);
  auto entries = parse_comment(frame.comment_line, where);
  bool have_props = false;
  for (auto& e : entries) {
    if (iequals(e.key, "energy")) {
      e.key = "REF_energy";
    } else if (iequals(e.key, "Properties")) {
      have_props = true;
      auto cols = parse_properties(e.value, where);
      std::string spec;
      for (const auto& c : cols) {
        const std::string name = (iequals(c.name, "forces") || iequals(c.name, "force")) ? "REF_" + c.name : c.name;
        spec += (spec.empty() ? "" : ":") + name + ":" + c.type + ":" + std::to_string(c.count);
      }
      e.value = spec + ":forces:R:3";
    }
  }
  if (!have_props) entries.push_back({"Properties", "species:S:1:pos:R:3:forces:R:3", true});
  entries.push_back({"energy", fmt(energy), true});
  std::string out = frame.count_line + "\n";
  for (std::size_t i = 0; i < entries.size(); ++i) {
    out += (i ? " " : "") + entries[i].key;
    if (entries[i].has_value) out += "=" + quote_if_needed(entries[i].value);
  }
  out += "\n";
  for (std::size_t a = 0; a < frame.atom_lines.size(); ++a) {
    out += frame.atom_lines[a];
    for (double x : forces[a]) out += " " + fmt(x);
    out += "\n";
  }
  return out;
}

void write_edges_csv(std::ostream& os, const NeighborList& nl) {
  os << "u,v,shift_a,shift_b,shift_c,r,rhat_x,rhat_y,rhat_z\n";
  char buf[256];
  for (const auto& e : nl.edges) {
    std::snprintf(buf, sizeof buf, "%d,%d,%d,%d,%d,%.17g,%.17g,%.17g,%.17g\n", e.u, e.v, e.shift[0], e.shift[1],
                  e.shift[2], e.r, e.r_hat[0], e.r_hat[1], e.r_hat[2]);
    os << buf;
  }
}

AtomicConfiguration transform(const AtomicConfiguration& cfg, const Rotation& r) {
  AtomicConfiguration out = cfg;
  for (auto& p : out.positions) p = r.apply(p);
  if (out.reference_forces)
    for (auto& f : *out.reference_forces) f = r.apply(f);
  if (out.cell)
    for (auto& row : *out.cell) row = r.apply(row);
  return out;
}

}  // namespace ictp
