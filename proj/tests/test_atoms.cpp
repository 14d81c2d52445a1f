#include <doctest.h>

#include <algorithm>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "ictp/atoms.hpp"
#include "ictp/error.hpp"

using namespace ictp;

namespace {

AtomicConfiguration pair_at(double d) {
  AtomicConfiguration c;
  c.positions = {{0, 0, 0}, {0, 0, d}};
  c.atomic_numbers = {1, 1};
  return c;
}

AtomicConfiguration random_config(std::mt19937_64& rng, int n, double box, bool periodic, bool skew,
                                  bool partial_pbc) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  AtomicConfiguration c;
  Cell cell{{{box, 0, 0}, {0, box, 0}, {0, 0, box}}};
  if (skew) {
    cell[1][0] = 0.3 * box;
    cell[2][0] = -0.2 * box;
    cell[2][1] = 0.25 * box;
  }
  for (int a = 0; a < n; ++a) {
    const double s0 = u(rng), s1 = u(rng), s2 = u(rng);
    Vec3 p{};
    for (std::size_t k = 0; k < 3; ++k) p[k] = s0 * cell[0][k] + s1 * cell[1][k] + s2 * cell[2][k];
    // a few atoms outside the home cell exercise wrapping
    if (periodic && a % 5 == 0)
      for (std::size_t k = 0; k < 3; ++k) p[k] += 2 * cell[0][k] - cell[1][k];
    c.positions.push_back(p);
    c.atomic_numbers.push_back(1 + a % 3);
  }
  if (periodic) {
    c.cell = cell;
    c.pbc = {true, true, !partial_pbc};
  }
  return c;
}

bool same_edges(const NeighborList& a, const NeighborList& b) {
  if (a.edges.size() != b.edges.size()) return false;
  for (std::size_t i = 0; i < a.edges.size(); ++i) {
    const auto &x = a.edges[i], &y = b.edges[i];
    if (x.u != y.u || x.v != y.v || x.shift != y.shift || x.r != y.r || x.r_hat.c != y.r_hat.c || x.offset != y.offset)
      return false;
  }
  return true;
}

const char* kH2 =
    "2\n"
    "Properties=species:S:1:pos:R:3 energy=-31.5 comment=\"hydrogen molecule\"\n"
    "H 0.0 0.0 0.0\n"
    "H 0.0 0.0 0.74\n";

}  // namespace

TEST_CASE("neighbor list worked examples") {
  {
    const auto nl = build_neighbor_list(pair_at(1.0), 5.0);
    REQUIRE(nl.edges.size() == 2);
    CHECK(nl.edges[0].u == 0);
    CHECK(nl.edges[0].v == 1);
    CHECK(nl.edges[0].r == doctest::Approx(1.0));
    CHECK(nl.edges[0].r_hat[2] == doctest::Approx(-1.0));  // r_0 - r_1 points down
    CHECK(nl.edges[1].r_hat[2] == doctest::Approx(1.0));
  }
  CHECK(build_neighbor_list(pair_at(6.0), 5.0).edges.empty());
  {
    auto c = pair_at(3.5);
    c.cell = Cell{{{4, 0, 0}, {0, 4, 0}, {0, 0, 4}}};
    c.pbc = {true, true, true};
    for (auto method : {NeighborMethod::brute_force, NeighborMethod::cell_list}) {
      const auto nl = build_neighbor_list(c, 1.0, method);
      REQUIRE(nl.edges.size() == 2);
      CHECK(nl.edges[0].r == doctest::Approx(0.5));
      CHECK(nl.edges[0].shift == std::array<int, 3>{0, 0, -1});
      CHECK(nl.edges[0].r_hat[2] == doctest::Approx(1.0));
    }
    CHECK_THROWS_AS(build_neighbor_list(c, 2.5), DataError);
    CHECK_THROWS_AS(build_neighbor_list(c, 0.0), InvalidArgument);
  }
  {
    auto c = pair_at(0.0);
    CHECK_THROWS_AS(build_neighbor_list(c, 1.0), DataError);
  }
}

TEST_CASE("cell list and brute force agree exactly") {
  std::mt19937_64 rng(42);
  for (int trial = 0; trial < 100; ++trial) {
    const bool periodic = trial % 2 == 1;
    const auto c = random_config(rng, 10 + trial % 30, 8.0, periodic, trial % 4 == 3, trial % 8 == 5);
    const double rc = 1.0 + 0.025 * trial;  // stays below half the skewed cell height
    const auto a = build_neighbor_list(c, rc, NeighborMethod::brute_force);
    const auto b = build_neighbor_list(c, rc, NeighborMethod::cell_list);
    CHECK_MESSAGE(same_edges(a, b), "trial ", trial);
    for (const auto& e : a.edges) {
      CHECK(e.r <= rc);
      CHECK(e.r > 0.0);
    }
  }
}

TEST_CASE("edges are symmetric and permute with atoms") {
  std::mt19937_64 rng(5);
  const auto c = random_config(rng, 20, 6.0, true, true, false);
  const auto nl = build_neighbor_list(c, 2.5);
  for (const auto& e : nl.edges) {
    bool twin = false;
    for (const auto& f : nl.edges)
      if (f.u == e.v && f.v == e.u && f.shift == std::array<int, 3>{-e.shift[0], -e.shift[1], -e.shift[2]})
        twin = std::abs(f.r - e.r) < 1e-12;
    CHECK(twin);
  }
  std::vector<int> perm(c.size());
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  AtomicConfiguration p = c;
  for (std::size_t i = 0; i < c.size(); ++i) {
    p.positions[i] = c.positions[static_cast<std::size_t>(perm[i])];
    p.atomic_numbers[i] = c.atomic_numbers[static_cast<std::size_t>(perm[i])];
  }
  const auto np = build_neighbor_list(p, 2.5);
  REQUIRE(np.edges.size() == nl.edges.size());
  std::multiset<std::pair<int, int>> lhs, rhs;
  for (const auto& e : np.edges) lhs.insert({perm[static_cast<std::size_t>(e.u)], perm[static_cast<std::size_t>(e.v)]});
  for (const auto& e : nl.edges) rhs.insert({e.u, e.v});
  CHECK(lhs == rhs);
}

TEST_CASE("extxyz parsing") {
  SUBCASE("H2 with energy") {
    const auto frames = parse_extxyz(kH2);
    REQUIRE(frames.size() == 1);
    CHECK(frames[0].size() == 2);
    CHECK(frames[0].atomic_numbers[1] == 1);
    REQUIRE(frames[0].reference_energy);
    CHECK(*frames[0].reference_energy == -31.5);
    CHECK_FALSE(frames[0].cell);
  }
  SUBCASE("lattice and forces") {
    const char* text =
        "1\n"
        "Lattice=\"5 0 0 0 5 0 0 0 5\" Properties=species:S:1:pos:R:3:forces:R:3 unknown_key=3 flag\n"
        "Xe 1 2 3 0.1 0.2 0.3\n";
    const auto f = parse_extxyz(text);
    REQUIRE(f.size() == 1);
    REQUIRE(f[0].cell);
    CHECK((*f[0].cell)[1][1] == 5.0);
    CHECK(f[0].pbc == std::array<bool, 3>{true, true, true});
    REQUIRE(f[0].reference_forces);
    CHECK((*f[0].reference_forces)[0][2] == 0.3);
    CHECK(f[0].atomic_numbers[0] == 54);
  }
  SUBCASE("multiple frames and explicit pbc") {
    const std::string text = std::string(kH2) + "\n1\nLattice=\"3 0 0 0 3 0 0 0 3\" pbc=\"T F F\"\nC 0 0 0\n";
    const auto f = parse_extxyz(text);
    REQUIRE(f.size() == 2);
    CHECK(f[1].pbc == std::array<bool, 3>{true, false, false});
  }
  SUBCASE("errors carry frame and line") {
    try {
      parse_extxyz(std::string(kH2) + "3\nProperties=species:S:1:pos:R:3\nH 0 0 0\nH 0 0 1\n");
      FAIL("expected DataError");
    } catch (const DataError& e) {
      const std::string msg = e.what();
      CHECK(msg.find("frame 1") != std::string::npos);
      CHECK(msg.find("line 9") != std::string::npos);
    }
    CHECK_THROWS_AS(parse_extxyz("two\nx\nH 0 0 0\n"), DataError);
    CHECK_THROWS_AS(parse_extxyz("1\n\nH 0 0 nan\n"), DataError);
    CHECK_THROWS_AS(parse_extxyz("1\n\nQq 0 0 0\n"), DataError);
    CHECK_THROWS_AS(parse_extxyz("2\nProperties=species:S:1:pos:R:3\nH 0 0 0\nH 0 0 1 5\n"), DataError);
    CHECK_THROWS_AS(parse_extxyz("1\nLattice=\"1 0 0 0 1 0 0 0 0\"\nH 0 0 0\n"), DataError);
  }
  CHECK(parse_extxyz("").empty());
}

TEST_CASE("extxyz round trip and annotation") {
  std::mt19937_64 rng(9);
  auto c = random_config(rng, 4, 5.0, true, false, false);
  c.reference_energy = -1.25;
  c.reference_forces = std::vector<Vec3>{{1, 2, 3}, {4, 5, 6}, {7, 8, 9}, {0, 0, 0}};
  std::ostringstream os;
  write_extxyz(os, c);
  const auto back = parse_extxyz(os.str());
  REQUIRE(back.size() == 1);
  CHECK(back[0].atomic_numbers == c.atomic_numbers);
  for (std::size_t a = 0; a < c.size(); ++a)
    for (std::size_t k = 0; k < 3; ++k) CHECK(back[0].positions[a][k] == doctest::Approx(c.positions[a][k]).epsilon(1e-11));
  CHECK(*back[0].reference_energy == -1.25);

  const auto parsed = parse_extxyz_frames(os.str());
  const std::vector<Vec3> f{{0.5, 0, 0}, {0, 0.5, 0}, {0, 0, 0.5}, {1, 1, 1}};
  const std::string annotated = annotate_frame(parsed.raw[0], -2.0, f);
  const auto again = parse_extxyz_frames(annotated);
  CHECK(*again.configs[0].reference_energy == -2.0);
  CHECK((*again.configs[0].reference_forces)[3][1] == doctest::Approx(1.0));
  for (std::size_t a = 0; a < c.size(); ++a)
    CHECK(again.raw[0].atom_lines[a].rfind(parsed.raw[0].atom_lines[a], 0) == 0);  // original bytes kept as prefix
  CHECK(annotated.find("REF_energy") != std::string::npos);
  CHECK(annotated.find("REF_forces") != std::string::npos);
}

TEST_CASE("edge csv dump") {
  std::ostringstream os;
  write_edges_csv(os, build_neighbor_list(pair_at(1.0), 2.0));
  const std::string s = os.str();
  CHECK(s.rfind("u,v,shift_a", 0) == 0);
  CHECK(std::count(s.begin(), s.end(), '\n') == 3);
}

TEST_CASE("element table") {
  CHECK(atomic_number("H") == 1);
  CHECK(atomic_number("Og") == 118);
  CHECK(element_symbol(6) == "C");
  CHECK_THROWS_AS(atomic_number("Xx"), DataError);
}
