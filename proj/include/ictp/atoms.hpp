#pragma once

// Atomic configurations, extended-XYZ I/O and neighbor lists.
//
// Edges are directed pairs (u, v) with r_uv = r_u - (r_v + shift . cell),
// i.e. the vector from the (possibly imaged) neighbor to the centre atom.

#include <array>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "ictp/core.hpp"

namespace ictp {

using Vec3 = std::array<double, 3>;
/// Rows are lattice vectors a, b, c.
using Cell = std::array<Vec3, 3>;

struct AtomicConfiguration {
  std::vector<Vec3> positions;
  std::vector<int> atomic_numbers;
  std::optional<Cell> cell;
  std::array<bool, 3> pbc{false, false, false};
  std::optional<double> reference_energy;
  std::optional<std::vector<Vec3>> reference_forces;

  std::size_t size() const { return positions.size(); }
  bool periodic() const { return cell.has_value() && (pbc[0] || pbc[1] || pbc[2]); }
  /// Throws DataError when an invariant does not hold.
  void validate() const;
};

struct Edge {
  int u = 0;
  int v = 0;
  double r = 0.0;
  UnitVector r_hat;
  std::array<int, 3> shift{0, 0, 0};
  Vec3 offset{0.0, 0.0, 0.0};  // shift . cell, in Angstrom
};

struct NeighborList {
  double cutoff = 0.0;
  std::vector<Edge> edges;  // sorted by (u, v, shift)
};

enum class NeighborMethod { brute_force, cell_list };

/// Minimum-image neighbor list; throws DataError if a periodic cell is too
/// small for r_c (r_c must not exceed half the smallest periodic cell height).
NeighborList build_neighbor_list(const AtomicConfiguration& cfg, double cutoff,
                                 NeighborMethod method = NeighborMethod::cell_list);

/// Perpendicular distances between opposite cell faces.
Vec3 cell_heights(const Cell& cell);

int atomic_number(std::string_view symbol);
std::string_view element_symbol(int z);

/// The exact text of one frame, kept so that rewriting preserves geometry bytes.
struct RawFrame {
  std::string count_line;
  std::string comment_line;
  std::vector<std::string> atom_lines;
  std::size_t first_line = 0;  // 1-based line number of the count line
};

struct ParsedFrames {
  std::vector<AtomicConfiguration> configs;
  std::vector<RawFrame> raw;
};

ParsedFrames parse_extxyz_frames(std::string_view text);
std::vector<AtomicConfiguration> parse_extxyz(std::string_view text);
std::vector<AtomicConfiguration> read_extxyz(const std::string& path);

void write_extxyz(std::ostream& os, const AtomicConfiguration& cfg, const std::vector<Vec3>* forces = nullptr,
                  const std::optional<double>& energy = std::nullopt);

/// Re-emits a raw frame with predicted energy and forces. Existing energy and
/// forces entries are renamed to REF_energy / REF_forces; atom lines get the
/// new force columns appended and are otherwise left untouched.
std::string annotate_frame(const RawFrame& frame, double energy, const std::vector<Vec3>& forces);

void write_edges_csv(std::ostream& os, const NeighborList& nl);

/// Applies a rotation or reflection about the origin to positions, forces and cell.
AtomicConfiguration transform(const AtomicConfiguration& cfg, const Rotation& r);

}  // namespace ictp
