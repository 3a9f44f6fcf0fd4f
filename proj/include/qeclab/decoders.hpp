#pragma once

// Classical decoders: nearest-border ("simple") decoding and exact
// minimum-weight perfect matching, plus an exhaustive matching oracle.

#include <algorithm>
#include <cstdint>
#include <cstdlib>
#include <limits>
#include <stdexcept>
#include <utility>
#include <vector>

#include "qeclab/blossom.hpp"
#include "qeclab/geometry.hpp"

namespace qeclab {

/// Defects of one stabilizer species. StabZ defects are produced by X
/// components and absorbed by the top/bottom borders; StabX defects by Z
/// components and the left/right borders.
enum class Species : std::uint8_t { Z, X };

struct DefectSet {
  std::vector<Cell> z_defects;
  std::vector<Cell> x_defects;

  const std::vector<Cell>& of(Species s) const { return s == Species::Z ? z_defects : x_defects; }
};

inline DefectSet extract_defects(const Syndrome& s, const CodeLayout& layout) {
  if (s.grid_size() != layout.size()) throw std::invalid_argument("syndrome does not match layout");
  DefectSet out;
  for (const Cell& c : layout.stab_z_cells()) {
    if (s.flipped(c)) out.z_defects.push_back(c);
  }
  for (const Cell& c : layout.stab_x_cells()) {
    if (s.flipped(c)) out.x_defects.push_back(c);
  }
  return out;
}

using Correction = PauliError;

namespace detail {

inline Pauli chain_pauli(Species s) { return s == Species::Z ? Pauli::X : Pauli::Z; }

/// Coordinate along the axis that leads to the species' absorbing borders.
inline int border_axis(Cell c, Species s) { return s == Species::Z ? c.row : c.col; }

inline int border_distance_low(Cell c, Species s) { return (border_axis(c, s) + 1) / 2; }
inline int border_distance_high(Cell c, Species s, const CodeLayout& layout) {
  return (2 * layout.distance() - 1 - border_axis(c, s)) / 2;
}

/// Straight chain from a defect to the nearer absorbing border, ties to the
/// top (Z species) or left (X species).
inline void apply_border_chain(Correction& corr, Cell defect, Species s, const CodeLayout& layout) {
  const Pauli p = chain_pauli(s);
  const bool to_low = border_distance_low(defect, s) <= border_distance_high(defect, s, layout);
  const int last = layout.size() - 1;
  if (s == Species::Z) {
    if (to_low) {
      for (int r = defect.row - 1; r >= 0; r -= 2) corr.apply({r, defect.col}, p);
    } else {
      for (int r = defect.row + 1; r <= last; r += 2) corr.apply({r, defect.col}, p);
    }
  } else {
    if (to_low) {
      for (int c = defect.col - 1; c >= 0; c -= 2) corr.apply({defect.row, c}, p);
    } else {
      for (int c = defect.col + 1; c <= last; c += 2) corr.apply({defect.row, c}, p);
    }
  }
}

/// L-shaped chain joining two same-species defects: along the column of `a`
/// to the row of `b`, then along that row to `b`.
inline void apply_pair_chain(Correction& corr, Cell a, Cell b, Species s) {
  const Pauli p = chain_pauli(s);
  const int rstep = b.row > a.row ? 1 : -1;
  const int rlen = std::abs(b.row - a.row) / 2;
  for (int k = 0; k < rlen; ++k) corr.apply({a.row + rstep * (2 * k + 1), a.col}, p);
  const int cstep = b.col > a.col ? 1 : -1;
  const int clen = std::abs(b.col - a.col) / 2;
  for (int k = 0; k < clen; ++k) corr.apply({b.row, a.col + cstep * (2 * k + 1)}, p);
}

inline void check_species(Cell c, Species s) {
  const CellRole expected = s == Species::Z ? CellRole::StabZ : CellRole::StabX;
  if (CodeLayout::role(c) != expected) {
    throw std::invalid_argument("defect coordinate has the wrong sublattice parity for its species");
  }
}

}  // namespace detail

/// Connects every defect to its nearest compatible border.
inline Correction simple_decode(const Syndrome& s, const CodeLayout& layout) {
  const DefectSet defects = extract_defects(s, layout);
  Correction corr(layout);
  for (const Cell& c : defects.z_defects) detail::apply_border_chain(corr, c, Species::Z, layout);
  for (const Cell& c : defects.x_defects) detail::apply_border_chain(corr, c, Species::X, layout);
  return corr;
}

/// Defects plus one virtual boundary node per defect. Node i < n is defect i;
/// node n + i is the boundary partner of defect i.
class MatchingGraph {
 public:
  MatchingGraph() = default;
  MatchingGraph(std::vector<Cell> defects, Species species, const CodeLayout& layout)
      : species_(species), defects_(std::move(defects)) {
    for (const Cell& c : defects_) {
      if (!layout.contains(c)) throw std::invalid_argument("defect outside lattice");
      detail::check_species(c, species_);
      boundary_.push_back(std::min(detail::border_distance_low(c, species_),
                                   detail::border_distance_high(c, species_, layout)));
    }
  }

  Species species() const { return species_; }
  int defect_count() const { return static_cast<int>(defects_.size()); }
  int node_count() const { return 2 * defect_count(); }
  const std::vector<Cell>& defects() const { return defects_; }
  bool is_boundary(int node) const { return node >= defect_count(); }

  int boundary_weight(int i) const { return boundary_[i]; }
  int defect_weight(int i, int j) const {
    return (std::abs(defects_[i].row - defects_[j].row) + std::abs(defects_[i].col - defects_[j].col)) / 2;
  }

  int weight(int u, int v) const {
    const int n = defect_count();
    if (u == v) throw std::invalid_argument("self edge");
    const bool bu = u >= n;
    const bool bv = v >= n;
    if (bu && bv) return 0;
    if (!bu && !bv) return defect_weight(u, v);
    const int d = bu ? v : u;
    const int b = (bu ? u : v) - n;
    if (d != b) throw std::invalid_argument("a defect connects only to its own boundary node");
    return boundary_[d];
  }

  bool has_edge(int u, int v) const {
    const int n = defect_count();
    if (u == v) return false;
    if (u >= n && v >= n) return true;
    if (u < n && v < n) return true;
    return (u >= n ? u - n : u) == (v >= n ? v - n : v);
  }

 private:
  Species species_ = Species::Z;
  std::vector<Cell> defects_;
  std::vector<int> boundary_;
};

inline MatchingGraph build_matching_graph(const std::vector<Cell>& defects, const CodeLayout& layout,
                                          Species species) {
  return MatchingGraph(defects, species, layout);
}

struct MatchingResult {
  std::vector<std::pair<int, int>> pairs;  // node indices, defect-boundary pairs use (i, n + i)
  std::int64_t total_weight = 0;
};

/// Exact minimum-weight perfect matching. Defect pairs whose separation
/// exceeds the sum of their border distances are never needed and are pruned.
inline MatchingResult min_weight_matching(const MatchingGraph& g) {
  MatchingResult out;
  const int n = g.defect_count();
  if (n == 0) return out;
  std::vector<WeightedEdge> edges;
  edges.reserve(static_cast<std::size_t>(n) * n);
  std::int64_t maxw = 0;
  for (int i = 0; i < n; ++i) maxw = std::max<std::int64_t>(maxw, g.boundary_weight(i));
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      const int w = g.defect_weight(i, j);
      if (w <= g.boundary_weight(i) + g.boundary_weight(j)) maxw = std::max<std::int64_t>(maxw, w);
    }
  }
  const std::int64_t offset = maxw + 1;
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      const int w = g.defect_weight(i, j);
      if (w <= g.boundary_weight(i) + g.boundary_weight(j)) edges.push_back({i, j, offset - w});
    }
    edges.push_back({i, n + i, offset - g.boundary_weight(i)});
  }
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) edges.push_back({n + i, n + j, offset});
  }
  const std::vector<int> mate = BlossomMatcher::solve(2 * n, edges, true);
  for (int u = 0; u < 2 * n; ++u) {
    const int v = mate[u];
    if (v < 0) throw std::logic_error("matching is not perfect");
    if (u < v) {
      out.pairs.emplace_back(u, v);
      out.total_weight += g.weight(u, v);
    }
  }
  return out;
}

/// Exhaustive pairing enumeration over the defects; boundary-boundary pairs
/// cost nothing, so only the defect assignments are enumerated.
inline MatchingResult brute_force_matching(const MatchingGraph& g) {
  constexpr int kMaxDefects = 12;
  const int n = g.defect_count();
  if (n > kMaxDefects) throw std::invalid_argument("brute_force_matching supports at most 12 defects");
  MatchingResult best;
  best.total_weight = std::numeric_limits<std::int64_t>::max();
  std::vector<std::pair<int, int>> current;
  std::vector<bool> used(static_cast<std::size_t>(n), false);

  auto recurse = [&](auto&& self, std::int64_t cost) -> void {
    if (cost >= best.total_weight) return;
    int i = 0;
    while (i < n && used[i]) ++i;
    if (i == n) {
      best.total_weight = cost;
      best.pairs = current;
      return;
    }
    used[i] = true;
    current.emplace_back(i, n + i);
    self(self, cost + g.boundary_weight(i));
    current.pop_back();
    for (int j = i + 1; j < n; ++j) {
      if (used[j]) continue;
      used[j] = true;
      current.emplace_back(i, j);
      self(self, cost + g.defect_weight(i, j));
      current.pop_back();
      used[j] = false;
    }
    used[i] = false;
  };
  recurse(recurse, 0);
  if (n == 0) best.total_weight = 0;
  // Unused boundary nodes pair among themselves at zero cost.
  std::vector<int> free_boundary;
  std::vector<bool> bnd_used(static_cast<std::size_t>(n), false);
  for (const auto& [u, v] : best.pairs) {
    if (v >= n) bnd_used[v - n] = true;
  }
  for (int i = 0; i < n; ++i) {
    if (!bnd_used[i]) free_boundary.push_back(n + i);
  }
  for (std::size_t k = 0; k + 1 < free_boundary.size(); k += 2) {
    best.pairs.emplace_back(free_boundary[k], free_boundary[k + 1]);
  }
  return best;
}

/// Turns a matching into Pauli chains: L-shaped for defect pairs, straight
/// for boundary matches.
inline void realize_matching(Correction& corr, const MatchingGraph& g, const MatchingResult& m,
                             const CodeLayout& layout) {
  const int n = g.defect_count();
  for (const auto& [u, v] : m.pairs) {
    if (u >= n && v >= n) continue;
    if (u < n && v < n) {
      detail::apply_pair_chain(corr, g.defects()[u], g.defects()[v], g.species());
    } else {
      detail::apply_border_chain(corr, g.defects()[u < n ? u : v], g.species(), layout);
    }
  }
}

struct MwpmDecodeResult {
  Correction correction;
  std::int64_t z_weight = 0;
  std::int64_t x_weight = 0;
};

inline MwpmDecodeResult mwpm_decode_detailed(const Syndrome& s, const CodeLayout& layout) {
  const DefectSet defects = extract_defects(s, layout);
  MwpmDecodeResult out{Correction(layout), 0, 0};
  for (Species sp : {Species::Z, Species::X}) {
    const MatchingGraph g(defects.of(sp), sp, layout);
    const MatchingResult m = min_weight_matching(g);
    realize_matching(out.correction, g, m, layout);
    (sp == Species::Z ? out.z_weight : out.x_weight) = m.total_weight;
  }
  return out;
}

inline Correction mwpm_decode(const Syndrome& s, const CodeLayout& layout) {
  return mwpm_decode_detailed(s, layout).correction;
}

}  // namespace qeclab
