// lattice.hpp: toric-code geometry and Ising lattices
//
// Edge numbering on the L x L torus (vertex (r, c) has index r*L + c):
//   horizontal edge h(r, c) joins (r, c)-(r, c+1), index r*L + c
//   vertical edge   v(r, c) joins (r, c)-(r+1, c), index L*L + r*L + c
// Star (r, c): the four edges at vertex (r, c).
// Plaquette (r, c): the face with corners (r, c), (r, c+1), (r+1, c), (r+1, c+1),
// edges h(r, c), h(r+1, c), v(r, c), v(r, c+1).

#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace qmem::lattice {

// Z: plaquette checks, sigma^z data, bit-flip errors. X: star checks,
// sigma^x data, phase-flip errors.
enum class Sector { Z, X };

enum class LogicalKind { Zlike, Xlike };

// Geometric running direction of the cycle.
enum class Homology { Horizontal, Vertical };

// Primal chains have no vertex boundary; dual chains have no face boundary.
enum class ChainType { Primal, Dual };

std::string to_string(Sector s);
std::string to_string(LogicalKind k);
std::string to_string(Homology h);

struct SpinConfig {
    std::vector<std::int8_t> values;

    static SpinConfig all_up(std::size_t n) { return {std::vector<std::int8_t>(n, 1)}; }
    std::size_t size() const noexcept { return values.size(); }
    void flip(std::size_t i) { values[i] = static_cast<std::int8_t>(-values[i]); }
    std::int8_t operator[](std::size_t i) const { return values[i]; }
};

struct SyndromeConfig {
    std::vector<std::uint8_t> flags;

    std::size_t count() const;
    std::vector<int> flagged() const;
    bool empty() const { return count() == 0; }
};

struct LogicalOperator {
    std::vector<int> support;  // sorted edge indices
    LogicalKind kind{LogicalKind::Zlike};
    Homology label{Homology::Horizontal};
};

class TorusLattice {
public:
    explicit TorusLattice(int L);

    int size() const noexcept { return L_; }
    int num_edges() const noexcept { return 2 * L_ * L_; }
    int num_cells() const noexcept { return L_ * L_; }

    int h_edge(int r, int c) const noexcept { return wrap(r) * L_ + wrap(c); }
    int v_edge(int r, int c) const noexcept { return L_ * L_ + wrap(r) * L_ + wrap(c); }
    int cell(int r, int c) const noexcept { return wrap(r) * L_ + wrap(c); }
    int wrap(int x) const noexcept { return ((x % L_) + L_) % L_; }

    const std::vector<std::array<int, 4>>& stars() const noexcept { return stars_; }
    const std::vector<std::array<int, 4>>& plaquettes() const noexcept { return plaquettes_; }
    const std::vector<std::array<int, 4>>& checks(Sector s) const noexcept {
        return s == Sector::Z ? plaquettes_ : stars_;
    }
    // The two checks of sector `s` containing edge e.
    const std::array<int, 2>& edge_checks(Sector s, int e) const noexcept {
        return s == Sector::Z ? edge_plaquettes_[e] : edge_stars_[e];
    }
    std::pair<int, int> edge_endpoints(int e) const;

    // Edge crossed when an anyon of sector `s` hops from check (r, c) by (dr, dc),
    // with |dr| + |dc| == 1.
    int hop_edge(Sector s, int r, int c, int dr, int dc) const;

    // Canonical straight-line representatives: Zlike on lattice row 0 / column 0,
    // Xlike on dual column 0 / dual row 0.
    LogicalOperator logical(LogicalKind kind, Homology label) const;
    // The logical operator read out in sector `s` (Zlike for Z, Xlike for X).
    LogicalOperator sector_logical(Sector s, Homology label) const;

private:
    int L_;
    std::vector<std::array<int, 4>> stars_;
    std::vector<std::array<int, 4>> plaquettes_;
    std::vector<std::array<int, 2>> edge_stars_;
    std::vector<std::array<int, 2>> edge_plaquettes_;
};

TorusLattice build_torus(int L);

class IsingLattice {
public:
    // dimension 1: ring of `size` sites; dimension 2: size x size torus.
    IsingLattice(int dimension, int size);

    int dimension() const noexcept { return dim_; }
    int linear_size() const noexcept { return size_; }
    int num_sites() const noexcept { return static_cast<int>(neighbors_.size()); }
    int degree() const noexcept { return dim_ == 1 ? 2 : 4; }
    const std::vector<int>& neighbors(int site) const { return neighbors_[site]; }
    // Each bond listed once (i, j); on very small tori a pair may appear twice.
    const std::vector<std::pair<int, int>>& bonds() const noexcept { return bonds_; }

private:
    int dim_;
    int size_;
    std::vector<std::vector<int>> neighbors_;
    std::vector<std::pair<int, int>> bonds_;
};

// Cell flagged iff the product of config values over its four edges is -1.
SyndromeConfig syndrome(const TorusLattice& lat, const SpinConfig& config, Sector sector);

int bare_logical_value(const SpinConfig& config, const LogicalOperator& logical);

struct HomologyClass {
    int h{0};
    int v{0};
    bool operator==(const HomologyClass&) const = default;
};

// Winding parities of a boundary-free chain via intersection with two fixed cuts.
HomologyClass homology_class(const TorusLattice& lat, const std::vector<int>& chain,
                             ChainType type = ChainType::Primal);

// Edges shared by the two operators, counted with multiplicity of the support sets.
int intersection_size(const std::vector<int>& a, const std::vector<int>& b);

// Symmetric difference of edge sets.
std::vector<int> chain_sum(const std::vector<int>& a, const std::vector<int>& b);

std::string lattice_json(const TorusLattice& lat);

}  // namespace qmem::lattice
