#include "qmem/lattice.hpp"

#include <algorithm>
#include <set>

#include "json.hpp"
#include "qmem/errors.hpp"

namespace qmem::lattice {

std::string to_string(Sector s) { return s == Sector::Z ? "Z" : "X"; }
std::string to_string(LogicalKind k) { return k == LogicalKind::Zlike ? "Zlike" : "Xlike"; }
std::string to_string(Homology h) { return h == Homology::Horizontal ? "horizontal" : "vertical"; }

std::size_t SyndromeConfig::count() const {
    return static_cast<std::size_t>(std::count(flags.begin(), flags.end(), std::uint8_t{1}));
}

std::vector<int> SyndromeConfig::flagged() const {
    std::vector<int> out;
    for (std::size_t i = 0; i < flags.size(); ++i) {
        if (flags[i]) out.push_back(static_cast<int>(i));
    }
    return out;
}

TorusLattice::TorusLattice(int L) : L_(L) {
    if (L < 2) throw ParameterError("torus size L must be >= 2");
    const int n = num_edges();
    stars_.resize(L * L);
    plaquettes_.resize(L * L);
    edge_stars_.assign(n, {-1, -1});
    edge_plaquettes_.assign(n, {-1, -1});
    auto attach = [](std::array<int, 2>& slot, int check) {
        if (slot[0] < 0) {
            slot[0] = check;
        } else {
            slot[1] = check;
        }
    };
    for (int r = 0; r < L; ++r) {
        for (int c = 0; c < L; ++c) {
            const int id = cell(r, c);
            stars_[id] = {h_edge(r, c), h_edge(r, c - 1), v_edge(r, c), v_edge(r - 1, c)};
            plaquettes_[id] = {h_edge(r, c), h_edge(r + 1, c), v_edge(r, c), v_edge(r, c + 1)};
            for (int e : stars_[id]) attach(edge_stars_[e], id);
            for (int e : plaquettes_[id]) attach(edge_plaquettes_[e], id);
        }
    }
}

std::pair<int, int> TorusLattice::edge_endpoints(int e) const {
    if (e < 0 || e >= num_edges()) throw ParameterError("edge index out of range");
    if (e < L_ * L_) {
        const int r = e / L_, c = e % L_;
        return {cell(r, c), cell(r, c + 1)};
    }
    const int k = e - L_ * L_;
    const int r = k / L_, c = k % L_;
    return {cell(r, c), cell(r + 1, c)};
}

int TorusLattice::hop_edge(Sector s, int r, int c, int dr, int dc) const {
    if (std::abs(dr) + std::abs(dc) != 1) throw ParameterError("hop must be a unit step");
    if (s == Sector::X) {  // vertices
        if (dc == 1) return h_edge(r, c);
        if (dc == -1) return h_edge(r, c - 1);
        if (dr == 1) return v_edge(r, c);
        return v_edge(r - 1, c);
    }
    // faces
    if (dc == 1) return v_edge(r, c + 1);
    if (dc == -1) return v_edge(r, c);
    if (dr == 1) return h_edge(r + 1, c);
    return h_edge(r, c);
}

LogicalOperator TorusLattice::logical(LogicalKind kind, Homology label) const {
    LogicalOperator op;
    op.kind = kind;
    op.label = label;
    for (int k = 0; k < L_; ++k) {
        if (kind == LogicalKind::Zlike) {
            // lattice cycles: row 0 of horizontal edges, column 0 of vertical edges
            op.support.push_back(label == Homology::Horizontal ? h_edge(0, k) : v_edge(k, 0));
        } else {
            // dual cycles: a dual row crosses the vertical edges of row 0,
            // a dual column crosses the horizontal edges of column 0
            op.support.push_back(label == Homology::Horizontal ? v_edge(0, k) : h_edge(k, 0));
        }
    }
    std::sort(op.support.begin(), op.support.end());
    return op;
}

LogicalOperator TorusLattice::sector_logical(Sector s, Homology label) const {
    return logical(s == Sector::Z ? LogicalKind::Zlike : LogicalKind::Xlike, label);
}

TorusLattice build_torus(int L) { return TorusLattice(L); }

IsingLattice::IsingLattice(int dimension, int size) : dim_(dimension), size_(size) {
    if (dimension == 1) {
        if (size < 3) throw ParameterError("1D Ising ring needs N >= 3");
        neighbors_.resize(size);
        for (int i = 0; i < size; ++i) {
            neighbors_[i] = {(i + size - 1) % size, (i + 1) % size};
            bonds_.emplace_back(i, (i + 1) % size);
        }
    } else if (dimension == 2) {
        if (size < 2) throw ParameterError("2D Ising torus needs L >= 2");
        neighbors_.resize(size * size);
        auto id = [size](int r, int c) { return ((r + size) % size) * size + (c + size) % size; };
        for (int r = 0; r < size; ++r) {
            for (int c = 0; c < size; ++c) {
                neighbors_[id(r, c)] = {id(r, c + 1), id(r, c - 1), id(r + 1, c), id(r - 1, c)};
                bonds_.emplace_back(id(r, c), id(r, c + 1));
                bonds_.emplace_back(id(r, c), id(r + 1, c));
            }
        }
    } else {
        throw ParameterError("Ising dimension must be 1 or 2");
    }
}

SyndromeConfig syndrome(const TorusLattice& lat, const SpinConfig& config, Sector sector) {
    if (config.size() != static_cast<std::size_t>(lat.num_edges())) {
        throw ParameterError("spin configuration size does not match the lattice");
    }
    SyndromeConfig out;
    const auto& checks = lat.checks(sector);
    out.flags.resize(checks.size());
    for (std::size_t i = 0; i < checks.size(); ++i) {
        int prod = 1;
        for (int e : checks[i]) prod *= config[static_cast<std::size_t>(e)];
        out.flags[i] = prod < 0 ? 1 : 0;
    }
    return out;
}

int bare_logical_value(const SpinConfig& config, const LogicalOperator& logical) {
    int prod = 1;
    for (int e : logical.support) {
        if (e < 0 || static_cast<std::size_t>(e) >= config.size()) {
            throw ParameterError("logical support outside the configuration");
        }
        prod *= config[static_cast<std::size_t>(e)];
    }
    return prod;
}

int intersection_size(const std::vector<int>& a, const std::vector<int>& b) {
    std::multiset<int> sb(b.begin(), b.end());
    int n = 0;
    for (int e : a) n += static_cast<int>(sb.count(e));
    return n;
}

std::vector<int> chain_sum(const std::vector<int>& a, const std::vector<int>& b) {
    std::set<int> acc;
    for (const auto* chain : {&a, &b}) {
        for (int e : *chain) {
            if (!acc.erase(e)) acc.insert(e);
        }
    }
    return {acc.begin(), acc.end()};
}

HomologyClass homology_class(const TorusLattice& lat, const std::vector<int>& chain, ChainType type) {
    const int L = lat.size();
    std::vector<int> parity(static_cast<std::size_t>(lat.num_cells()), 0);
    std::vector<int> edge_count(static_cast<std::size_t>(lat.num_edges()), 0);
    for (int e : chain) {
        if (e < 0 || e >= lat.num_edges()) throw ParameterError("edge index out of range");
        edge_count[static_cast<std::size_t>(e)] ^= 1;
    }
    const Sector boundary_sector = type == ChainType::Primal ? Sector::X : Sector::Z;
    for (int e = 0; e < lat.num_edges(); ++e) {
        if (!edge_count[static_cast<std::size_t>(e)]) continue;
        for (int c : lat.edge_checks(boundary_sector, e)) parity[static_cast<std::size_t>(c)] ^= 1;
    }
    if (std::any_of(parity.begin(), parity.end(), [](int p) { return p != 0; })) {
        throw PreconditionError(type == ChainType::Primal ? "chain has a nonempty vertex boundary"
                                                          : "chain has a nonempty face boundary");
    }
    HomologyClass hc;
    for (int k = 0; k < L; ++k) {
        if (type == ChainType::Primal) {
            hc.h ^= edge_count[static_cast<std::size_t>(lat.h_edge(k, 0))];
            hc.v ^= edge_count[static_cast<std::size_t>(lat.v_edge(0, k))];
        } else {
            hc.h ^= edge_count[static_cast<std::size_t>(lat.v_edge(k, 0))];
            hc.v ^= edge_count[static_cast<std::size_t>(lat.h_edge(0, k))];
        }
    }
    return hc;
}

std::string lattice_json(const TorusLattice& lat) {
    nlohmann::json j;
    j["L"] = lat.size();
    j["num_edges"] = lat.num_edges();
    j["edge_numbering"] = "row-major, horizontal edges before vertical";
    auto edges = nlohmann::json::array();
    for (int e = 0; e < lat.num_edges(); ++e) {
        auto [u, v] = lat.edge_endpoints(e);
        edges.push_back({u, v});
    }
    j["edges"] = edges;
    j["stars"] = lat.stars();
    j["plaquettes"] = lat.plaquettes();
    return j.dump(2);
}

}  // namespace qmem::lattice
