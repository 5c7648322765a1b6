#include "doctest.h"

#include <algorithm>
#include <climits>
#include <random>
#include <set>

#include "json.hpp"
#include "qmem/errors.hpp"
#include "qmem/memory.hpp"

using namespace qmem;
using namespace qmem::memory;
using lattice::Sector;
using lattice::SpinConfig;
using lattice::TorusLattice;

namespace {

int manhattan(int L, int a, int b) {
    const int dr = std::abs(a / L - b / L), dc = std::abs(a % L - b % L);
    return std::min(dr, L - dr) + std::min(dc, L - dc);
}

// exhaustive enumeration of perfect pairings
int best_pairing(int L, std::vector<int> cells) {
    if (cells.empty()) return 0;
    const int a = cells.front();
    int best = INT_MAX;
    for (std::size_t j = 1; j < cells.size(); ++j) {
        std::vector<int> rest;
        for (std::size_t k = 1; k < cells.size(); ++k) {
            if (k != j) rest.push_back(cells[k]);
        }
        best = std::min(best, manhattan(L, a, cells[j]) + best_pairing(L, rest));
    }
    return best;
}

SpinConfig flipped(SpinConfig c, const std::vector<int>& chain) {
    for (int e : chain) c.flip(static_cast<std::size_t>(e));
    return c;
}

}  // namespace

TEST_CASE("qubit pairs") {
    const TorusLattice lat(3);
    const auto q = canonical_qubit(lat);
    const auto v = m1_check(q);
    CHECK(v.intersection == 1);
    CHECK(v.anticommute);
    CHECK(v.valid_pair);
    CHECK(v.involution);

    const EncodedQubit wrong{lat.logical(lattice::LogicalKind::Zlike, lattice::Homology::Horizontal),
                             lat.logical(lattice::LogicalKind::Xlike, lattice::Homology::Horizontal)};
    const auto w = m1_check(wrong);
    CHECK(w.intersection % 2 == 0);
    CHECK_FALSE(w.valid_pair);

    const EncodedQubit zz{lat.logical(lattice::LogicalKind::Zlike, lattice::Homology::Horizontal),
                          lat.logical(lattice::LogicalKind::Zlike, lattice::Homology::Vertical)};
    CHECK_FALSE(m1_check(zz).anticommute);
    CHECK_FALSE(m1_check(zz).valid_pair);
}

TEST_CASE("majority decoder") {
    CHECK(decode_majority({{1, 1, -1}}, 2) == -1);
    const auto obs = DressedObservable::ising(2);
    CHECK(measure_dressed({{1, 1, -1}}, obs) == 1);
    CHECK(measure_dressed({{-1, -1, -1}}, obs) == -1);
    CHECK(measure_dressed({{1, -1, 1, -1}}, DressedObservable::ising(1)) == 1);

    auto up = SpinConfig::all_up(16);
    const auto d = measure_dressed_detail(up, DressedObservable::ising(0));
    CHECK(d.bare == 1);
    CHECK(d.correction == 1);
    CHECK(d.dressed == 1);

    // 60% majority up, designated site flipped
    SpinConfig sea = SpinConfig::all_up(10);
    for (int i : {0, 3, 5, 7}) sea.flip(static_cast<std::size_t>(i));
    const auto m = measure_dressed_detail(sea, DressedObservable::ising(0));
    CHECK(m.bare == -1);
    CHECK(m.correction == -1);
    CHECK(m.dressed == 1);
    CHECK_THROWS_AS(decode_majority(sea, 10), ParameterError);
}

TEST_CASE("matching decoder basics") {
    const TorusLattice lat(4);
    lattice::SyndromeConfig empty{std::vector<std::uint8_t>(16, 0)};
    const auto r0 = decode_matching(empty, lat);
    CHECK(r0.chain.empty());
    CHECK(r0.correction == 1);

    auto c = SpinConfig::all_up(static_cast<std::size_t>(lat.num_edges()));
    c.flip(static_cast<std::size_t>(lat.h_edge(1, 2)));
    const auto r = decode_matching(lattice::syndrome(lat, c, Sector::Z), lat);
    CHECK(r.chain.size() == 1);
    CHECK(r.chain[0] == lat.h_edge(1, 2));
    CHECK(r.weight == 1);

    lattice::SyndromeConfig odd{std::vector<std::uint8_t>(16, 0)};
    odd.flags[3] = 1;
    CHECK_THROWS_AS(decode_matching(odd, lat), InvariantError);
}

TEST_CASE("matching equals the exhaustive pairing optimum and annihilates the syndrome") {
    std::mt19937_64 rng(12);
    for (int L : {3, 4, 5}) {
        const TorusLattice lat(L);
        for (auto sector : {Sector::Z, Sector::X}) {
            for (int trial = 0; trial < 60; ++trial) {
                // random anyon set of even size up to 8
                std::vector<int> cells(static_cast<std::size_t>(lat.num_cells()));
                for (int i = 0; i < lat.num_cells(); ++i) cells[static_cast<std::size_t>(i)] = i;
                std::shuffle(cells.begin(), cells.end(), rng);
                const int n = 2 * static_cast<int>(1 + rng() % std::min(4, lat.num_cells() / 2));
                cells.resize(static_cast<std::size_t>(n));
                std::sort(cells.begin(), cells.end());
                lattice::SyndromeConfig syn{std::vector<std::uint8_t>(static_cast<std::size_t>(lat.num_cells()), 0)};
                for (int x : cells) syn.flags[static_cast<std::size_t>(x)] = 1;
                const auto r = decode_matching(syn, lat, sector);
                CHECK(r.exact);
                CHECK(r.weight == best_pairing(L, cells));
                // the chain's boundary is the syndrome
                const auto fixed = lattice::syndrome(lat, flipped(SpinConfig::all_up(lat.num_edges()), r.chain), sector);
                CHECK(fixed.flags == syn.flags);
            }
        }
    }
}

TEST_CASE("six anyons on L=4 against all 15 pairings") {
    const TorusLattice lat(4);
    std::mt19937_64 rng(99);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<int> cells(16);
        for (int i = 0; i < 16; ++i) cells[i] = i;
        std::shuffle(cells.begin(), cells.end(), rng);
        cells.resize(6);
        std::sort(cells.begin(), cells.end());
        lattice::SyndromeConfig syn{std::vector<std::uint8_t>(16, 0)};
        for (int x : cells) syn.flags[x] = 1;
        CHECK(decode_matching(syn, lat).weight == best_pairing(4, cells));
    }
}

TEST_CASE("dressed value agrees with brute-force minimum-weight correction") {
    const int L = 3;
    const TorusLattice lat(L);
    const int ne = lat.num_edges();
    const auto obs = DressedObservable::kitaev(lat, Sector::Z);
    std::mt19937_64 rng(4);
    int compared = 0;
    for (int trial = 0; trial < 40; ++trial) {
        auto cfg = SpinConfig::all_up(static_cast<std::size_t>(ne));
        const int k = 1 + static_cast<int>(rng() % 3);
        for (int i = 0; i < k; ++i) cfg.flip(static_cast<std::size_t>(rng() % ne));
        const auto syn = lattice::syndrome(lat, cfg, Sector::Z);
        // all corrections with the same syndrome; keep the logical values at minimum weight
        int best = INT_MAX;
        std::set<int> values;
        for (std::uint32_t mask = 0; mask < (1u << ne); ++mask) {
            const int w = std::popcount(mask);
            if (w > best) continue;
            auto c = SpinConfig::all_up(static_cast<std::size_t>(ne));
            std::vector<int> chain;
            for (int e = 0; e < ne; ++e) {
                if (mask >> e & 1) {
                    c.flip(static_cast<std::size_t>(e));
                    chain.push_back(e);
                }
            }
            if (lattice::syndrome(lat, c, Sector::Z).flags != syn.flags) continue;
            const int v = lattice::bare_logical_value(flipped(cfg, chain), obs.logical);
            if (w < best) {
                best = w;
                values.clear();
            }
            values.insert(v);
        }
        const auto m = measure_dressed_detail(cfg, obs);
        CHECK(static_cast<int>(m.chain.size()) == best);
        if (values.size() == 1) {
            CHECK(m.dressed == *values.begin());
            ++compared;
        }
        CHECK(lattice::syndrome(lat, flipped(cfg, m.chain), Sector::Z).empty());
        CHECK(measure_dressed(cfg, obs) == m.dressed);
    }
    CHECK(compared > 10);

    // an edge on the logical line: bare flips, dressed does not
    auto one = SpinConfig::all_up(static_cast<std::size_t>(ne));
    one.flip(static_cast<std::size_t>(obs.logical.support[1]));
    const auto m = measure_dressed_detail(one, obs);
    CHECK(m.bare == -1);
    CHECK(m.dressed == 1);
}

TEST_CASE("dressed value is invariant under contractible loops") {
    const TorusLattice lat(4);
    const auto obs = DressedObservable::kitaev(lat, Sector::Z);
    auto cfg = SpinConfig::all_up(static_cast<std::size_t>(lat.num_edges()));
    cfg.flip(static_cast<std::size_t>(lat.h_edge(0, 1)));
    cfg.flip(static_cast<std::size_t>(lat.v_edge(2, 2)));
    const int before = measure_dressed(cfg, obs);
    // loops without Z-sector boundary are star boundaries (dual loops around a vertex)
    for (const auto& star : lat.stars()) {
        auto c = cfg;
        for (int e : star) c.flip(static_cast<std::size_t>(e));
        CHECK(lattice::syndrome(lat, c, Sector::Z).flags == lattice::syndrome(lat, cfg, Sector::Z).flags);
        CHECK(measure_dressed(c, obs) == before);
    }
}

TEST_CASE("greedy fallback above the exact limit") {
    const TorusLattice lat(6);
    lattice::SyndromeConfig syn{std::vector<std::uint8_t>(36, 0)};
    for (int i = 0; i < 16; ++i) syn.flags[static_cast<std::size_t>(2 * i)] = 1;
    const auto r = decode_matching(syn, lat);
    CHECK_FALSE(r.exact);
    CHECK(r.pairs.size() == 8);
}

TEST_CASE("lifetime study outputs") {
    LifetimePlan plan;
    plan.model = StudyModel::Ising2D;
    plan.sizes = {3, 4};
    plan.betas = {0.2};
    plan.trajectories = 20;
    plan.pilot_trajectories = 20;
    plan.samples = 40;
    plan.seed = 5;
    const auto rep = lifetime_study(plan);
    CHECK(rep.rows.size() == 4);
    for (const auto& r : rep.rows) {
        CHECK(r.gamma > 0.0);
        CHECK(r.stderr_ > 0.0);
        CHECK(r.trajectories == 20);
    }
    const auto csv = lifetime_csv(rep);
    CHECK(csv.rfind("model,N_or_L,beta,observable,decoder,gamma,stderr,mode", 0) == 0);
    const auto j = nlohmann::json::parse(lifetime_json(rep));
    CHECK(j["rows"].size() == 4);
    const auto again = lifetime_study(plan);
    CHECK(lifetime_csv(again) == csv);

    plan.decoder = Decoder::MinWeightMatching;
    CHECK_THROWS_AS(lifetime_study(plan), ParameterError);
    plan.model = StudyModel::KitaevSector;
    plan.sizes = {2};
    plan.betas = {1.0};
    const auto k = lifetime_study(plan);
    CHECK(k.rows.size() == 2);
    // at L = 2 every noncontractible correction is ambiguous; both observables decay
    for (const auto& r : k.rows) CHECK(r.gamma > 0.0);
}
