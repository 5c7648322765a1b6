// memory.hpp: encoded qubits, bare/dressed observables, decoders, lifetime study

#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "qmem/bath.hpp"
#include "qmem/davies.hpp"
#include "qmem/dynamics.hpp"
#include "qmem/lattice.hpp"

namespace qmem::memory {

struct EncodedQubit {
    lattice::LogicalOperator z;
    lattice::LogicalOperator x;
};

// Canonical pair: Z horizontal, X vertical.
EncodedQubit canonical_qubit(const lattice::TorusLattice& lat);

struct M1Verdict {
    bool involution{true};  // +-1 valued products square to one
    int intersection{0};
    bool anticommute{false};
    bool valid_pair{false};
    std::string message;
};

M1Verdict m1_check(const EncodedQubit& q);

enum class Decoder { MajorityVote, MinWeightMatching };

std::string to_string(Decoder d);
Decoder decoder_from_string(const std::string& s);

struct MatchingResult {
    std::vector<int> chain;  // sorted edge set
    std::vector<std::pair<int, int>> pairs;  // matched cells
    int weight{0};
    bool exact{true};  // false when the greedy fallback was used
    int correction{1};  // F with respect to the supplied logical
};

inline constexpr int kExactMatchingLimit = 14;

// Shortest torus distance between two cells.
int torus_distance(const lattice::TorusLattice& lat, int a, int b);
// Edges crossed by the straight correction path from cell a to cell b (columns first).
std::vector<int> correction_path(const lattice::TorusLattice& lat, lattice::Sector sector, int a, int b);

MatchingResult decode_matching(const lattice::SyndromeConfig& syndrome, const lattice::TorusLattice& lat,
                               lattice::Sector sector, const lattice::LogicalOperator& logical);
// F relative to the horizontal sector logical.
MatchingResult decode_matching(const lattice::SyndromeConfig& syndrome, const lattice::TorusLattice& lat,
                               lattice::Sector sector = lattice::Sector::Z);

// F such that bare * F is the majority sign (ties -> +1).
int decode_majority(const lattice::SpinConfig& config, int bare_site);

struct DressedObservable {
    Decoder decoder{Decoder::MajorityVote};
    lattice::Sector sector{lattice::Sector::Z};
    std::optional<lattice::TorusLattice> torus;     // MinWeightMatching
    lattice::LogicalOperator logical;               // MinWeightMatching
    int site{0};                                    // MajorityVote: designated bare site

    static DressedObservable kitaev(const lattice::TorusLattice& lat, lattice::Sector sector,
                                    lattice::Homology label = lattice::Homology::Horizontal);
    static DressedObservable ising(int site = 0);
};

struct DressedMeasurement {
    int bare{1};
    int correction{1};
    int dressed{1};
    std::vector<int> chain;
    bool exact{true};
};

DressedMeasurement measure_dressed_detail(const lattice::SpinConfig& config, const DressedObservable& obs);
int measure_dressed(const lattice::SpinConfig& config, const DressedObservable& obs);
int measure_bare(const lattice::SpinConfig& config, const DressedObservable& obs);

dynamics::Observable bare_observable(const DressedObservable& obs, const std::string& name = "bare");
dynamics::Observable dressed_observable(const DressedObservable& obs, const std::string& name = "dressed");

enum class StudyModel { Ising2D, KitaevSector };
enum class ObservableKind { Bare, Dressed };

std::string to_string(StudyModel m);
std::string to_string(ObservableKind k);

struct LifetimePlan {
    StudyModel model{StudyModel::Ising2D};
    std::vector<int> sizes{4, 6, 8};
    std::vector<double> betas{0.6};
    std::vector<ObservableKind> observables{ObservableKind::Bare, ObservableKind::Dressed};
    Decoder decoder{Decoder::MajorityVote};
    lattice::Sector sector{lattice::Sector::Z};
    double coupling{1.0};        // J
    double lambda2{1.0};         // lambda^2
    bath::DensityKind bath_kind{bath::DensityKind::FlatKMS};
    bath::DensityParams bath_params{};  // beta overridden per cell
    dynamics::CorrelationMode mode{dynamics::CorrelationMode::EquilibriumEnsemble};
    bool connected{true};
    int trajectories{40};
    int pilot_trajectories{20};
    int samples{200};            // per trajectory
    double t_max{0.0};           // 0 = adaptive from a pilot run
    double t_cap{1e8};           // adaptive search stops here
    double pilot_target{0.5};    // pilot grows t_max until dressed C(t_max/2) <= this
    std::uint64_t seed{1};
    int threads{1};
    int burn_in_factor{100};
};

struct LifetimeRow {
    std::string model;
    int size{0};
    double beta{0.0};
    std::string observable;
    std::string decoder;
    double gamma{0.0};
    double stderr_{0.0};
    std::string mode;
    double gamma_initial{0.0};  // -<R, L* R> / <R, R> over the final configurations
    double t_max{0.0};
    double fit_t_max{0.0};
    int trajectories{0};
    bool non_exponential{false};
    std::string start;
};

struct LifetimeCurve {
    std::string model;
    int size{0};
    double beta{0.0};
    std::string observable;
    dynamics::AutocorrelationEstimate estimate;
};

struct LifetimeReport {
    std::vector<LifetimeRow> rows;
    std::vector<LifetimeCurve> curves;
};

LifetimeReport lifetime_study(const LifetimePlan& plan);

std::string lifetime_csv(const LifetimeReport& report);
std::string lifetime_json(const LifetimeReport& report);
// gnuplot data: one indexed block per curve (t, C, stderr), separated by two blank lines.
std::string lifetime_curves_dat(const LifetimeReport& report);
// gnuplot data: one block per (beta, observable) series (size, gamma, stderr).
std::string lifetime_gamma_dat(const LifetimeReport& report);

}  // namespace qmem::memory
