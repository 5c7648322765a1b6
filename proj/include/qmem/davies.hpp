// davies.hpp: classical-sector Davies generators and their structural checks
//
// Generators use the column convention dp/dt = Q p: Q(j, i) is the rate of the
// move i -> j and every column sums to zero. The Heisenberg-picture dissipator
// acting on diagonal observables is L* = Q^T. Gibbs inner product:
// <A, B>_beta = sum_s pi(s) A(s) B(s).

#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "qmem/bath.hpp"
#include "qmem/lattice.hpp"

namespace qmem::davies {

struct DaviesRateTable {
    double coupling{1.0};  // lambda^2
    double beta{0.0};
    std::vector<std::pair<double, double>> entries;  // (omega, rate), sorted by omega

    // Rate at Bohr frequency omega; throws ParameterError when omega is not tabulated.
    double rate(double omega) const;
    double max_rate() const;
};

// rate(w) = lambda^2 R(w) for w >= 0 and e^{-beta |w|} rate(|w|) for w < 0.
DaviesRateTable build_rates(const bath::SpectralDensity& model, const std::vector<double>& bohr_frequencies,
                            double coupling);

enum class ModelKind { Ising, KitaevSector, KitaevEdgeSpins };

std::string to_string(ModelKind kind);

// Classical single-flip model on an enumerable state space.
//
// Ising and KitaevEdgeSpins states are bit strings (bit i set <=> spin i is -1).
// KitaevSector is the exact lumping of the edge-spin chain onto
// (syndrome, bare logical parities): bits 0..1 hold the horizontal / vertical
// logical parity, bits 2.. hold the first L^2-1 check flags (the last flag is
// fixed by parity). Rates depend on the syndrome only, so the lumping is exact.
class ClassicalModel {
public:
    static ClassicalModel ising(const lattice::IsingLattice& lat, double coupling = 1.0);
    static ClassicalModel kitaev_sector(const lattice::TorusLattice& lat, lattice::Sector sector,
                                        double coupling = 1.0);
    static ClassicalModel kitaev_edge_spins(const lattice::TorusLattice& lat, lattice::Sector sector,
                                            double coupling = 1.0);

    ModelKind kind() const noexcept { return kind_; }
    int num_sites() const noexcept { return sites_; }
    int state_bits() const noexcept { return bits_; }
    std::uint64_t num_states() const noexcept { return std::uint64_t{1} << bits_; }
    double coupling() const noexcept { return coupling_; }

    double energy(std::uint64_t state) const;
    std::uint64_t flip(std::uint64_t state, int site) const;
    // Energy change of flipping `site`.
    double delta_energy(std::uint64_t state, int site) const { return energy(flip(state, site)) - energy(state); }
    // Finite set of -DeltaE values reachable by single flips, closed under negation.
    std::vector<double> bohr_frequencies() const;

    // KitaevSector helpers.
    int num_checks() const noexcept { return checks_; }
    int check_flag(std::uint64_t state, int check) const;
    int logical_parity(std::uint64_t state, lattice::Homology label) const;
    std::uint64_t sector_state(const lattice::TorusLattice& lat, const lattice::SpinConfig& config) const;

private:
    ModelKind kind_{ModelKind::Ising};
    int sites_{0};
    int bits_{0};
    int checks_{0};
    int degree_{2};
    double coupling_{1.0};
    std::vector<std::uint64_t> term_masks_;          // Ising bonds / edge-spin checks
    std::vector<std::uint64_t> flip_masks_;          // per site, KitaevSector
    lattice::Sector sector_{lattice::Sector::Z};
    std::vector<int> logical_h_, logical_v_;
};

enum class GeneratorKind { ClassicalSector, FullDavies };

struct GeneratorMatrix {
    Eigen::SparseMatrix<double> rates;  // Q, column convention
    std::vector<double> gibbs;
    std::vector<double> energies;
    double beta{0.0};
    double log_partition{0.0};  // log sum_s e^{-beta (E_s - E_min)}
    double energy_min{0.0};
    GeneratorKind kind{GeneratorKind::ClassicalSector};

    Eigen::Index dimension() const { return rates.rows(); }
};

GeneratorMatrix build_classical_generator(const ClassicalModel& model, const DaviesRateTable& rates,
                                          double beta, std::uint64_t state_cap = std::uint64_t{1} << 20);

// Copy of `gen` with the move from -> to scaled by `factor` (diagonal adjusted
// so that columns still sum to zero).
GeneratorMatrix perturb_rate(const GeneratorMatrix& gen, Eigen::Index from, Eigen::Index to, double factor);

struct BalanceReport {
    double stationarity_residual{0.0};  // || Q pi ||_1
    double detailed_balance_residual{0.0};  // max |Q_ij pi_j - Q_ji pi_i|
    double column_sum_residual{0.0};
    double min_offdiagonal{0.0};
};

BalanceReport check_db_stationarity(const GeneratorMatrix& gen);

// S = -D^{1/2} Q D^{-1/2}... applied in the symmetric form -pi_i^{-1/2} Q_ij pi_j^{1/2}.
Eigen::SparseMatrix<double, Eigen::RowMajor> symmetrized(const GeneratorMatrix& gen);

enum class EigenMethod { Dense, IterativeSparse };

struct SpectralOptions {
    Eigen::Index dense_threshold{4096};
    double tolerance{1e-8};
    int max_iterations{5000};
    bool force_iterative{false};
};

struct SpectralReport {
    double gap{0.0};
    std::vector<double> eigenvalues;  // ascending, of -L* (symmetrized)
    std::vector<double> residuals;
    EigenMethod method{EigenMethod::Dense};
    int iterations{0};
};

SpectralReport spectral_gap(const GeneratorMatrix& gen, int k, const SpectralOptions& opts = {});

// Dense propagation p(t) = e^{tQ} p(0) through the symmetrized eigenbasis.
class DenseEvolution {
public:
    explicit DenseEvolution(const GeneratorMatrix& gen);

    Eigen::VectorXd propagate(const Eigen::VectorXd& p0, double t) const;
    // <A, e^{t L*} B>_beta
    double correlation(const Eigen::VectorXd& a, const Eigen::VectorXd& b, double t) const;
    // <A, L* B>_beta
    double dirichlet(const Eigen::VectorXd& a, const Eigen::VectorXd& b) const;
    const Eigen::VectorXd& eigenvalues() const noexcept { return evals_; }

private:
    Eigen::VectorXd sqrt_pi_;
    Eigen::VectorXd evals_;
    Eigen::MatrixXd evecs_;
};

struct ConvexityReport {
    std::vector<double> t;
    std::vector<double> lhs;  // <R, e^{tL*} R>
    std::vector<double> rhs;  // exp(t <R, L* R>)
    double min_slack{0.0};
    double dirichlet{0.0};    // <R, L* R>
};

ConvexityReport convexity_bound_check(const GeneratorMatrix& gen, const Eigen::VectorXd& observable,
                                      const std::vector<double>& t_grid);
ConvexityReport convexity_bound_check(const DenseEvolution& ev, const std::vector<double>& gibbs,
                                      const Eigen::VectorXd& observable, const std::vector<double>& t_grid);

struct GapInequalityReport {
    double lhs{0.0};  // -<A, L* A>
    double rhs{0.0};  // 2 max_w R(w) sum_a <[S_a, A], [S_a, A]>
    double slack{0.0};
};

GapInequalityReport gap_inequality_check(const ClassicalModel& model, const DaviesRateTable& rates,
                                         const Eigen::VectorXd& observable);

struct KSquaredVerdict {
    bool condition_holds{false};
    double min_eigenvalue{0.0};  // of K^2 - cK
    double gap{0.0};             // smallest eigenvalue of K above 1e-10 * ||K||
    bool gap_bound_verified{false};
};

KSquaredVerdict k_squared_gap_bound(const Eigen::MatrixXd& K, double c);

// Sparse triplet CSV (row,col,value) plus a JSON sidecar.
void export_generator(const GeneratorMatrix& gen, const std::string& csv_path, const std::string& json_path);

}  // namespace qmem::davies
