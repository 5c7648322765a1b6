// dynamics.hpp: kinetic Monte Carlo for single-flip Davies dynamics,
// autocorrelation estimation and decay-rate fits
//
// RNG contract: every trajectory owns a std::mt19937_64 seeded with its
// 64-bit seed. Uniform doubles are (x >> 11) * 2^-53, bounded integers are
// (x * n) >> 64 on the 128-bit product, waiting times are -log(1-u)/total.
// derive_seed(master, i) is the splitmix64 finalizer applied to
// master + (i + 1) * 0x9E3779B97F4A7C15.

#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "qmem/davies.hpp"
#include "qmem/lattice.hpp"

namespace qmem::dynamics {

enum class SystemKind { Ising1D, Ising2D, Kitaev };

// Spins coupled through +-1 valued terms (Ising bonds or toric checks),
// H = -J sum_terms prod_{i in term} s_i. Each site belongs to `degree` terms.
class SpinSystem {
public:
    static SpinSystem ising(const lattice::IsingLattice& lat, double coupling = 1.0);
    static SpinSystem kitaev(const lattice::TorusLattice& lat, lattice::Sector sector, double coupling = 1.0);

    SystemKind kind() const noexcept { return kind_; }
    int num_sites() const noexcept { return static_cast<int>(site_terms_.size()); }
    int degree() const noexcept { return degree_; }
    int linear_size() const noexcept { return linear_size_; }
    double coupling() const noexcept { return coupling_; }
    const std::vector<std::vector<int>>& terms() const noexcept { return terms_; }
    const std::vector<std::vector<int>>& site_terms() const noexcept { return site_terms_; }
    const std::optional<lattice::TorusLattice>& torus() const noexcept { return torus_; }
    lattice::Sector sector() const noexcept { return sector_; }

    double energy(const lattice::SpinConfig& config) const;
    // Number of satisfied terms containing `site` (0..degree).
    int site_class(const lattice::SpinConfig& config, int site) const;
    // Energy change of a flip from class k: 2J(2k - degree).
    double class_delta_energy(int k) const { return 2.0 * coupling_ * (2 * k - degree_); }

private:
    SystemKind kind_{SystemKind::Ising1D};
    int degree_{2};
    int linear_size_{0};
    double coupling_{1.0};
    std::vector<std::vector<int>> terms_;
    std::vector<std::vector<int>> site_terms_;
    std::optional<lattice::TorusLattice> torus_;
    lattice::Sector sector_{lattice::Sector::Z};
};

// +-1 valued observable of a spin configuration.
struct Observable {
    std::string name;
    std::function<int(const lattice::SpinConfig&)> eval;
};

Observable site_spin(int site);
Observable constant_one();
// Sign of the total magnetization, ties -> +1.
Observable majority_sign();

enum class StartMode { Ordered, Given, Equilibrium };
enum class StartMethod { Ordered, Given, ExactTransferMatrix, ExactSector, BurnInAnnealed };

std::string to_string(StartMethod m);

struct KmcConfig {
    std::shared_ptr<const SpinSystem> system;
    davies::DaviesRateTable rates;
    double beta{1.0};
    double t_max{1.0};
    double sample_interval{1.0};
    std::uint64_t seed{0};
    std::vector<Observable> observables;
    StartMode start{StartMode::Ordered};
    lattice::SpinConfig initial;  // StartMode::Given
    // BurnInAnnealed: heat-bath sweeps = burn_in_factor * L^2, first half annealed from beta = 0.
    int burn_in_factor{100};
};

struct Trajectory {
    std::uint64_t seed{0};
    std::vector<double> times;
    std::vector<std::string> names;
    std::vector<std::vector<std::int8_t>> series;  // one per observable
    lattice::SpinConfig final_config;
    std::uint64_t events{0};
    StartMethod start{StartMethod::Ordered};
};

std::uint64_t splitmix64(std::uint64_t x);
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index);

// Gibbs sample of the spin system (exact for 1D Ising and Kitaev sectors,
// annealed heat-bath burn-in with a random global flip for 2D Ising).
lattice::SpinConfig equilibrium_sample(const SpinSystem& sys, double beta, std::uint64_t seed, int burn_in_factor,
                                       StartMethod* method = nullptr);

Trajectory run_trajectory(const KmcConfig& config);

// Runs n trajectories with seeds derive_seed(master, i); results are ordered by i
// and independent of `threads`.
std::vector<Trajectory> run_ensemble(const KmcConfig& base, int n, std::uint64_t master, int threads = 1);

enum class CorrelationMode { EquilibriumEnsemble, RelaxationFromOrdered };

std::string to_string(CorrelationMode m);

struct AutocorrelationOptions {
    int max_lag{-1};        // in samples; -1 = half the series
    int origin_stride{1};   // spacing of time origins, in samples
    bool connected{false};  // subtract the ensemble mean squared
    int min_trajectories{20};
};

struct AutocorrelationEstimate {
    std::string observable;
    CorrelationMode mode{CorrelationMode::EquilibriumEnsemble};
    bool connected{false};
    std::vector<double> lags;
    std::vector<double> c;
    std::vector<double> stderr_;
    int n_trajectories{0};
    double mean{0.0};
    std::vector<std::vector<double>> per_trajectory;
};

AutocorrelationEstimate estimate_autocorrelation(const std::vector<Trajectory>& trajectories,
                                                 const std::string& observable, CorrelationMode mode,
                                                 const AutocorrelationOptions& opts = {});

struct FitWindow {
    double t_min{0.0};
    double t_max{0.0};
};

struct DecayFit {
    double gamma{0.0};
    double stderr_{0.0};
    double intercept{0.0};
    double residual_rms{0.0};
    bool non_exponential{false};
    bool jackknife{false};
    int points{0};
};

// Weighted least squares of log C(t) against t over the window.
DecayFit fit_decay_rate(const AutocorrelationEstimate& est, const FitWindow& window);

// Binary records: per trajectory a block header {"QMTR", u32 version = 1,
// u32 n_obs, u64 seed, u64 n_records} then n_records records of
// {f64 time, n_obs x i8}, all little-endian. Blocks are appended.
void append_trajectory_binary(const std::string& path, const Trajectory& traj);
std::vector<Trajectory> read_trajectory_binary(const std::string& path);
std::string trajectory_csv(const Trajectory& traj);
std::string autocorrelation_json(const AutocorrelationEstimate& est);

}  // namespace qmem::dynamics
