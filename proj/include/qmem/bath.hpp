// bath.hpp: KMS spectral densities, correlation functions and bath audits
//
// Units: hbar = k_B = 1. Frequencies are angular, beta carries time units.
// Fourier convention: R(w) = (1/2pi) \int F(t) e^{-iwt} dt, so that
// F(t) = \int R(w) e^{iwt} dw.

#pragma once

#include <complex>
#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace qmem::bath {

enum class DensityKind { FlatKMS, PowerAnsatz, Tabulated };

std::string to_string(DensityKind kind);
DensityKind density_kind_from_string(const std::string& name);

struct DensityParams {
    double amplitude{1.0};       // R (FlatKMS) or C (PowerAnsatz), rate units
    double cutoff{10.0};         // Omega, angular frequency
    double beta{1.0};            // inverse temperature, time units
    double exponent{1.0};        // d, PowerAnsatz only
    double kms_tolerance{1e-3};  // Tabulated only
    std::vector<double> omegas;  // Tabulated only, any order
    std::vector<double> values;  // Tabulated only
};

class SpectralDensity {
public:
    // Evaluates R(w); zero outside the support [-Omega, Omega].
    double operator()(double w) const;

    DensityKind kind() const noexcept { return kind_; }
    double amplitude() const noexcept { return amplitude_; }
    double cutoff() const noexcept { return cutoff_; }
    double beta() const noexcept { return beta_; }
    double exponent() const noexcept { return exponent_; }
    double lower_edge() const noexcept { return lower_; }

    // Points inside (lower_edge, cutoff) where R is not smooth; always contains 0.
    std::vector<double> breakpoints() const;

    // Largest |R(-w) e^{beta w} / R(w) - 1| over the supplied positive frequencies.
    double kms_violation(const std::vector<double>& positive_omegas) const;

    const std::vector<double>& table_omegas() const noexcept { return tab_w_; }
    const std::vector<double>& table_values() const noexcept { return tab_r_; }

private:
    friend SpectralDensity build_spectral_density(DensityKind, const DensityParams&);

    DensityKind kind_{DensityKind::FlatKMS};
    double amplitude_{1.0};
    double cutoff_{1.0};
    double lower_{-1.0};
    double beta_{1.0};
    double exponent_{1.0};
    std::vector<double> tab_w_;
    std::vector<double> tab_r_;
};

SpectralDensity build_spectral_density(DensityKind kind, const DensityParams& params);

// Two-column CSV (omega, R) with a header line.
SpectralDensity read_tabulated_csv(const std::string& path, double beta,
                                   double kms_tolerance = 1e-3);

struct QuadratureOptions {
    double rel_tol{1e-8};
    int initial_panels{8};
    int max_panels{1 << 22};
};

struct CorrelationFunction {
    std::vector<double> t;
    std::vector<std::complex<double>> values;
    std::vector<double> error_bound;  // |I_2n - I_n| at the accepted level, per sample
    int max_panels_used{0};
    double rel_tol{0.0};
    // Oscillation frequency of the cutoff edges; 0 when unknown (synthetic data).
    double cutoff{0.0};
};

CorrelationFunction correlation_function(const SpectralDensity& model,
                                         const std::vector<double>& t_grid,
                                         const QuadratureOptions& opts = {});

// Wraps raw samples (e.g. synthetic test data) without cutoff information.
CorrelationFunction correlation_from_samples(std::vector<double> t,
                                             std::vector<std::complex<double>> values,
                                             double cutoff = 0.0);

// F averaged against a Fejer (triangular) window of half-width 2pi/cutoff.
// The window annihilates e^{+-i cutoff t} times any linear function of t, which
// removes the ringing produced by the hard edges of the density and leaves the
// thermal component generated by the kink at w = 0.
std::complex<double> cutoff_averaged(const CorrelationFunction& corr, double t);

struct TailFitOptions {
    double residual_threshold{0.05};  // RMS of log-residuals above this => not a power law
    std::size_t min_points{8};
};

struct TailFit {
    double exponent{0.0};   // p in |F| ~ a / t^p
    double amplitude{0.0};  // a
    double residual{0.0};   // RMS of log residuals
    bool power_law{false};
    std::size_t points{0};
};

TailFit tail_fit(const CorrelationFunction& corr, double t_min, double t_max,
                 const TailFitOptions& opts = {});

// Uniform grid suited to tail_fit on [t_min, t_max]: covers the averaging
// margin and places window endpoints on grid points.
std::vector<double> tail_grid(double cutoff, double t_min, double t_max,
                              int points_per_period = 32);

struct BathConditionsOptions {
    double r2_threshold{0.0};
    int grid_points{400};
    bool fit_tail{true};
};

struct BathConditionsReport {
    double kms_max_violation{0.0};
    double r2_constant{0.0};        // eta, analytic infimum where available
    double r2_grid_minimum{0.0};    // minimum over the sampling grid
    bool r2_satisfied{false};
    bool d1_edge_case{false};       // PowerAnsatz with d == 1
    double tail_exponent{0.0};
    double tail_amplitude{0.0};
    double tail_residual{0.0};
    bool tail_power_law{false};
    double tail_t_min{0.0};
    double tail_t_max{0.0};
    std::vector<double> floor_omega;  // gate_error_floor sample points
    std::vector<double> floor_value;  // R(w)/w at those points
};

BathConditionsReport check_conditions(const SpectralDensity& model,
                                      const BathConditionsOptions& opts = {});

enum class Coupling { Private, Collective };

struct CorrelationMatrixSpec {
    int n_qubits{1};
    std::function<Eigen::Matrix3d(double)> base;
    Coupling coupling{Coupling::Private};
};

Eigen::MatrixXd expand_correlation_matrix(const CorrelationMatrixSpec& spec, double omega);
int collective_rank(const CorrelationMatrixSpec& spec, double omega);

struct GateTimeBound {
    double tau_max{0.0};
    double eta{0.0};
    double cutoff{0.0};
    double epsilon{0.0};
    double spectral_lower{0.0};  // eta Omega^2 / 2
    double norm_upper{0.0};      // epsilon^2 / tau_max^2
};

GateTimeBound tb_gate_time_bound(double eta, double cutoff, double epsilon);

}  // namespace qmem::bath
