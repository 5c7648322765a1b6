// experiments.hpp: YAML experiment configs and the study runners behind the CLI

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "qmem/bath.hpp"
#include "qmem/davies.hpp"

namespace qmem::experiments {

inline constexpr const char* kVersion = "0.1.0";

enum class ExperimentKind { BathAudit, KitaevGap, IsingLifetime, KitaevLifetime, DaviesProperties, ErrormapAudit };

std::string to_string(ExperimentKind k);
ExperimentKind experiment_from_string(const std::string& s);

struct BathSection {
    std::string kind{"FlatKMS"};
    double amplitude{1.0};       // R or C, rate units (hbar = 1)
    double cutoff{10.0};         // Omega, angular frequency
    double beta{1.0};            // inverse temperature, time units (k_B = 1)
    double exponent{1.0};        // d, PowerAnsatz only
    std::string table;           // CSV (omega, R), Tabulated only
    double kms_tolerance{1e-3};
    double r2_threshold{0.0};    // eta threshold, rate / frequency
    double gate_epsilon{0.01};   // target gate error, dimensionless
    std::vector<int> collective_qubits{1, 2, 4, 8};

    bool operator==(const BathSection&) const = default;
};

struct DaviesSection {
    double lambda2{1.0};         // system-bath coupling squared, dimensionless
    double coupling{1.0};        // J, energy units
    std::vector<double> betas{0.0, 0.5, 1.0};
    std::vector<int> ising_sizes{3, 4, 5, 6, 7, 8};
    std::vector<int> kitaev_sizes{2, 3};
    std::string sector{"Z"};
    std::uint64_t state_cap{std::uint64_t{1} << 20};
    int eigenpairs{3};
    double tolerance{1e-8};
    int convexity_observables{200};
    int commuting_observables{100};
    int relaxation_starts{5};
    bool export_generators{false};

    bool operator==(const DaviesSection&) const = default;
};

struct LifetimeSection {
    std::vector<int> sizes{4, 6, 8};
    std::vector<double> betas{0.6};
    std::vector<std::string> observables{"bare", "dressed"};
    std::string decoder{"auto"};  // auto: majority for Ising, matching for Kitaev
    std::string mode{"equilibrium"};
    bool connected{true};
    int trajectories{40};
    int pilot_trajectories{20};
    int samples{200};
    double t_max{0.0};            // time units; 0 = adaptive
    double t_cap{1e8};            // time units
    double pilot_target{0.5};
    int burn_in_factor{100};

    bool operator==(const LifetimeSection&) const = default;
};

struct ErrormapSection {
    int n_qubits{8};
    double coupling{1.0};         // J, energy units
    double field{1.0};            // g, energy units
    int site{4};                  // 0-based
    std::string pauli{"Z"};
    double t_max{20.0};           // time units
    double dt{0.05};              // time units
    double tau_map{1.0};          // bath time per chain time
    std::string correlation{"spectral"};  // spectral (bath section) or exponential
    double decay_rate{5.0};       // a in e^{-a t}, inverse time units
    double r2_threshold{0.98};

    bool operator==(const ErrormapSection&) const = default;
};

struct ExperimentConfig {
    ExperimentKind experiment{ExperimentKind::BathAudit};
    std::uint64_t seed{1};
    std::string output_dir{"out"};
    int threads{1};
    bool json{true};
    bool csv{true};
    bool dat{true};
    BathSection bath;
    DaviesSection davies;
    LifetimeSection lifetime;
    ErrormapSection errormap;

    bool operator==(const ExperimentConfig&) const = default;
};

// Throws ParameterError naming the offending key.
ExperimentConfig parse_config(const std::string& yaml_text);
ExperimentConfig load_config(const std::string& path);
std::string dump_config(const ExperimentConfig& cfg);
void validate(const ExperimentConfig& cfg);
std::string config_hash(const ExperimentConfig& cfg);

bath::SpectralDensity build_bath(const BathSection& b, double beta);

// davies-properties suite

struct SystemProperties {
    std::string system;        // e.g. ising1d_N6, kitaev_L2
    double beta{0.0};
    Eigen::Index dimension{0};
    double stationarity{0.0};        // D1
    double detailed_balance{0.0};    // D3
    double gap{0.0};
    double second_eigenvalue{0.0};   // D2: zero eigenvalue simple
    double relaxation_tv{0.0};       // max over starts at t = 50 / gap
    double min_eigenvalue{0.0};      // D4
    double convexity_min_slack{0.0};
    int convexity_trials{0};
    double gap_inequality_min_slack{0.0};
    int gap_inequality_trials{0};
    bool d1{false}, d2{false}, d3{false}, d4{false}, convexity{false}, gap_inequality{false};
};

struct PropertiesReport {
    std::vector<SystemProperties> systems;
    bool all_pass{false};
};

PropertiesReport davies_properties_suite(const ExperimentConfig& cfg);

struct GapRow {
    int size{0};
    double beta{0.0};
    Eigen::Index dimension{0};
    double gap{0.0};
    std::string method;
    int iterations{0};
    double residual{0.0};
};

std::vector<GapRow> kitaev_gap_study(const ExperimentConfig& cfg, const std::string& export_dir = {});

struct RunResult {
    int exit_code{0};
    std::string message;
    std::vector<std::string> outputs;  // file names inside the output directory
};

// Runs the configured experiment into cfg.output_dir and writes manifest.json.
// Exit codes: 0 success, 2 validation error, 3 numerical failure.
RunResult run(const ExperimentConfig& cfg);

struct CliOverrides {
    std::optional<std::string> out;
    std::optional<std::uint64_t> seed;
    std::optional<int> threads;
};

RunResult run_from_file(const std::string& config_path, const CliOverrides& overrides);

}  // namespace qmem::experiments
