// errormap.hpp: Heisenberg support growth on small chains and the Born-order
// multi-qubit error-weight audit

#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "qmem/bath.hpp"

namespace qmem::errormap {

enum class Pauli { X, Y, Z };

std::string to_string(Pauli p);
Pauli pauli_from_string(const std::string& s);

inline constexpr int kMaxChainQubits = 10;

// Open chain H = J sum_i Z_i Z_{i+1} + g sum_i X_i. Qubit i is bit i of the
// computational-basis index.
struct ChainModel {
    int n_qubits{8};
    double coupling{1.0};  // J
    double field{1.0};     // g

    void validate() const;
};

Eigen::MatrixXd chain_hamiltonian(const ChainModel& chain);

struct SupportSpectrum {
    double t{0.0};
    std::vector<double> weights;  // weights[n-1] = w_n
    double total{0.0};            // sum of squared Pauli magnitudes
};

// Squared Pauli-basis magnitudes of a 2^N x 2^N operator aggregated by support
// size, normalized by 2^N (so a Pauli string has total 1).
std::vector<double> support_weights(const Eigen::MatrixXcd& op, int n_qubits, double* total = nullptr);

std::vector<SupportSpectrum> evolve_support(const ChainModel& chain, int site, const std::vector<double>& t_grid,
                                            Pauli op = Pauli::Z);

struct ErrorWeightEstimate {
    std::vector<int> sizes;
    std::vector<double> magnitudes;  // m_n
    double normalization{0.0};       // sum_n m_n
    double tau_map{1.0};
};

// m_n = sum_k |F(tau_map * t_k)| w_n(t_k) dt_k on the common grid.
ErrorWeightEstimate born_error_weights(const std::vector<SupportSpectrum>& spectra,
                                       const bath::CorrelationFunction& corr, double tau_map = 1.0);

struct A2Verdict {
    double amplitude{0.0};  // C
    double eta{0.0};
    double r_squared{0.0};
    int points{0};
    bool accepted{false};
    std::string verdict;
};

// Least squares of log m_n against n over the nonzero sizes.
A2Verdict a2_fit(const ErrorWeightEstimate& est, double r2_threshold = 0.98);

std::string spectra_csv(const std::vector<SupportSpectrum>& spectra);
std::string estimate_csv(const ErrorWeightEstimate& est);
std::string verdict_json(const A2Verdict& v, const ErrorWeightEstimate& est);

}  // namespace qmem::errormap
