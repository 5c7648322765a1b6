#include "qmem/errormap.hpp"

#include <bit>
#include <cmath>
#include <complex>
#include <sstream>

#include "json.hpp"
#include "qmem/errors.hpp"
#include "qmem/io.hpp"

namespace qmem::errormap {

using cd = std::complex<double>;

std::string to_string(Pauli p) {
    switch (p) {
        case Pauli::X: return "X";
        case Pauli::Y: return "Y";
        case Pauli::Z: return "Z";
    }
    return "?";
}

Pauli pauli_from_string(const std::string& s) {
    if (s == "X" || s == "x") return Pauli::X;
    if (s == "Y" || s == "y") return Pauli::Y;
    if (s == "Z" || s == "z") return Pauli::Z;
    throw ParameterError("unknown Pauli '" + s + "'");
}

void ChainModel::validate() const {
    if (n_qubits < 2) throw ParameterError("chain needs n_qubits >= 2");
    if (n_qubits > kMaxChainQubits) {
        throw CapacityError("chain of " + std::to_string(n_qubits) + " qubits exceeds the dense limit of " +
                            std::to_string(kMaxChainQubits));
    }
    if (!std::isfinite(coupling) || !std::isfinite(field)) throw ParameterError("chain couplings must be finite");
}

Eigen::MatrixXd chain_hamiltonian(const ChainModel& chain) {
    chain.validate();
    const int n = chain.n_qubits;
    const Eigen::Index dim = Eigen::Index{1} << n;
    Eigen::MatrixXd h = Eigen::MatrixXd::Zero(dim, dim);
    for (Eigen::Index s = 0; s < dim; ++s) {
        double zz = 0.0;
        for (int i = 0; i + 1 < n; ++i) {
            const int zi = (s >> i & 1) ? -1 : 1;
            const int zj = (s >> (i + 1) & 1) ? -1 : 1;
            zz += zi * zj;
        }
        h(s, s) = chain.coupling * zz;
        for (int i = 0; i < n; ++i) h(s ^ (Eigen::Index{1} << i), s) += chain.field;
    }
    return h;
}

std::vector<double> support_weights(const Eigen::MatrixXcd& op, int n_qubits, double* total) {
    const Eigen::Index dim = Eigen::Index{1} << n_qubits;
    if (op.rows() != dim || op.cols() != dim) throw ParameterError("operator dimension does not match 2^N");
    Eigen::MatrixXcd c = op;
    // qubit-wise Pauli transform of the (row bit, column bit) pair
    for (int q = 0; q < n_qubits; ++q) {
        const Eigen::Index b = Eigen::Index{1} << q;
        for (Eigen::Index r = 0; r < dim; ++r) {
            if (r & b) continue;
            for (Eigen::Index k = 0; k < dim; ++k) {
                if (k & b) continue;
                const cd m00 = c(r, k), m01 = c(r, k | b), m10 = c(r | b, k), m11 = c(r | b, k | b);
                c(r, k) = 0.5 * (m00 + m11);
                c(r, k | b) = 0.5 * (m01 + m10);
                c(r | b, k) = cd(0.0, 0.5) * (m01 - m10);
                c(r | b, k | b) = 0.5 * (m00 - m11);
            }
        }
    }
    std::vector<double> w(static_cast<std::size_t>(n_qubits), 0.0);
    double sum = 0.0;
    for (Eigen::Index r = 0; r < dim; ++r) {
        for (Eigen::Index k = 0; k < dim; ++k) {
            const double m = std::norm(c(r, k));
            sum += m;
            const int size = std::popcount(static_cast<unsigned long long>(r | k));
            if (size > 0) w[static_cast<std::size_t>(size - 1)] += m;
        }
    }
    if (total) *total = sum;
    return w;
}

std::vector<SupportSpectrum> evolve_support(const ChainModel& chain, int site, const std::vector<double>& t_grid,
                                            Pauli op) {
    chain.validate();
    const int n = chain.n_qubits;
    if (site < 0 || site >= n) throw ParameterError("site outside the chain");
    const Eigen::Index dim = Eigen::Index{1} << n;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(chain_hamiltonian(chain));
    if (es.info() != Eigen::Success) throw NumericalError("chain diagonalization failed");
    const Eigen::MatrixXd& v = es.eigenvectors();
    const Eigen::VectorXd& lam = es.eigenvalues();

    Eigen::MatrixXcd o = Eigen::MatrixXcd::Zero(dim, dim);
    const Eigen::Index b = Eigen::Index{1} << site;
    for (Eigen::Index s = 0; s < dim; ++s) {
        const bool up = !(s & b);
        switch (op) {
            case Pauli::Z: o(s, s) = up ? 1.0 : -1.0; break;
            case Pauli::X: o(s ^ b, s) = 1.0; break;
            case Pauli::Y: o(s ^ b, s) = up ? cd(0.0, 1.0) : cd(0.0, -1.0); break;
        }
    }
    const Eigen::MatrixXcd vc = v.cast<cd>();
    const Eigen::MatrixXcd ot = vc.adjoint() * o * vc;

    std::vector<SupportSpectrum> out;
    for (double t : t_grid) {
        if (!std::isfinite(t)) throw ParameterError("time grid must be finite");
        // e^{iHt} O e^{-iHt} in the eigenbasis
        Eigen::MatrixXcd rot(dim, dim);
        for (Eigen::Index a = 0; a < dim; ++a) {
            for (Eigen::Index c = 0; c < dim; ++c) rot(a, c) = ot(a, c) * std::polar(1.0, (lam[a] - lam[c]) * t);
        }
        const Eigen::MatrixXcd m = vc * rot * vc.adjoint();
        SupportSpectrum sp;
        sp.t = t;
        sp.weights = support_weights(m, n, &sp.total);
        out.push_back(std::move(sp));
    }
    return out;
}

ErrorWeightEstimate born_error_weights(const std::vector<SupportSpectrum>& spectra,
                                       const bath::CorrelationFunction& corr, double tau_map) {
    if (spectra.empty()) throw DataError("no support spectra");
    if (!(tau_map > 0.0) || !std::isfinite(tau_map)) throw ParameterError("tau_map must be > 0");
    if (corr.t.size() != spectra.size() || corr.values.size() != spectra.size()) {
        throw ParameterError("grid mismatch: spectra and correlation have different lengths");
    }
    const std::size_t n = spectra.front().weights.size();
    for (std::size_t k = 0; k < spectra.size(); ++k) {
        const double expect = tau_map * spectra[k].t;
        if (std::abs(corr.t[k] - expect) > 1e-9 * std::max(1.0, std::abs(expect))) {
            std::ostringstream os;
            os << "grid mismatch at index " << k << ": correlation t = " << corr.t[k] << ", expected " << expect;
            throw ParameterError(os.str());
        }
        if (spectra[k].weights.size() != n) throw ParameterError("grid mismatch: spectra of different chain sizes");
        if (k > 0 && !(spectra[k].t > spectra[k - 1].t)) throw ParameterError("spectra times must increase");
    }
    ErrorWeightEstimate est;
    est.tau_map = tau_map;
    est.magnitudes.assign(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) est.sizes.push_back(static_cast<int>(i + 1));
    for (std::size_t k = 0; k < spectra.size(); ++k) {
        double dt;
        if (spectra.size() == 1) {
            dt = 1.0;
        } else if (k + 1 < spectra.size()) {
            dt = spectra[k + 1].t - spectra[k].t;
        } else {
            dt = spectra[k].t - spectra[k - 1].t;
        }
        const double f = std::abs(corr.values[k]);
        for (std::size_t i = 0; i < n; ++i) est.magnitudes[i] += f * spectra[k].weights[i] * dt;
    }
    for (double m : est.magnitudes) est.normalization += m;
    return est;
}

A2Verdict a2_fit(const ErrorWeightEstimate& est, double r2_threshold) {
    std::vector<double> x, y;
    for (std::size_t i = 0; i < est.magnitudes.size(); ++i) {
        if (est.magnitudes[i] < 0.0) throw InvariantError("negative error magnitude");
        if (est.magnitudes[i] > 0.0) {
            x.push_back(est.sizes[i]);
            y.push_back(std::log(est.magnitudes[i]));
        }
    }
    if (x.size() < 4) {
        throw DataError("A2 fit needs at least 4 nonzero sizes, got " + std::to_string(x.size()));
    }
    const double n = static_cast<double>(x.size());
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= n;
    my /= n;
    double sxx = 0, sxy = 0, syy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxx += (x[i] - mx) * (x[i] - mx);
        sxy += (x[i] - mx) * (y[i] - my);
        syy += (y[i] - my) * (y[i] - my);
    }
    const double slope = sxy / sxx;
    const double intercept = my - slope * mx;
    A2Verdict v;
    v.points = static_cast<int>(x.size());
    v.eta = std::exp(slope);
    v.amplitude = std::exp(intercept);
    v.r_squared = syy > 0.0 ? (sxy * sxy) / (sxx * syy) : 1.0;
    v.accepted = v.r_squared >= r2_threshold && v.eta < 1.0;
    if (v.accepted) {
        v.verdict = "A2 accepted";
    } else if (v.eta >= 1.0) {
        v.verdict = "A2-violating tail: weights do not decrease with support size";
    } else {
        v.verdict = "A2-violating tail: weights are not exponential in support size";
    }
    return v;
}

std::string spectra_csv(const std::vector<SupportSpectrum>& spectra) {
    std::ostringstream os;
    os << "t";
    const std::size_t n = spectra.empty() ? 0 : spectra.front().weights.size();
    for (std::size_t i = 1; i <= n; ++i) os << ",w" << i;
    os << ",total\n";
    for (const auto& s : spectra) {
        os << io::format_double(s.t);
        for (double w : s.weights) os << ',' << io::format_double(w);
        os << ',' << io::format_double(s.total) << '\n';
    }
    return os.str();
}

std::string estimate_csv(const ErrorWeightEstimate& est) {
    std::ostringstream os;
    os << "n,m_n\n";
    for (std::size_t i = 0; i < est.sizes.size(); ++i) {
        os << est.sizes[i] << ',' << io::format_double(est.magnitudes[i]) << '\n';
    }
    return os.str();
}

std::string verdict_json(const A2Verdict& v, const ErrorWeightEstimate& est) {
    nlohmann::json j;
    j["C"] = v.amplitude;
    j["eta"] = v.eta;
    j["r_squared"] = v.r_squared;
    j["points"] = v.points;
    j["accepted"] = v.accepted;
    j["verdict"] = v.verdict;
    j["tau_map"] = est.tau_map;
    j["normalization"] = est.normalization;
    j["magnitudes"] = est.magnitudes;
    return j.dump(2);
}

}  // namespace qmem::errormap
