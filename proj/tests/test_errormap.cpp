#include "doctest.h"

#include <bit>
#include <cmath>
#include <complex>
#include <random>

#include <unsupported/Eigen/MatrixFunctions>

#include "qmem/errormap.hpp"
#include "qmem/errors.hpp"

using namespace qmem;
using namespace qmem::errormap;
using cd = std::complex<double>;

namespace {

Eigen::Matrix2cd pauli(int k) {
    Eigen::Matrix2cd m;
    switch (k) {
        case 0: m << 1, 0, 0, 1; break;
        case 1: m << 0, 1, 1, 0; break;
        case 2: m << 0, cd(0, -1), cd(0, 1), 0; break;
        default: m << 1, 0, 0, -1; break;
    }
    return m;
}

// Pauli string with qubit i on bit i of the basis index
Eigen::MatrixXcd pauli_string(const std::vector<int>& ks) {
    Eigen::MatrixXcd m = Eigen::MatrixXcd::Ones(1, 1);
    for (int i = static_cast<int>(ks.size()) - 1; i >= 0; --i) {
        const Eigen::Matrix2cd p = pauli(ks[static_cast<std::size_t>(i)]);
        Eigen::MatrixXcd next(m.rows() * 2, m.cols() * 2);
        for (int a = 0; a < 2; ++a) {
            for (int b = 0; b < 2; ++b) next.block(a * m.rows(), b * m.cols(), m.rows(), m.cols()) = p(a, b) * m;
        }
        m = next;
    }
    return m;
}

// w_n from explicit traces Tr(P O) / 2^N over all 4^N strings
std::vector<double> trace_oracle(const Eigen::MatrixXcd& op, int n) {
    std::vector<double> w(static_cast<std::size_t>(n), 0.0);
    const int total = 1 << (2 * n);
    for (int code = 0; code < total; ++code) {
        std::vector<int> ks(static_cast<std::size_t>(n));
        int support = 0;
        for (int i = 0; i < n; ++i) {
            ks[static_cast<std::size_t>(i)] = (code >> (2 * i)) & 3;
            support += ks[static_cast<std::size_t>(i)] != 0;
        }
        const cd c = (pauli_string(ks).adjoint() * op).trace() / static_cast<double>(1 << n);
        if (support > 0) w[static_cast<std::size_t>(support - 1)] += std::norm(c);
    }
    return w;
}

std::vector<double> grid(double t_max, double dt) {
    std::vector<double> g;
    for (int k = 0; k * dt <= t_max + 1e-12; ++k) g.push_back(k * dt);
    return g;
}

}  // namespace

TEST_CASE("support weights agree with the Pauli trace oracle") {
    const int n = 4;
    std::mt19937_64 rng(2);
    std::normal_distribution<double> nd;
    for (int trial = 0; trial < 5; ++trial) {
        Eigen::MatrixXcd op(16, 16);
        for (Eigen::Index i = 0; i < op.size(); ++i) op(i) = cd(nd(rng), nd(rng));
        double total = 0.0;
        const auto w = support_weights(op, n, &total);
        const auto ref = trace_oracle(op, n);
        for (int k = 0; k < n; ++k) CHECK(w[k] == doctest::Approx(ref[k]).epsilon(1e-10));
        CHECK(total == doctest::Approx((op.adjoint() * op).trace().real() / 16.0).epsilon(1e-12));
    }
    const auto zxy = pauli_string({3, 1, 0, 2});
    const auto w = support_weights(zxy, 4);
    CHECK(w[2] == doctest::Approx(1.0));
    CHECK(w[0] == 0.0);
}

TEST_CASE("evolved spectrum matches direct matrix exponential") {
    ChainModel ch;
    ch.n_qubits = 8;
    const auto spectra = evolve_support(ch, 4, {2.0});
    const Eigen::MatrixXcd h = chain_hamiltonian(ch).cast<cd>();
    const Eigen::MatrixXcd u = (cd(0, 1) * 2.0 * h).exp();
    std::vector<int> ks(8, 0);
    ks[4] = 3;
    const Eigen::MatrixXcd ot = u * pauli_string(ks) * u.adjoint();
    const auto ref = support_weights(ot, 8);
    for (int k = 0; k < 8; ++k) CHECK(std::abs(spectra[0].weights[k] - ref[k]) < 1e-8);

    // Hamiltonian oracle from Pauli strings
    Eigen::MatrixXcd h2 = Eigen::MatrixXcd::Zero(256, 256);
    for (int i = 0; i < 8; ++i) {
        std::vector<int> x(8, 0);
        x[i] = 1;
        h2 += pauli_string(x);
        if (i + 1 < 8) {
            std::vector<int> zz(8, 0);
            zz[i] = zz[i + 1] = 3;
            h2 += pauli_string(zz);
        }
    }
    CHECK((h2 - h).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("unitarity and light-cone onset") {
    ChainModel ch;
    ch.n_qubits = 7;
    const auto spectra = evolve_support(ch, 3, grid(6.0, 0.05), Pauli::X);
    for (const auto& s : spectra) {
        double sum = 0.0;
        for (double w : s.weights) {
            CHECK(w >= -1e-15);
            sum += w;
        }
        CHECK(std::abs(sum - 1.0) < 1e-10);
        CHECK(std::abs(s.total - 1.0) < 1e-10);
    }
    std::vector<double> onset(7, INFINITY);
    for (const auto& s : spectra) {
        for (int k = 0; k < 7; ++k) {
            if (s.weights[k] > 1e-3 && std::isinf(onset[k])) onset[k] = s.t;
        }
    }
    for (int k = 1; k < 7; ++k) CHECK(onset[k] >= onset[k - 1]);
}

TEST_CASE("conserved and decoupled chains") {
    ChainModel zz{6, 1.0, 0.0};
    for (const auto& s : evolve_support(zz, 1, grid(5.0, 0.5))) CHECK(s.weights[0] == doctest::Approx(1.0));
    ChainModel free{6, 0.0, 1.3};
    for (const auto& s : evolve_support(free, 2, grid(5.0, 0.5))) {
        for (int k = 1; k < 6; ++k) CHECK(s.weights[k] < 1e-20);
    }
    CHECK_THROWS_AS(evolve_support(ChainModel{11, 1, 1}, 0, {0.0}), CapacityError);
    CHECK_THROWS_AS(evolve_support(ChainModel{1, 1, 1}, 0, {0.0}), ParameterError);
    CHECK_THROWS_AS(evolve_support(ChainModel{4, 1, 1}, 4, {0.0}), ParameterError);
}

TEST_CASE("born weights under synthetic support models") {
    const double v = 1.0, dt = 1e-3;
    const int n = 8;
    std::vector<SupportSpectrum> spectra;
    std::vector<double> t;
    for (int k = 1; k * dt <= n / v; ++k) {
        SupportSpectrum s;
        s.t = k * dt;
        s.weights.assign(n, 0.0);
        const int size = std::min(n, static_cast<int>(std::ceil(v * s.t - 1e-12)));
        s.weights[static_cast<std::size_t>(size - 1)] = 1.0;
        spectra.push_back(s);
        t.push_back(s.t);
    }
    std::vector<cd> ex, lor;
    for (double x : t) {
        ex.emplace_back(std::exp(-x), 0.0);
        lor.emplace_back(1.0 / (1.0 + x * x), 0.0);
    }
    const auto e = born_error_weights(spectra, bath::correlation_from_samples(t, ex));
    for (int k = 1; k < n - 1; ++k) {
        CHECK(e.magnitudes[k + 1] / e.magnitudes[k] == doctest::Approx(std::exp(-1.0 / v)).epsilon(1e-3));
    }
    const auto verdict = a2_fit(e);
    CHECK(verdict.accepted);
    CHECK(verdict.eta == doctest::Approx(std::exp(-1.0)).epsilon(1e-2));

    const auto l = born_error_weights(spectra, bath::correlation_from_samples(t, lor));
    for (int k = 2; k < n; ++k) {
        // m_n ~ integral of 1/(1+t^2) over the n-th unit cell, about 1/(1+(n-1/2)^2)
        const double ref = std::atan(k + 1.0) - std::atan(static_cast<double>(k));
        CHECK(l.magnitudes[k] == doctest::Approx(ref).epsilon(5e-3));
    }

    // delta-like: only the earliest point carries correlation
    std::vector<cd> delta(t.size(), 0.0);
    delta[0] = 1.0;
    const auto d = born_error_weights(spectra, bath::correlation_from_samples(t, delta));
    CHECK(d.magnitudes[0] > 0.0);
    for (int k = 1; k < n; ++k) CHECK(d.magnitudes[k] == 0.0);

    std::vector<double> shifted = t;
    shifted[3] += 0.1;
    CHECK_THROWS_AS(born_error_weights(spectra, bath::correlation_from_samples(shifted, ex)), ParameterError);
    CHECK_THROWS_AS(born_error_weights(spectra, bath::correlation_from_samples({0.0}, {1.0})), ParameterError);
}

TEST_CASE("A2 fit") {
    ErrorWeightEstimate geo, pw;
    for (int k = 1; k <= 8; ++k) {
        geo.sizes.push_back(k);
        geo.magnitudes.push_back(std::pow(0.1, k));
        pw.sizes.push_back(k);
        pw.magnitudes.push_back(1.0 / (k * k));
    }
    const auto a = a2_fit(geo);
    CHECK(a.accepted);
    CHECK(a.eta == doctest::Approx(0.1).epsilon(1e-10));
    CHECK(a.amplitude == doctest::Approx(1.0).epsilon(1e-10));
    CHECK_FALSE(a2_fit(pw).accepted);
    ErrorWeightEstimate few;
    few.sizes = {1, 2, 3};
    few.magnitudes = {1.0, 0.5, 0.25};
    CHECK_THROWS_AS(a2_fit(few), DataError);
}

TEST_CASE("fast exponential bath concentrates weight on one site") {
    ChainModel ch{6, 1.0, 1.0};
    const auto g = grid(10.0, 0.02);
    const auto spectra = evolve_support(ch, 2, g);
    double prev_eta = 1.0;
    for (double a : {5.0, 20.0, 80.0}) {
        std::vector<cd> f;
        for (double x : g) f.emplace_back(std::exp(-a * x), 0.0);
        const auto est = born_error_weights(spectra, bath::correlation_from_samples(g, f));
        const auto v = a2_fit(est);
        CHECK(v.eta < prev_eta);
        CHECK(est.magnitudes[0] / est.normalization > 0.9);
        prev_eta = v.eta;
    }
}
