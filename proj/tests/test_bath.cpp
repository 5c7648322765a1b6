#include "doctest.h"

#include <cmath>
#include <complex>
#include <cstdio>
#include <fstream>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "qmem/bath.hpp"
#include "qmem/errors.hpp"

using namespace qmem;
using namespace qmem::bath;
using cd = std::complex<double>;

namespace {

SpectralDensity flat(double r = 1.0, double omega = 10.0, double beta = 1.0) {
    DensityParams p;
    p.amplitude = r;
    p.cutoff = omega;
    p.beta = beta;
    return build_spectral_density(DensityKind::FlatKMS, p);
}

SpectralDensity power(double c, double d, double omega, double beta = 1.0) {
    DensityParams p;
    p.amplitude = c;
    p.cutoff = omega;
    p.beta = beta;
    p.exponent = d;
    return build_spectral_density(DensityKind::PowerAnsatz, p);
}

// closed form of \int R(w) e^{iwt} dw for the flat density
cd flat_exact(double r, double omega, double beta, double t) {
    const cd i(0.0, 1.0);
    const cd neg = r * (1.0 - std::exp(-(beta + i * t) * omega)) / (beta + i * t);
    const cd pos = t == 0.0 ? cd(r * omega) : r * (std::exp(i * omega * t) - 1.0) / (i * t);
    return neg + pos;
}

// adaptive Gauss-Kronrod, piecewise on [-Omega, 0] and [0, Omega]
cd gk_oracle(const SpectralDensity& m, double t) {
    using boost::math::quadrature::gauss_kronrod;
    const auto re = [&](double w) { return m(w) * std::cos(w * t); };
    const auto im = [&](double w) { return m(w) * std::sin(w * t); };
    const double lo = m.lower_edge(), hi = m.cutoff();
    const int depth = 30;
    const double tol = 1e-13;
    double a = gauss_kronrod<double, 61>::integrate(re, lo, 0.0, depth, tol) +
               gauss_kronrod<double, 61>::integrate(re, 0.0, hi, depth, tol);
    double b = gauss_kronrod<double, 61>::integrate(im, lo, 0.0, depth, tol) +
               gauss_kronrod<double, 61>::integrate(im, 0.0, hi, depth, tol);
    return {a, b};
}

}  // namespace

TEST_CASE("flat density satisfies KMS") {
    const auto m = flat();
    CHECK(m(1.0) == doctest::Approx(1.0));
    CHECK(m(-1.0) == doctest::Approx(std::exp(-1.0)).epsilon(1e-12));
    CHECK(m(10.5) == 0.0);
    CHECK(m(-10.5) == 0.0);
    std::vector<double> ws;
    for (int k = 1; k <= 100; ++k) ws.push_back(0.1 * k);
    CHECK(m.kms_violation(ws) < 1e-12);
}

TEST_CASE("power ansatz formula") {
    const auto m = power(1.0, 2.0, 1.0);
    CHECK(m(0.5) == doctest::Approx(0.25 * std::exp(-0.5)).epsilon(1e-12));
    CHECK(m(0.5) == doctest::Approx(0.1516).epsilon(1e-3));
    std::vector<double> ws{0.01, 0.1, 0.5, 0.9, 1.0};
    CHECK(m.kms_violation(ws) < 1e-12);
}

TEST_CASE("parameter domain") {
    DensityParams p;
    p.amplitude = -1.0;
    CHECK_THROWS_AS(build_spectral_density(DensityKind::FlatKMS, p), ParameterError);
    p.amplitude = 1.0;
    p.cutoff = 0.0;
    CHECK_THROWS_AS(build_spectral_density(DensityKind::FlatKMS, p), ParameterError);
    p.cutoff = 1.0;
    p.beta = -0.1;
    CHECK_THROWS_AS(build_spectral_density(DensityKind::FlatKMS, p), ParameterError);
    p.beta = 1.0;
    p.exponent = 0.5;
    CHECK_THROWS_AS(build_spectral_density(DensityKind::PowerAnsatz, p), ParameterError);
}

TEST_CASE("tabulated density rejects a KMS violation") {
    const double beta = 1.0;
    DensityParams p;
    p.beta = beta;
    p.cutoff = 2.0;
    for (double w : {-2.0, -1.0, 0.0, 1.0, 2.0}) {
        p.omegas.push_back(w);
        double r = w >= 0 ? 1.0 : std::exp(beta * w);
        if (w == -1.0) r *= 1.2;
        p.values.push_back(r);
    }
    CHECK_THROWS_AS(build_spectral_density(DensityKind::Tabulated, p), ParameterError);
    p.values[1] /= 1.2;
    const auto m = build_spectral_density(DensityKind::Tabulated, p);
    CHECK(m(0.5) == doctest::Approx(1.0));

    const std::string path = "tab_density.csv";
    {
        std::ofstream f(path);
        f << "omega,R\n";
        for (std::size_t i = 0; i < p.omegas.size(); ++i) f << p.omegas[i] << ',' << p.values[i] << '\n';
    }
    const auto t = read_tabulated_csv(path, beta, 1e-3);
    CHECK(t(1.0) == doctest::Approx(1.0));
    std::remove(path.c_str());
}

TEST_CASE("correlation at t = 0 is the integral of R") {
    const auto m = flat();
    const auto c = correlation_function(m, {0.0});
    CHECK(c.values[0].real() == doctest::Approx(10.0 + (1.0 - std::exp(-10.0))).epsilon(1e-9));
    CHECK(c.values[0].real() == doctest::Approx(10.99995).epsilon(1e-6));
    CHECK(std::abs(c.values[0].imag()) < 1e-12);
}

TEST_CASE("flat correlation matches the closed form") {
    const auto m = flat(1.0, 10.0, 1.0);
    std::vector<double> grid;
    for (int k = 0; k <= 60; ++k) grid.push_back(0.37 * k);
    const auto c = correlation_function(m, grid);
    for (std::size_t k = 0; k < grid.size(); ++k) {
        const cd exact = flat_exact(1.0, 10.0, 1.0, grid[k]);
        CHECK(std::abs(c.values[k] - exact) < 1e-7 * std::max(1.0, std::abs(exact)));
        CHECK(std::abs(c.values[k]) <= c.values[0].real() * (1 + 1e-9));
    }
}

TEST_CASE("power ansatz correlation matches Gauss-Kronrod") {
    const auto m = power(1.0, 2.0, 1.0, 2.0);
    std::vector<double> grid{0.0, 0.5, 1.0, 3.0, 7.5, 20.0};
    const auto c = correlation_function(m, grid);
    for (std::size_t k = 0; k < grid.size(); ++k) {
        const cd ref = gk_oracle(m, grid[k]);
        CHECK(std::abs(c.values[k] - ref) < 1e-7 * std::max(1e-3, std::abs(ref)));
    }
}

TEST_CASE("thermal tail of the flat density") {
    const auto m = flat();
    const auto grid = tail_grid(10.0, 20.0, 200.0);
    const auto c = correlation_function(m, grid);
    CHECK(std::abs(cutoff_averaged(c, 50.0)) == doctest::Approx(4e-4).epsilon(0.25));
    const auto fit = tail_fit(c, 20.0, 200.0);
    CHECK(fit.exponent >= 1.8);
    CHECK(fit.exponent <= 2.2);
    CHECK(fit.amplitude == doctest::Approx(1.0).epsilon(0.3));
    CHECK(fit.power_law);
}

TEST_CASE("tail fit on synthetic data") {
    std::vector<double> t;
    std::vector<cd> v;
    for (int k = 0; k <= 200; ++k) {
        t.push_back(20.0 + k);
        v.emplace_back(3.0 / (t.back() * t.back()), 0.0);
    }
    const auto fit = tail_fit(correlation_from_samples(t, v), 20.0, 220.0);
    CHECK(fit.exponent == doctest::Approx(2.0).epsilon(1e-9));
    CHECK(fit.amplitude == doctest::Approx(3.0).epsilon(1e-9));

    std::vector<double> t2;
    std::vector<cd> v2;
    for (int k = 0; k <= 200; ++k) {
        t2.push_back(20.0 + 0.1 * k);
        v2.emplace_back(std::exp(-t2.back()), 0.0);
    }
    const auto bad = tail_fit(correlation_from_samples(t2, v2), 20.0, 40.0);
    CHECK_FALSE(bad.power_law);
}

TEST_CASE("R2 conditions") {
    const auto f = check_conditions(flat(1.0, 10.0, 1.0), {0.0, 400, false});
    CHECK(f.r2_constant == 0.1);
    CHECK(f.r2_satisfied);
    const auto p2 = check_conditions(power(1.0, 2.0, 1.0), {0.0, 400, false});
    CHECK(p2.r2_grid_minimum < 1e-3);
    CHECK_FALSE(p2.r2_satisfied);
    const auto p1 = check_conditions(power(1.0, 1.0, 1.0), {0.0, 400, false});
    CHECK(p1.r2_constant == doctest::Approx(std::exp(-1.0)));
    CHECK(p1.d1_edge_case);
}

TEST_CASE("collective coupling rank") {
    for (int n : {1, 2, 4, 8}) {
        CorrelationMatrixSpec s;
        s.n_qubits = n;
        s.coupling = Coupling::Collective;
        s.base = [](double) -> Eigen::Matrix3d { return Eigen::Matrix3d::Identity(); };
        CHECK(collective_rank(s, 0.5) == 3);
        s.coupling = Coupling::Private;
        CHECK(collective_rank(s, 0.5) == 3 * n);
    }
}

TEST_CASE("gate time bound") {
    const auto b = tb_gate_time_bound(0.01, 100.0, 0.1);
    CHECK(b.tau_max == doctest::Approx(0.1 * std::sqrt(200.0) / 100.0));
    CHECK(b.tau_max == doctest::Approx(0.014142).epsilon(1e-4));
    CHECK(b.spectral_lower * b.tau_max * b.tau_max == doctest::Approx(b.epsilon * b.epsilon));
    const auto h = tb_gate_time_bound(0.01, 200.0, 0.1);
    CHECK(h.tau_max == doctest::Approx(b.tau_max / 2));
    CHECK(tb_gate_time_bound(2.0, 1.0, 1 - 1e-9).tau_max == doctest::Approx(1.0));
    CHECK_THROWS_AS(tb_gate_time_bound(0.0, 1.0, 0.1), ParameterError);
}
