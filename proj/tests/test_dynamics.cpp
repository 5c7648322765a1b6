#include "doctest.h"

#include <cmath>
#include <cstdio>
#include <memory>

#include "qmem/davies.hpp"
#include "qmem/dynamics.hpp"
#include "qmem/errors.hpp"

using namespace qmem;
using namespace qmem::dynamics;

namespace {

davies::DaviesRateTable rates_for(const SpinSystem& sys, double beta) {
    bath::DensityParams p;
    p.amplitude = 1.0;
    p.cutoff = 10.0;
    p.beta = beta;
    const auto m = bath::build_spectral_density(bath::DensityKind::FlatKMS, p);
    std::vector<double> bohr;
    for (int k = 0; k <= sys.degree(); ++k) bohr.push_back(sys.class_delta_energy(k));
    return davies::build_rates(m, bohr, 1.0);
}

KmcConfig ring(int n, double beta, double t_max, double dt, StartMode start) {
    KmcConfig c;
    c.system = std::make_shared<SpinSystem>(SpinSystem::ising(lattice::IsingLattice(1, n)));
    c.rates = rates_for(*c.system, beta);
    c.beta = beta;
    c.t_max = t_max;
    c.sample_interval = dt;
    c.start = start;
    c.observables = {site_spin(0), constant_one(), majority_sign()};
    return c;
}

}  // namespace

TEST_CASE("seed derivation") {
    CHECK(derive_seed(0, 0) == 0xE220A8397B1DCDAFULL);
    CHECK(derive_seed(1, 0) != derive_seed(1, 1));
    CHECK(derive_seed(1, 5) == derive_seed(1, 5));
}

TEST_CASE("identical seeds give identical trajectories") {
    auto c = ring(8, 0.5, 50.0, 0.5, StartMode::Equilibrium);
    c.seed = 42;
    const auto a = run_trajectory(c);
    const auto b = run_trajectory(c);
    CHECK(a.times == b.times);
    CHECK(a.series == b.series);
    CHECK(a.final_config.values == b.final_config.values);
    CHECK(a.events == b.events);
    c.seed = 43;
    CHECK(run_trajectory(c).series != a.series);

    const auto e1 = run_ensemble(c, 6, 9, 1);
    const auto e3 = run_ensemble(c, 6, 9, 3);
    for (int i = 0; i < 6; ++i) {
        CHECK(e1[i].seed == derive_seed(9, i));
        CHECK(e1[i].series == e3[i].series);
    }
}

TEST_CASE("frozen dynamics at very low temperature") {
    auto c = ring(6, 50.0, 10.0, 1.0, StartMode::Ordered);
    c.seed = 1;
    const auto t = run_trajectory(c);
    CHECK(t.events == 0);
    for (auto v : t.series[0]) CHECK(v == 1);
}

TEST_CASE("infinite temperature event count is Poisson") {
    const int n = 8;
    const double T = 10.0;
    auto c = ring(n, 0.0, T, 1.0, StartMode::Ordered);
    const auto runs = run_ensemble(c, 100, 77);
    double mean = 0.0;
    for (const auto& r : runs) mean += static_cast<double>(r.events);
    mean /= 100.0;
    const double expect = n * 1.0 * T;
    CHECK(std::abs(mean - expect) < 3.0 * std::sqrt(expect / 100.0));
}

TEST_CASE("equilibrium starts") {
    StartMethod m;
    const auto sys1 = SpinSystem::ising(lattice::IsingLattice(1, 5));
    (void)equilibrium_sample(sys1, 1.0, 3, 10, &m);
    CHECK(m == StartMethod::ExactTransferMatrix);
    const auto sys2 = SpinSystem::ising(lattice::IsingLattice(2, 4));
    (void)equilibrium_sample(sys2, 0.3, 3, 10, &m);
    CHECK(m == StartMethod::BurnInAnnealed);
    const auto sysk = SpinSystem::kitaev(lattice::TorusLattice(3), lattice::Sector::Z);
    (void)equilibrium_sample(sysk, 1.0, 3, 10, &m);
    CHECK(m == StartMethod::ExactSector);
}

TEST_CASE("exact 1D start reproduces the Gibbs nearest-neighbor correlation") {
    // <s_0 s_1> = tanh(beta J) up to tanh^N corrections on a ring
    const int n = 10;
    const double beta = 0.4;
    const auto sys = SpinSystem::ising(lattice::IsingLattice(1, n));
    const int samples = 20000;
    double sum = 0.0;
    for (int k = 0; k < samples; ++k) {
        const auto c = equilibrium_sample(sys, beta, derive_seed(5, static_cast<std::uint64_t>(k)), 0);
        sum += c[0] * c[1];
    }
    const double th = std::tanh(beta);
    const double exact = (th + std::pow(th, n - 1)) / (1.0 + std::pow(th, n));
    CHECK(std::abs(sum / samples - exact) < 4.0 / std::sqrt(samples));
}

TEST_CASE("constant observable has unit correlation") {
    auto c = ring(6, 0.5, 20.0, 0.5, StartMode::Equilibrium);
    const auto runs = run_ensemble(c, 20, 3);
    const auto est = estimate_autocorrelation(runs, "one", CorrelationMode::EquilibriumEnsemble);
    for (double v : est.c) CHECK(v == 1.0);
    AutocorrelationOptions o;
    o.connected = true;
    CHECK_THROWS_AS(estimate_autocorrelation(runs, "one", CorrelationMode::EquilibriumEnsemble, o), DataError);
    CHECK_THROWS_AS(estimate_autocorrelation(runs, "nope", CorrelationMode::EquilibriumEnsemble), ParameterError);
    CHECK_THROWS_AS(estimate_autocorrelation(runs, "one", CorrelationMode::RelaxationFromOrdered),
                    PreconditionError);
    o.min_trajectories = 50;
    CHECK_THROWS_AS(estimate_autocorrelation(runs, "one", CorrelationMode::EquilibriumEnsemble, o), DataError);

    auto ordered = ring(6, 0.5, 20.0, 0.5, StartMode::Ordered);
    const auto oruns = run_ensemble(ordered, 20, 3);
    CHECK_THROWS_AS(estimate_autocorrelation(oruns, "spin_0", CorrelationMode::EquilibriumEnsemble),
                    PreconditionError);
}

TEST_CASE("infinite temperature correlations vanish") {
    auto c = ring(6, 0.0, 40.0, 0.5, StartMode::Equilibrium);
    const auto runs = run_ensemble(c, 40, 8);
    const auto est = estimate_autocorrelation(runs, "spin_0", CorrelationMode::EquilibriumEnsemble);
    // single spin at beta = 0 flips at unit rate: C(t) = e^{-2t}
    for (std::size_t k = 0; k < est.lags.size(); ++k) {
        if (est.lags[k] >= 5.0) CHECK(std::abs(est.c[k]) < 4.0 * est.stderr_[k] + 1e-3);
    }
}

TEST_CASE("KMC autocorrelation matches the exact generator") {
    const int n = 8;
    const double beta = 0.3;
    auto c = ring(n, beta, 400.0, 0.25, StartMode::Equilibrium);
    const auto runs = run_ensemble(c, 100, 2024);
    AutocorrelationOptions o;
    o.max_lag = 48;
    const auto est = estimate_autocorrelation(runs, "spin_0", CorrelationMode::EquilibriumEnsemble, o);

    const auto model = davies::ClassicalModel::ising(lattice::IsingLattice(1, n));
    const auto gen = davies::build_classical_generator(model, c.rates, beta);
    const davies::DenseEvolution ev(gen);
    Eigen::VectorXd s0(gen.dimension());
    for (Eigen::Index s = 0; s < s0.size(); ++s) s0[s] = (s & 1) ? -1.0 : 1.0;

    // same lags and weights as the estimate
    AutocorrelationEstimate exact;
    exact.lags = est.lags;
    exact.stderr_ = est.stderr_;
    for (std::size_t k = 0; k < est.lags.size(); ++k) {
        exact.c.push_back(ev.correlation(s0, s0, est.lags[k]));
        if (std::fmod(est.lags[k], 1.0) == 0.0 && est.lags[k] > 0.0) {
            CHECK(std::abs(est.c[k] - exact.c.back()) <= 3.0 * est.stderr_[k]);
        }
    }
    const FitWindow w{0.0, 6.0};
    const auto fit = fit_decay_rate(est, w);
    const auto ref = fit_decay_rate(exact, w);
    CHECK(fit.jackknife);
    CHECK(std::abs(fit.gamma - ref.gamma) <= 3.0 * fit.stderr_);
}

TEST_CASE("decay fit on synthetic curves") {
    AutocorrelationEstimate e;
    for (int k = 0; k <= 20; ++k) {
        e.lags.push_back(0.5 * k);
        e.c.push_back(std::exp(-0.5 * 0.5 * k));
    }
    const auto f = fit_decay_rate(e, {0.0, 10.0});
    CHECK(f.gamma == doctest::Approx(0.5).epsilon(1e-12));
    CHECK_FALSE(f.non_exponential);

    AutocorrelationEstimate p;
    for (int k = 1; k <= 40; ++k) {
        p.lags.push_back(0.5 * k);
        p.c.push_back(1.0 / (p.lags.back() * p.lags.back()));
    }
    CHECK(fit_decay_rate(p, {0.5, 20.0}).non_exponential);

    e.c[4] = -0.1;
    CHECK_THROWS_AS(fit_decay_rate(e, {0.0, 10.0}), DataError);
    CHECK_THROWS_AS(fit_decay_rate(e, {3.0, 3.5}), DataError);
}

TEST_CASE("binary trajectory records round trip") {
    auto c = ring(5, 0.7, 10.0, 0.5, StartMode::Equilibrium);
    const auto runs = run_ensemble(c, 2, 4);
    const std::string path = "traj_test.bin";
    std::remove(path.c_str());
    for (const auto& r : runs) append_trajectory_binary(path, r);
    const auto back = read_trajectory_binary(path);
    REQUIRE(back.size() == 2);
    for (int i = 0; i < 2; ++i) {
        CHECK(back[i].seed == runs[i].seed);
        CHECK(back[i].times == runs[i].times);
        CHECK(back[i].series == runs[i].series);
        CHECK(back[i].names.size() == runs[i].names.size());
    }
    std::remove(path.c_str());
    const auto csv = trajectory_csv(runs[0]);
    CHECK(csv.rfind("time,spin_0,one,majority\n", 0) == 0);
}
