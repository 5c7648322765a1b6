#include "qmem/dynamics.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>
#include <mutex>
#include <thread>

#include "json.hpp"
#include "qmem/errors.hpp"
#include "qmem/io.hpp"

namespace qmem::dynamics {

using lattice::SpinConfig;

namespace {

double uniform(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

std::size_t bounded(std::mt19937_64& rng, std::size_t n) {
    return static_cast<std::size_t>((static_cast<unsigned __int128>(rng()) * n) >> 64);
}

int term_value(const SpinConfig& cfg, const std::vector<int>& term) {
    int p = 1;
    for (int s : term) p *= cfg[static_cast<std::size_t>(s)];
    return p;
}

}  // namespace

SpinSystem SpinSystem::ising(const lattice::IsingLattice& lat, double coupling) {
    SpinSystem sys;
    sys.kind_ = lat.dimension() == 1 ? SystemKind::Ising1D : SystemKind::Ising2D;
    sys.degree_ = lat.degree();
    sys.linear_size_ = lat.linear_size();
    sys.coupling_ = coupling;
    sys.site_terms_.resize(static_cast<std::size_t>(lat.num_sites()));
    for (auto [i, j] : lat.bonds()) {
        const int t = static_cast<int>(sys.terms_.size());
        sys.terms_.push_back({i, j});
        sys.site_terms_[static_cast<std::size_t>(i)].push_back(t);
        sys.site_terms_[static_cast<std::size_t>(j)].push_back(t);
    }
    return sys;
}

SpinSystem SpinSystem::kitaev(const lattice::TorusLattice& lat, lattice::Sector sector, double coupling) {
    SpinSystem sys;
    sys.kind_ = SystemKind::Kitaev;
    sys.degree_ = 2;
    sys.linear_size_ = lat.size();
    sys.coupling_ = coupling;
    sys.torus_ = lat;
    sys.sector_ = sector;
    sys.site_terms_.resize(static_cast<std::size_t>(lat.num_edges()));
    for (const auto& chk : lat.checks(sector)) {
        const int t = static_cast<int>(sys.terms_.size());
        sys.terms_.emplace_back(chk.begin(), chk.end());
        for (int e : chk) sys.site_terms_[static_cast<std::size_t>(e)].push_back(t);
    }
    return sys;
}

double SpinSystem::energy(const SpinConfig& cfg) const {
    if (cfg.size() != site_terms_.size()) throw ParameterError("configuration size mismatch");
    double e = 0.0;
    for (const auto& t : terms_) e -= coupling_ * term_value(cfg, t);
    return e;
}

int SpinSystem::site_class(const SpinConfig& cfg, int site) const {
    int k = 0;
    for (int t : site_terms_[static_cast<std::size_t>(site)]) k += term_value(cfg, terms_[static_cast<std::size_t>(t)]) > 0;
    return k;
}

Observable site_spin(int site) {
    return {"spin_" + std::to_string(site), [site](const SpinConfig& c) {
                if (site < 0 || static_cast<std::size_t>(site) >= c.size()) throw ParameterError("site out of range");
                return static_cast<int>(c[static_cast<std::size_t>(site)]);
            }};
}

Observable constant_one() {
    return {"one", [](const SpinConfig&) { return 1; }};
}

Observable majority_sign() {
    return {"majority", [](const SpinConfig& c) {
                long sum = 0;
                for (auto v : c.values) sum += v;
                return sum >= 0 ? 1 : -1;
            }};
}

std::string to_string(StartMethod m) {
    switch (m) {
        case StartMethod::Ordered: return "ordered";
        case StartMethod::Given: return "given";
        case StartMethod::ExactTransferMatrix: return "exact_transfer_matrix";
        case StartMethod::ExactSector: return "exact_sector";
        case StartMethod::BurnInAnnealed: return "burn_in_annealed";
    }
    return "?";
}

std::string to_string(CorrelationMode m) {
    return m == CorrelationMode::EquilibriumEnsemble ? "equilibrium_ensemble" : "relaxation_from_ordered";
}

std::uint64_t splitmix64(std::uint64_t x) {
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) {
    return splitmix64(master + (index + 1) * 0x9E3779B97F4A7C15ULL);
}

namespace {

SpinConfig sample_ising_ring(const SpinSystem& sys, double beta, std::mt19937_64& rng) {
    const int n = sys.num_sites();
    const double k = beta * sys.coupling();
    const double th = std::tanh(k);
    SpinConfig cfg = SpinConfig::all_up(static_cast<std::size_t>(n));
    const int s0 = uniform(rng) < 0.5 ? 1 : -1;
    cfg.values[0] = static_cast<std::int8_t>(s0);
    int prev = s0;
    for (int i = 1; i < n; ++i) {
        // bond (i-1, i) times the transfer matrix over the N - i remaining bonds back to site 0
        const double tm = std::pow(th, n - i);
        const double wp = std::exp(k * (prev - 1)) * (1.0 + s0 * tm);
        const double wm = std::exp(k * (-prev - 1)) * (1.0 - s0 * tm);
        const int s = uniform(rng) * (wp + wm) < wp ? 1 : -1;
        cfg.values[static_cast<std::size_t>(i)] = static_cast<std::int8_t>(s);
        prev = s;
    }
    return cfg;
}

SpinConfig sample_kitaev(const SpinSystem& sys, double beta, std::mt19937_64& rng) {
    const auto& lat = *sys.torus();
    const int L = lat.size();
    const double p_flag = 1.0 / (1.0 + std::exp(2.0 * beta * sys.coupling()));
    std::vector<int> flagged;
    do {
        flagged.clear();
        for (int c = 0; c < lat.num_cells(); ++c) {
            if (uniform(rng) < p_flag) flagged.push_back(c);
        }
    } while (flagged.size() % 2 != 0);
    SpinConfig cfg = SpinConfig::all_up(static_cast<std::size_t>(lat.num_edges()));
    auto step_toward = [L](int from, int to) {
        const int d = ((to - from) % L + L) % L;
        if (d == 0) return 0;
        return d <= L / 2 ? 1 : -1;
    };
    for (std::size_t i = 0; i + 1 < flagged.size(); i += 2) {
        int r = flagged[i] / L, c = flagged[i] % L;
        const int r1 = flagged[i + 1] / L, c1 = flagged[i + 1] % L;
        while (c != c1) {
            const int dc = step_toward(c, c1);
            cfg.flip(static_cast<std::size_t>(lat.hop_edge(sys.sector(), r, c, 0, dc)));
            c = lat.wrap(c + dc);
        }
        while (r != r1) {
            const int dr = step_toward(r, r1);
            cfg.flip(static_cast<std::size_t>(lat.hop_edge(sys.sector(), r, c, dr, 0)));
            r = lat.wrap(r + dr);
        }
    }
    // uniform element of the syndrome-preserving group: other-sector checks and loops
    const auto other = sys.sector() == lattice::Sector::Z ? lattice::Sector::X : lattice::Sector::Z;
    for (const auto& chk : lat.checks(other)) {
        if (rng() >> 63) {
            for (int e : chk) cfg.flip(static_cast<std::size_t>(e));
        }
    }
    const auto kind = sys.sector() == lattice::Sector::Z ? lattice::LogicalKind::Xlike : lattice::LogicalKind::Zlike;
    for (auto label : {lattice::Homology::Horizontal, lattice::Homology::Vertical}) {
        if (rng() >> 63) {
            for (int e : lat.logical(kind, label).support) cfg.flip(static_cast<std::size_t>(e));
        }
    }
    return cfg;
}

SpinConfig burn_in(const SpinSystem& sys, double beta, int factor, std::mt19937_64& rng) {
    const int n = sys.num_sites();
    SpinConfig cfg = SpinConfig::all_up(static_cast<std::size_t>(n));
    for (auto& v : cfg.values) v = static_cast<std::int8_t>(uniform(rng) < 0.5 ? 1 : -1);
    const long sweeps = std::max<long>(2, static_cast<long>(factor) * sys.linear_size() * sys.linear_size());
    const long ramp = sweeps / 2;
    for (long sw = 0; sw < sweeps; ++sw) {
        const double b = sw < ramp ? beta * static_cast<double>(sw + 1) / static_cast<double>(ramp) : beta;
        for (int i = 0; i < n; ++i) {
            int field = 0;
            for (int t : sys.site_terms()[static_cast<std::size_t>(i)]) {
                field += term_value(cfg, sys.terms()[static_cast<std::size_t>(t)]) * cfg[static_cast<std::size_t>(i)];
            }
            const double p_up = 1.0 / (1.0 + std::exp(-2.0 * b * sys.coupling() * field));
            cfg.values[static_cast<std::size_t>(i)] = static_cast<std::int8_t>(uniform(rng) < p_up ? 1 : -1);
        }
    }
    if (rng() >> 63) {
        for (auto& v : cfg.values) v = static_cast<std::int8_t>(-v);
    }
    return cfg;
}

SpinConfig equilibrium_start(const SpinSystem& sys, double beta, int factor, std::mt19937_64& rng,
                             StartMethod& method) {
    if (!(beta >= 0.0) || !std::isfinite(beta)) throw ParameterError("equilibrium start needs finite beta >= 0");
    switch (sys.kind()) {
        case SystemKind::Ising1D:
            method = StartMethod::ExactTransferMatrix;
            return sample_ising_ring(sys, beta, rng);
        case SystemKind::Kitaev:
            method = StartMethod::ExactSector;
            return sample_kitaev(sys, beta, rng);
        case SystemKind::Ising2D:
            method = StartMethod::BurnInAnnealed;
            return burn_in(sys, beta, factor, rng);
    }
    throw InvariantError("unknown system kind");
}

void check_rate_table(const davies::DaviesRateTable& rates, double beta) {
    if (std::abs(rates.beta - beta) > 1e-12 * std::max(1.0, std::abs(beta)) && !(std::isinf(beta) && std::isinf(rates.beta))) {
        throw ParameterError("rate table beta does not match the configured beta");
    }
    for (const auto& [w, r] : rates.entries) {
        if (r < 0.0) throw ParameterError("negative rate in table");
        if (w <= 0.0) continue;
        const double back = rates.rate(-w);
        const double expect = std::exp(-beta * w) * r;
        if (std::abs(back - expect) > 1e-12 * std::max(r, 1e-300)) {
            throw ParameterError("rate table violates detailed balance at the configured beta");
        }
    }
}

}  // namespace

SpinConfig equilibrium_sample(const SpinSystem& sys, double beta, std::uint64_t seed, int burn_in_factor,
                              StartMethod* method) {
    std::mt19937_64 rng(seed);
    StartMethod m{};
    auto cfg = equilibrium_start(sys, beta, burn_in_factor, rng, m);
    if (method) *method = m;
    return cfg;
}

Trajectory run_trajectory(const KmcConfig& config) {
    if (!config.system) throw ParameterError("KmcConfig has no system");
    if (!(config.t_max > 0.0) || !std::isfinite(config.t_max)) throw ParameterError("t_max must be > 0");
    if (!(config.sample_interval > 0.0)) throw ParameterError("sample_interval must be > 0");
    check_rate_table(config.rates, config.beta);
    const SpinSystem& sys = *config.system;
    const int n = sys.num_sites();
    const int d = sys.degree();

    std::mt19937_64 rng(config.seed);
    Trajectory traj;
    traj.seed = config.seed;
    SpinConfig cfg;
    switch (config.start) {
        case StartMode::Ordered:
            cfg = SpinConfig::all_up(static_cast<std::size_t>(n));
            traj.start = StartMethod::Ordered;
            break;
        case StartMode::Given:
            if (config.initial.size() != static_cast<std::size_t>(n)) throw ParameterError("initial configuration size mismatch");
            cfg = config.initial;
            traj.start = StartMethod::Given;
            break;
        case StartMode::Equilibrium:
            cfg = equilibrium_start(sys, config.beta, config.burn_in_factor, rng, traj.start);
            break;
    }

    std::vector<double> class_rate(static_cast<std::size_t>(d + 1));
    for (int k = 0; k <= d; ++k) class_rate[static_cast<std::size_t>(k)] = config.rates.rate(-sys.class_delta_energy(k));

    std::vector<int> cls(static_cast<std::size_t>(n)), pos(static_cast<std::size_t>(n));
    std::vector<std::vector<int>> bucket(static_cast<std::size_t>(d + 1));
    for (int i = 0; i < n; ++i) {
        const int k = sys.site_class(cfg, i);
        cls[static_cast<std::size_t>(i)] = k;
        pos[static_cast<std::size_t>(i)] = static_cast<int>(bucket[static_cast<std::size_t>(k)].size());
        bucket[static_cast<std::size_t>(k)].push_back(i);
    }
    auto move = [&](int site, int k) {
        const int old = cls[static_cast<std::size_t>(site)];
        if (old == k) return;
        auto& ob = bucket[static_cast<std::size_t>(old)];
        const int p = pos[static_cast<std::size_t>(site)];
        ob[static_cast<std::size_t>(p)] = ob.back();
        pos[static_cast<std::size_t>(ob.back())] = p;
        ob.pop_back();
        auto& nb = bucket[static_cast<std::size_t>(k)];
        pos[static_cast<std::size_t>(site)] = static_cast<int>(nb.size());
        nb.push_back(site);
        cls[static_cast<std::size_t>(site)] = k;
    };

    const std::size_t n_obs = config.observables.size();
    traj.series.assign(n_obs, {});
    for (const auto& o : config.observables) traj.names.push_back(o.name);
    const long last_sample = static_cast<long>(std::floor(config.t_max / config.sample_interval + 1e-9));
    auto record = [&](long k) {
        traj.times.push_back(static_cast<double>(k) * config.sample_interval);
        for (std::size_t o = 0; o < n_obs; ++o) {
            const int v = config.observables[o].eval(cfg);
            traj.series[o].push_back(static_cast<std::int8_t>(v));
        }
    };

    double t = 0.0;
    long next = 0;
    while (true) {
        double total = 0.0;
        for (int k = 0; k <= d; ++k) total += class_rate[static_cast<std::size_t>(k)] * static_cast<double>(bucket[static_cast<std::size_t>(k)].size());
        double t_event = std::numeric_limits<double>::infinity();
        if (total > 0.0) t_event = t - std::log(1.0 - uniform(rng)) / total;
        while (next <= last_sample && static_cast<double>(next) * config.sample_interval < t_event) record(next++);
        if (next > last_sample) break;
        double u = uniform(rng) * total;
        int k = 0;
        for (; k < d; ++k) {
            const double w = class_rate[static_cast<std::size_t>(k)] * static_cast<double>(bucket[static_cast<std::size_t>(k)].size());
            if (u < w) break;
            u -= w;
        }
        while (bucket[static_cast<std::size_t>(k)].empty() || class_rate[static_cast<std::size_t>(k)] == 0.0) --k;
        const auto& b = bucket[static_cast<std::size_t>(k)];
        const int site = b[bounded(rng, b.size())];
        cfg.flip(static_cast<std::size_t>(site));
        for (int tm : sys.site_terms()[static_cast<std::size_t>(site)]) {
            for (int s : sys.terms()[static_cast<std::size_t>(tm)]) move(s, sys.site_class(cfg, s));
        }
        ++traj.events;
        t = t_event;
    }
    traj.final_config = std::move(cfg);
    return traj;
}

std::vector<Trajectory> run_ensemble(const KmcConfig& base, int n, std::uint64_t master, int threads) {
    if (n < 1) throw ParameterError("ensemble needs at least one trajectory");
    std::vector<Trajectory> out(static_cast<std::size_t>(n));
    std::atomic<int> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    auto worker = [&] {
        while (true) {
            const int i = next.fetch_add(1);
            if (i >= n) return;
            try {
                KmcConfig cfg = base;
                cfg.seed = derive_seed(master, static_cast<std::uint64_t>(i));
                out[static_cast<std::size_t>(i)] = run_trajectory(cfg);
            } catch (...) {
                std::lock_guard<std::mutex> lock(failure_mutex);
                if (!failure) failure = std::current_exception();
                next.store(n);
            }
        }
    };
    const int nt = std::max(1, std::min(threads, n));
    if (nt == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int i = 0; i < nt; ++i) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }
    if (failure) std::rethrow_exception(failure);
    return out;
}

AutocorrelationEstimate estimate_autocorrelation(const std::vector<Trajectory>& trajectories,
                                                 const std::string& observable, CorrelationMode mode,
                                                 const AutocorrelationOptions& opts) {
    const int n = static_cast<int>(trajectories.size());
    if (n < opts.min_trajectories) {
        throw DataError("autocorrelation needs at least " + std::to_string(opts.min_trajectories) +
                        " trajectories, got " + std::to_string(n));
    }
    if (opts.origin_stride < 1) throw ParameterError("origin_stride must be >= 1");
    std::size_t m = std::numeric_limits<std::size_t>::max();
    std::vector<const std::vector<std::int8_t>*> series;
    for (const auto& tr : trajectories) {
        auto it = std::find(tr.names.begin(), tr.names.end(), observable);
        if (it == tr.names.end()) throw ParameterError("observable '" + observable + "' not recorded");
        if (mode == CorrelationMode::EquilibriumEnsemble && tr.start == StartMethod::Ordered) {
            throw PreconditionError("equilibrium-ensemble estimate needs equilibrated starts");
        }
        if (mode == CorrelationMode::RelaxationFromOrdered && tr.start != StartMethod::Ordered) {
            throw PreconditionError("relaxation estimate needs ordered starts");
        }
        series.push_back(&tr.series[static_cast<std::size_t>(it - tr.names.begin())]);
        m = std::min(m, series.back()->size());
    }
    if (m < 2) throw DataError("trajectories have fewer than two samples");
    const double dt = trajectories[0].times[1] - trajectories[0].times[0];
    long max_lag = opts.max_lag;
    if (max_lag < 0) max_lag = mode == CorrelationMode::EquilibriumEnsemble ? static_cast<long>(m / 2) : static_cast<long>(m - 1);
    max_lag = std::min<long>(max_lag, static_cast<long>(m - 1));

    AutocorrelationEstimate est;
    est.observable = observable;
    est.mode = mode;
    est.connected = opts.connected;
    est.n_trajectories = n;
    double total = 0.0;
    for (const auto* s : series) {
        for (std::size_t i = 0; i < m; ++i) total += (*s)[i];
    }
    est.mean = total / (static_cast<double>(m) * n);
    const double shift = opts.connected ? est.mean * est.mean : 0.0;

    for (const auto* sp : series) {
        const auto& s = *sp;
        std::vector<double> curve(static_cast<std::size_t>(max_lag + 1));
        for (long k = 0; k <= max_lag; ++k) {
            double acc;
            if (mode == CorrelationMode::RelaxationFromOrdered) {
                acc = s[static_cast<std::size_t>(k)];
            } else {
                long cnt = 0;
                long sum = 0;
                for (long i = 0; i + k < static_cast<long>(m); i += opts.origin_stride) {
                    sum += s[static_cast<std::size_t>(i)] * s[static_cast<std::size_t>(i + k)];
                    ++cnt;
                }
                acc = static_cast<double>(sum) / static_cast<double>(cnt) - shift;
            }
            curve[static_cast<std::size_t>(k)] = acc;
        }
        est.per_trajectory.push_back(std::move(curve));
    }
    for (long k = 0; k <= max_lag; ++k) {
        double mean = 0.0;
        for (const auto& c : est.per_trajectory) mean += c[static_cast<std::size_t>(k)];
        mean /= n;
        double var = 0.0;
        for (const auto& c : est.per_trajectory) var += (c[static_cast<std::size_t>(k)] - mean) * (c[static_cast<std::size_t>(k)] - mean);
        var = n > 1 ? var / (n - 1) : 0.0;
        est.lags.push_back(static_cast<double>(k) * dt);
        est.c.push_back(mean);
        est.stderr_.push_back(std::sqrt(var / n));
    }
    if (!(est.c[0] > 0.0)) throw DataError("C(0) is not positive; observable has no fluctuations");
    return est;
}

namespace {

struct LineFit {
    double slope{0.0}, intercept{0.0}, slope_var{0.0}, rms{0.0};
};

LineFit weighted_line(const std::vector<double>& x, const std::vector<double>& y, const std::vector<double>& w) {
    double s = 0, sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        s += w[i];
        sx += w[i] * x[i];
        sy += w[i] * y[i];
        sxx += w[i] * x[i] * x[i];
        sxy += w[i] * x[i] * y[i];
    }
    const double det = s * sxx - sx * sx;
    if (!(det > 0.0)) throw DataError("degenerate fit window");
    LineFit f;
    f.slope = (s * sxy - sx * sy) / det;
    f.intercept = (sxx * sy - sx * sxy) / det;
    double ssr = 0.0, chi2 = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double r = y[i] - f.intercept - f.slope * x[i];
        ssr += r * r;
        chi2 += w[i] * r * r;
    }
    f.rms = std::sqrt(ssr / static_cast<double>(x.size()));
    const double dof = static_cast<double>(x.size()) - 2.0;
    f.slope_var = s / det * (dof > 0 ? std::max(1.0, chi2 / dof) : 1.0);
    return f;
}

}  // namespace

DecayFit fit_decay_rate(const AutocorrelationEstimate& est, const FitWindow& window) {
    if (!(window.t_max > window.t_min)) throw ParameterError("fit window needs t_max > t_min");
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < est.lags.size(); ++i) {
        if (est.lags[i] >= window.t_min - 1e-12 && est.lags[i] <= window.t_max + 1e-12) idx.push_back(i);
    }
    if (idx.size() < 3) throw DataError("fit window contains fewer than 3 points");
    for (auto i : idx) {
        if (!(est.c[i] > 0.0)) {
            std::ostringstream os;
            os << "window error: C(t) <= 0 at t = " << est.lags[i] << " inside [" << window.t_min << ", "
               << window.t_max << "]";
            throw DataError(os.str());
        }
    }
    double min_sigma = std::numeric_limits<double>::infinity();
    for (auto i : idx) {
        const double s = i < est.stderr_.size() ? est.stderr_[i] / est.c[i] : 0.0;
        if (s > 0.0) min_sigma = std::min(min_sigma, s);
    }
    const bool weighted = std::isfinite(min_sigma);
    std::vector<double> x, sig;
    for (auto i : idx) {
        x.push_back(est.lags[i]);
        sig.push_back(weighted ? std::max(est.stderr_[i] / est.c[i], min_sigma) : 1.0);
    }
    std::vector<double> w(sig.size());
    for (std::size_t i = 0; i < sig.size(); ++i) w[i] = 1.0 / (sig[i] * sig[i]);

    auto log_curve = [&](const std::vector<double>& c, std::vector<double>& y) {
        y.clear();
        for (auto i : idx) {
            if (!(c[i] > 0.0)) return false;
            y.push_back(std::log(c[i]));
        }
        return true;
    };
    std::vector<double> y;
    log_curve(est.c, y);
    const LineFit f = weighted_line(x, y, w);
    DecayFit out;
    out.gamma = -f.slope;
    out.intercept = f.intercept;
    out.residual_rms = f.rms;
    out.points = static_cast<int>(idx.size());
    out.stderr_ = std::sqrt(f.slope_var);

    const int n = static_cast<int>(est.per_trajectory.size());
    if (n >= 3) {
        std::vector<double> g;
        std::vector<double> loo(est.c.size());
        bool ok = true;
        for (int j = 0; j < n && ok; ++j) {
            for (std::size_t k = 0; k < est.c.size(); ++k) {
                loo[k] = (est.c[k] * n - est.per_trajectory[static_cast<std::size_t>(j)][k]) / (n - 1);
            }
            std::vector<double> yj;
            if (!log_curve(loo, yj)) {
                ok = false;
                break;
            }
            g.push_back(-weighted_line(x, yj, w).slope);
        }
        if (ok) {
            const double mean = std::accumulate(g.begin(), g.end(), 0.0) / n;
            double var = 0.0;
            for (double v : g) var += (v - mean) * (v - mean);
            out.stderr_ = std::sqrt(var * (n - 1) / n);
            out.jackknife = true;
        }
    }

    std::vector<double> sorted_sig = sig;
    std::nth_element(sorted_sig.begin(), sorted_sig.begin() + static_cast<long>(sorted_sig.size() / 2), sorted_sig.end());
    const double span = std::abs(y.front() - y.back());
    const double scale = std::max({weighted ? sorted_sig[sorted_sig.size() / 2] : 0.0, 1e-3 * span, 1e-12});
    out.non_exponential = idx.size() >= 4 && f.rms > 2.0 * scale;
    return out;
}

namespace {

template <typename T>
void put_le(std::string& buf, T v) {
    std::uint64_t bits = 0;
    std::memcpy(&bits, &v, sizeof(T));
    for (std::size_t i = 0; i < sizeof(T); ++i) buf.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

template <typename T>
T get_le(const std::string& buf, std::size_t& at) {
    if (at + sizeof(T) > buf.size()) throw DataError("truncated trajectory record");
    std::uint64_t bits = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf[at + i])) << (8 * i);
    at += sizeof(T);
    T v;
    std::memcpy(&v, &bits, sizeof(T));
    return v;
}

}  // namespace

void append_trajectory_binary(const std::string& path, const Trajectory& traj) {
    std::string buf = "QMTR";
    put_le<std::uint32_t>(buf, 1);
    put_le<std::uint32_t>(buf, static_cast<std::uint32_t>(traj.series.size()));
    put_le<std::uint64_t>(buf, traj.seed);
    put_le<std::uint64_t>(buf, traj.times.size());
    for (std::size_t r = 0; r < traj.times.size(); ++r) {
        put_le<double>(buf, traj.times[r]);
        for (const auto& s : traj.series) buf.push_back(static_cast<char>(s[r]));
    }
    std::ofstream out(path, std::ios::binary | std::ios::app);
    if (!out) throw Error("cannot open " + path + " for appending");
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!out) throw Error("write failed for " + path);
}

std::vector<Trajectory> read_trajectory_binary(const std::string& path) {
    const std::string buf = io::read_text(path);
    std::vector<Trajectory> out;
    std::size_t at = 0;
    while (at < buf.size()) {
        if (buf.compare(at, 4, "QMTR") != 0) throw DataError("bad trajectory block magic");
        at += 4;
        if (get_le<std::uint32_t>(buf, at) != 1) throw DataError("unsupported trajectory format version");
        const auto n_obs = get_le<std::uint32_t>(buf, at);
        Trajectory tr;
        tr.seed = get_le<std::uint64_t>(buf, at);
        const auto n_rec = get_le<std::uint64_t>(buf, at);
        tr.series.assign(n_obs, {});
        for (std::uint32_t o = 0; o < n_obs; ++o) tr.names.push_back("obs" + std::to_string(o));
        for (std::uint64_t r = 0; r < n_rec; ++r) {
            tr.times.push_back(get_le<double>(buf, at));
            for (std::uint32_t o = 0; o < n_obs; ++o) tr.series[o].push_back(get_le<std::int8_t>(buf, at));
        }
        out.push_back(std::move(tr));
    }
    return out;
}

std::string trajectory_csv(const Trajectory& traj) {
    std::ostringstream os;
    os << "time";
    for (const auto& n : traj.names) os << ',' << n;
    os << '\n';
    for (std::size_t r = 0; r < traj.times.size(); ++r) {
        os << io::format_double(traj.times[r]);
        for (const auto& s : traj.series) os << ',' << static_cast<int>(s[r]);
        os << '\n';
    }
    return os.str();
}

std::string autocorrelation_json(const AutocorrelationEstimate& est) {
    nlohmann::json j;
    j["observable"] = est.observable;
    j["mode"] = to_string(est.mode);
    j["proxy"] = est.mode == CorrelationMode::RelaxationFromOrdered;
    j["connected"] = est.connected;
    j["n_trajectories"] = est.n_trajectories;
    j["mean"] = est.mean;
    j["lags"] = est.lags;
    j["c"] = est.c;
    j["stderr"] = est.stderr_;
    return j.dump(2);
}

}  // namespace qmem::dynamics
