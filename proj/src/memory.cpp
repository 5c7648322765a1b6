#include "qmem/memory.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <sstream>

#include "json.hpp"
#include "qmem/errors.hpp"
#include "qmem/io.hpp"

namespace qmem::memory {

using lattice::SpinConfig;

EncodedQubit canonical_qubit(const lattice::TorusLattice& lat) {
    return {lat.logical(lattice::LogicalKind::Zlike, lattice::Homology::Horizontal),
            lat.logical(lattice::LogicalKind::Xlike, lattice::Homology::Vertical)};
}

M1Verdict m1_check(const EncodedQubit& q) {
    M1Verdict v;
    v.intersection = lattice::intersection_size(q.z.support, q.x.support);
    const bool mixed = q.z.kind != q.x.kind;
    v.anticommute = mixed && (v.intersection % 2 == 1);
    if (!mixed) {
        v.message = "both operators are " + lattice::to_string(q.z.kind) + "; same-type Paulis commute";
    } else if (q.z.kind != lattice::LogicalKind::Zlike) {
        v.message = "Z slot holds an Xlike operator";
    } else if (!v.anticommute) {
        v.message = "even intersection (" + std::to_string(v.intersection) + "): commuting pair, not a qubit";
    } else {
        v.message = "odd intersection (" + std::to_string(v.intersection) + "): anticommuting qubit pair";
    }
    v.valid_pair = v.anticommute && q.z.kind == lattice::LogicalKind::Zlike;
    return v;
}

std::string to_string(Decoder d) { return d == Decoder::MajorityVote ? "majority" : "matching"; }

Decoder decoder_from_string(const std::string& s) {
    if (s == "majority") return Decoder::MajorityVote;
    if (s == "matching") return Decoder::MinWeightMatching;
    throw ParameterError("unknown decoder '" + s + "' (expected majority or matching)");
}

int torus_distance(const lattice::TorusLattice& lat, int a, int b) {
    const int L = lat.size();
    const int dr = std::abs(a / L - b / L), dc = std::abs(a % L - b % L);
    return std::min(dr, L - dr) + std::min(dc, L - dc);
}

std::vector<int> correction_path(const lattice::TorusLattice& lat, lattice::Sector sector, int a, int b) {
    const int L = lat.size();
    auto step = [L](int from, int to) {
        const int d = ((to - from) % L + L) % L;
        if (d == 0) return 0;
        return d <= L / 2 ? 1 : -1;
    };
    int r = a / L, c = a % L;
    const int r1 = b / L, c1 = b % L;
    std::vector<int> path;
    while (c != c1) {
        const int dc = step(c, c1);
        path.push_back(lat.hop_edge(sector, r, c, 0, dc));
        c = lat.wrap(c + dc);
    }
    while (r != r1) {
        const int dr = step(r, r1);
        path.push_back(lat.hop_edge(sector, r, c, dr, 0));
        r = lat.wrap(r + dr);
    }
    return path;
}

MatchingResult decode_matching(const lattice::SyndromeConfig& syndrome, const lattice::TorusLattice& lat,
                               lattice::Sector sector, const lattice::LogicalOperator& logical) {
    if (syndrome.flags.size() != static_cast<std::size_t>(lat.num_cells())) {
        throw ParameterError("syndrome size does not match the lattice");
    }
    const auto anyons = syndrome.flagged();
    const int n = static_cast<int>(anyons.size());
    if (n % 2 != 0) throw InvariantError("odd syndrome: anyons are created in pairs");
    MatchingResult res;
    std::vector<std::vector<int>> dist(static_cast<std::size_t>(n), std::vector<int>(static_cast<std::size_t>(n)));
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) dist[i][j] = torus_distance(lat, anyons[i], anyons[j]);
    }
    std::vector<std::pair<int, int>> pairs;  // indices into anyons
    if (n <= kExactMatchingLimit) {
        const std::size_t full = (std::size_t{1} << n) - 1;
        std::vector<int> best(full + 1, std::numeric_limits<int>::max());
        std::vector<int> choice(full + 1, -1);
        best[0] = 0;
        // masks of matched anyons; always extend by pairing the lowest unmatched one
        for (std::size_t mask = 0; mask < full; ++mask) {
            if (best[mask] == std::numeric_limits<int>::max()) continue;
            int i = 0;
            while (mask >> i & 1) ++i;
            for (int j = i + 1; j < n; ++j) {
                if (mask >> j & 1) continue;
                const std::size_t next = mask | (std::size_t{1} << i) | (std::size_t{1} << j);
                const int cost = best[mask] + dist[i][j];
                if (cost < best[next]) {
                    best[next] = cost;
                    choice[next] = i * 64 + j;
                }
            }
        }
        std::size_t mask = full;
        while (mask) {
            const int i = choice[mask] / 64, j = choice[mask] % 64;
            pairs.emplace_back(i, j);
            mask &= ~((std::size_t{1} << i) | (std::size_t{1} << j));
        }
        std::reverse(pairs.begin(), pairs.end());
    } else {
        res.exact = false;
        std::vector<bool> used(static_cast<std::size_t>(n), false);
        for (int round = 0; round < n / 2; ++round) {
            int bi = -1, bj = -1, bd = std::numeric_limits<int>::max();
            for (int i = 0; i < n; ++i) {
                if (used[i]) continue;
                for (int j = i + 1; j < n; ++j) {
                    if (!used[j] && dist[i][j] < bd) {
                        bd = dist[i][j];
                        bi = i;
                        bj = j;
                    }
                }
            }
            used[bi] = used[bj] = true;
            pairs.emplace_back(bi, bj);
        }
    }
    std::set<int> chain;
    for (auto [i, j] : pairs) {
        res.pairs.emplace_back(anyons[i], anyons[j]);
        res.weight += dist[i][j];
        for (int e : correction_path(lat, sector, anyons[i], anyons[j])) {
            if (!chain.erase(e)) chain.insert(e);
        }
    }
    res.chain.assign(chain.begin(), chain.end());
    res.correction = lattice::intersection_size(res.chain, logical.support) % 2 ? -1 : 1;
    return res;
}

MatchingResult decode_matching(const lattice::SyndromeConfig& syndrome, const lattice::TorusLattice& lat,
                               lattice::Sector sector) {
    return decode_matching(syndrome, lat, sector, lat.sector_logical(sector, lattice::Homology::Horizontal));
}

int decode_majority(const SpinConfig& config, int bare_site) {
    if (bare_site < 0 || static_cast<std::size_t>(bare_site) >= config.size()) {
        throw ParameterError("bare site outside the configuration");
    }
    long sum = 0;
    for (auto v : config.values) sum += v;
    const int majority = sum >= 0 ? 1 : -1;
    return majority * config[static_cast<std::size_t>(bare_site)];
}

DressedObservable DressedObservable::kitaev(const lattice::TorusLattice& lat, lattice::Sector sector,
                                            lattice::Homology label) {
    DressedObservable o;
    o.decoder = Decoder::MinWeightMatching;
    o.sector = sector;
    o.torus = lat;
    o.logical = lat.sector_logical(sector, label);
    return o;
}

DressedObservable DressedObservable::ising(int site) {
    DressedObservable o;
    o.decoder = Decoder::MajorityVote;
    o.site = site;
    return o;
}

int measure_bare(const SpinConfig& config, const DressedObservable& obs) {
    if (obs.decoder == Decoder::MajorityVote) {
        if (obs.site < 0 || static_cast<std::size_t>(obs.site) >= config.size()) {
            throw ParameterError("bare site outside the configuration");
        }
        return config[static_cast<std::size_t>(obs.site)];
    }
    if (!obs.torus) throw ParameterError("matching observable has no lattice");
    if (config.size() != static_cast<std::size_t>(obs.torus->num_edges())) {
        throw ParameterError("configuration does not match the lattice");
    }
    return lattice::bare_logical_value(config, obs.logical);
}

DressedMeasurement measure_dressed_detail(const SpinConfig& config, const DressedObservable& obs) {
    DressedMeasurement m;
    // steps 1-2: single-site values and the bare value
    m.bare = measure_bare(config, obs);
    // step 3: correction from the same data
    if (obs.decoder == Decoder::MajorityVote) {
        m.correction = decode_majority(config, obs.site);
    } else {
        const auto syn = lattice::syndrome(*obs.torus, config, obs.sector);
        auto res = decode_matching(syn, *obs.torus, obs.sector, obs.logical);
        m.correction = res.correction;
        m.chain = std::move(res.chain);
        m.exact = res.exact;
    }
    // step 4
    m.dressed = m.bare * m.correction;
    return m;
}

int measure_dressed(const SpinConfig& config, const DressedObservable& obs) {
    return measure_dressed_detail(config, obs).dressed;
}

dynamics::Observable bare_observable(const DressedObservable& obs, const std::string& name) {
    return {name, [obs](const SpinConfig& c) { return measure_bare(c, obs); }};
}

dynamics::Observable dressed_observable(const DressedObservable& obs, const std::string& name) {
    return {name, [obs](const SpinConfig& c) { return measure_dressed(c, obs); }};
}

std::string to_string(StudyModel m) { return m == StudyModel::Ising2D ? "ising2d" : "kitaev"; }
std::string to_string(ObservableKind k) { return k == ObservableKind::Bare ? "bare" : "dressed"; }

namespace {

// -<R, L* R> for one configuration: (1/2) sum_j rate_j (R(flip_j s) - R(s))^2
double local_dirichlet(const dynamics::SpinSystem& sys, const std::vector<double>& class_rate,
                       const dynamics::Observable& obs, SpinConfig cfg) {
    const int r0 = obs.eval(cfg);
    double acc = 0.0;
    for (int j = 0; j < sys.num_sites(); ++j) {
        const double rate = class_rate[static_cast<std::size_t>(sys.site_class(cfg, j))];
        if (rate == 0.0) continue;
        cfg.flip(static_cast<std::size_t>(j));
        const int d = obs.eval(cfg) - r0;
        cfg.flip(static_cast<std::size_t>(j));
        acc += 0.5 * rate * d * d;
    }
    return acc;
}

dynamics::FitWindow choose_window(const dynamics::AutocorrelationEstimate& est) {
    const double threshold = est.c[0] * std::exp(-1.0);
    std::size_t hi = est.c.size() - 1;
    for (std::size_t k = 1; k < est.c.size(); ++k) {
        if (!(est.c[k] > 0.0)) {
            hi = k - 1;
            break;
        }
        if (est.c[k] < threshold) {
            hi = k;
            break;
        }
    }
    hi = std::max<std::size_t>(hi, std::min<std::size_t>(2, est.c.size() - 1));
    return {0.0, est.lags[hi]};
}

}  // namespace

LifetimeReport lifetime_study(const LifetimePlan& plan) {
    if (plan.sizes.empty() || plan.betas.empty() || plan.observables.empty()) {
        throw ParameterError("lifetime plan needs sizes, betas and observables");
    }
    for (std::size_t i = 1; i < plan.sizes.size(); ++i) {
        if (plan.sizes[i] <= plan.sizes[i - 1]) throw ParameterError("sizes must be strictly increasing");
    }
    if (plan.samples < 8) throw ParameterError("samples must be >= 8");
    const bool kitaev = plan.model == StudyModel::KitaevSector;
    if (kitaev && plan.decoder != Decoder::MinWeightMatching) {
        throw ParameterError("Kitaev study needs the matching decoder");
    }
    if (!kitaev && plan.decoder != Decoder::MajorityVote) throw ParameterError("Ising study needs the majority decoder");
    const bool equilibrium = plan.mode == dynamics::CorrelationMode::EquilibriumEnsemble;

    LifetimeReport report;
    std::uint64_t cell = 0;
    for (double beta : plan.betas) {
        auto bp = plan.bath_params;
        bp.beta = beta;
        const auto model = bath::build_spectral_density(plan.bath_kind, bp);
        for (int size : plan.sizes) {
            ++cell;
            std::shared_ptr<const dynamics::SpinSystem> sys;
            DressedObservable dobs;
            if (kitaev) {
                const lattice::TorusLattice lat(size);
                sys = std::make_shared<dynamics::SpinSystem>(dynamics::SpinSystem::kitaev(lat, plan.sector, plan.coupling));
                dobs = DressedObservable::kitaev(lat, plan.sector);
            } else {
                const lattice::IsingLattice lat(2, size);
                sys = std::make_shared<dynamics::SpinSystem>(dynamics::SpinSystem::ising(lat, plan.coupling));
                dobs = DressedObservable::ising(0);
            }
            std::vector<double> bohr;
            for (int k = 0; k <= sys->degree(); ++k) bohr.push_back(sys->class_delta_energy(k));
            dynamics::KmcConfig base;
            base.system = sys;
            base.rates = davies::build_rates(model, bohr, plan.lambda2);
            base.beta = beta;
            base.start = equilibrium ? dynamics::StartMode::Equilibrium : dynamics::StartMode::Ordered;
            base.burn_in_factor = plan.burn_in_factor;
            for (auto kind : plan.observables) {
                base.observables.push_back(kind == ObservableKind::Bare ? bare_observable(dobs, "bare")
                                                                        : dressed_observable(dobs, "dressed"));
            }
            const std::string pilot_name = base.observables.back().name;
            dynamics::AutocorrelationOptions ao;
            ao.connected = plan.connected && equilibrium;

            double t_max = plan.t_max;
            if (t_max <= 0.0) {
                t_max = 50.0 / std::max(base.rates.max_rate(), 1e-300);
                for (int attempt = 0;; ++attempt) {
                    auto pilot = base;
                    pilot.t_max = t_max;
                    pilot.sample_interval = t_max / plan.samples;
                    const auto trs = dynamics::run_ensemble(pilot, plan.pilot_trajectories,
                                                            dynamics::derive_seed(plan.seed, cell * 4096 + attempt),
                                                            plan.threads);
                    auto po = ao;
                    po.min_trajectories = std::min(ao.min_trajectories, plan.pilot_trajectories);
                    const auto est = dynamics::estimate_autocorrelation(trs, pilot_name, plan.mode, po);
                    const bool decayed = est.c.back() <= plan.pilot_target * est.c[0];
                    if (decayed) {
                        // rescale so the lag range covers about three decay times
                        const double rough = dynamics::fit_decay_rate(est, choose_window(est)).gamma;
                        if (rough > 0.0) {
                            const double want = (equilibrium ? 6.0 : 3.0) / rough;
                            t_max = std::clamp(want, t_max / 8.0, std::min(plan.t_cap, 4.0 * t_max));
                        }
                        break;
                    }
                    if (t_max >= plan.t_cap) break;
                    t_max = std::min(plan.t_cap, t_max * 4.0);
                }
            }
            auto prod = base;
            prod.t_max = t_max;
            prod.sample_interval = t_max / plan.samples;
            const auto trs = dynamics::run_ensemble(prod, plan.trajectories,
                                                    dynamics::derive_seed(plan.seed, cell * 4096 + 4095), plan.threads);

            std::vector<double> class_rate;
            for (int k = 0; k <= sys->degree(); ++k) class_rate.push_back(base.rates.rate(-sys->class_delta_energy(k)));

            for (std::size_t o = 0; o < plan.observables.size(); ++o) {
                const auto& obs = base.observables[o];
                const auto est = dynamics::estimate_autocorrelation(trs, obs.name, plan.mode, ao);
                const auto window = choose_window(est);
                const auto fit = dynamics::fit_decay_rate(est, window);
                LifetimeRow row;
                row.model = to_string(plan.model);
                row.size = size;
                row.beta = beta;
                row.observable = obs.name;
                row.decoder = to_string(plan.decoder);
                row.gamma = fit.gamma;
                row.stderr_ = fit.stderr_;
                row.mode = dynamics::to_string(plan.mode);
                double dir = 0.0;
                for (const auto& tr : trs) dir += local_dirichlet(*sys, class_rate, obs, tr.final_config);
                row.gamma_initial = dir / static_cast<double>(trs.size());
                row.t_max = t_max;
                row.fit_t_max = window.t_max;
                row.trajectories = static_cast<int>(trs.size());
                row.non_exponential = fit.non_exponential;
                row.start = dynamics::to_string(trs.front().start);
                report.rows.push_back(row);
                report.curves.push_back({row.model, size, beta, obs.name, est});
            }
        }
    }
    return report;
}

std::string lifetime_csv(const LifetimeReport& report) {
    std::ostringstream os;
    os << "model,N_or_L,beta,observable,decoder,gamma,stderr,mode,gamma_initial,t_max,fit_t_max,trajectories,"
          "non_exponential,start\n";
    for (const auto& r : report.rows) {
        os << r.model << ',' << r.size << ',' << io::format_double(r.beta) << ',' << r.observable << ',' << r.decoder
           << ',' << io::format_double(r.gamma) << ',' << io::format_double(r.stderr_) << ',' << r.mode << ','
           << io::format_double(r.gamma_initial) << ',' << io::format_double(r.t_max) << ','
           << io::format_double(r.fit_t_max) << ',' << r.trajectories << ',' << (r.non_exponential ? 1 : 0) << ','
           << r.start << '\n';
    }
    return os.str();
}

std::string lifetime_json(const LifetimeReport& report) {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& r : report.rows) {
        rows.push_back({{"model", r.model},
                        {"N_or_L", r.size},
                        {"beta", r.beta},
                        {"observable", r.observable},
                        {"decoder", r.decoder},
                        {"gamma", r.gamma},
                        {"stderr", r.stderr_},
                        {"mode", r.mode},
                        {"gamma_initial", r.gamma_initial},
                        {"t_max", r.t_max},
                        {"fit_t_max", r.fit_t_max},
                        {"trajectories", r.trajectories},
                        {"non_exponential", r.non_exponential},
                        {"start", r.start}});
    }
    nlohmann::json j;
    j["rows"] = rows;
    return j.dump(2);
}

std::string lifetime_curves_dat(const LifetimeReport& report) {
    std::ostringstream os;
    bool first = true;
    for (const auto& c : report.curves) {
        if (!first) os << "\n\n";
        first = false;
        os << "# " << c.model << " L=" << c.size << " beta=" << c.beta << " " << c.observable << "\n# t C stderr\n";
        for (std::size_t k = 0; k < c.estimate.lags.size(); ++k) {
            os << io::format_double(c.estimate.lags[k]) << ' ' << io::format_double(c.estimate.c[k]) << ' '
               << io::format_double(c.estimate.stderr_[k]) << '\n';
        }
    }
    return os.str();
}

std::string lifetime_gamma_dat(const LifetimeReport& report) {
    std::vector<std::pair<double, std::string>> keys;
    for (const auto& r : report.rows) {
        std::pair<double, std::string> k{r.beta, r.observable};
        if (std::find(keys.begin(), keys.end(), k) == keys.end()) keys.push_back(k);
    }
    std::ostringstream os;
    bool first = true;
    for (const auto& [beta, name] : keys) {
        if (!first) os << "\n\n";
        first = false;
        os << "# beta=" << beta << " " << name << "\n# size gamma stderr gamma_initial\n";
        for (const auto& r : report.rows) {
            if (r.beta != beta || r.observable != name) continue;
            os << r.size << ' ' << io::format_double(r.gamma) << ' ' << io::format_double(r.stderr_) << ' '
               << io::format_double(r.gamma_initial) << '\n';
        }
    }
    return os.str();
}

}  // namespace qmem::memory
