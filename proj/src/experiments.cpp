#include "qmem/experiments.hpp"

#include <chrono>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <iostream>
#include <random>
#include <set>
#include <sstream>

#include <Eigen/Core>
#include <yaml-cpp/yaml.h>

#include "json.hpp"
#include "qmem/errormap.hpp"
#include "qmem/errors.hpp"
#include "qmem/io.hpp"
#include "qmem/lattice.hpp"
#include "qmem/memory.hpp"

namespace qmem::experiments {

namespace fs = std::filesystem;
using nlohmann::json;

std::string to_string(ExperimentKind k) {
    switch (k) {
        case ExperimentKind::BathAudit: return "bath-audit";
        case ExperimentKind::KitaevGap: return "kitaev-gap";
        case ExperimentKind::IsingLifetime: return "ising-lifetime";
        case ExperimentKind::KitaevLifetime: return "kitaev-lifetime";
        case ExperimentKind::DaviesProperties: return "davies-properties";
        case ExperimentKind::ErrormapAudit: return "errormap-audit";
    }
    return "?";
}

ExperimentKind experiment_from_string(const std::string& s) {
    for (auto k : {ExperimentKind::BathAudit, ExperimentKind::KitaevGap, ExperimentKind::IsingLifetime,
                   ExperimentKind::KitaevLifetime, ExperimentKind::DaviesProperties, ExperimentKind::ErrormapAudit}) {
        if (to_string(k) == s) return k;
    }
    throw ParameterError("experiment: unknown kind '" + s + "'");
}

namespace {

// Reads a YAML map, remembering which keys were consumed.
class Section {
public:
    Section(const YAML::Node& node, std::string prefix) : node_(node), prefix_(std::move(prefix)) {
        if (node_ && !node_.IsMap()) throw ParameterError(where("") + ": expected a mapping");
    }

    template <class T>
    void get(const std::string& key, T& out) {
        seen_.insert(key);
        if (!node_ || !node_[key]) return;
        try {
            out = node_[key].as<T>();
        } catch (const YAML::Exception&) {
            throw ParameterError(where(key) + ": cannot parse value");
        }
    }

    YAML::Node child(const std::string& key) {
        seen_.insert(key);
        return node_ ? node_[key] : YAML::Node();
    }

    void finish() const {
        if (!node_) return;
        for (const auto& kv : node_) {
            const auto k = kv.first.as<std::string>();
            if (!seen_.count(k)) throw ParameterError("unknown config key '" + where(k) + "'");
        }
    }

    std::string where(const std::string& key) const {
        if (prefix_.empty()) return key;
        return key.empty() ? prefix_ : prefix_ + "." + key;
    }

private:
    YAML::Node node_;
    std::string prefix_;
    std::set<std::string> seen_;
};

void fail(const std::string& key, const std::string& what) { throw ParameterError(key + " " + what); }

}  // namespace

ExperimentConfig parse_config(const std::string& text) {
    YAML::Node root;
    try {
        root = YAML::Load(text);
    } catch (const YAML::Exception& e) {
        throw ParameterError(std::string("config is not valid YAML: ") + e.what());
    }
    if (!root || root.IsNull()) throw ParameterError("experiment: config is empty");
    ExperimentConfig c;
    Section top(root, "");
    std::string kind;
    top.get("experiment", kind);
    if (kind.empty()) throw ParameterError("experiment: missing");
    c.experiment = experiment_from_string(kind);
    top.get("seed", c.seed);
    top.get("output_dir", c.output_dir);
    top.get("threads", c.threads);
    {
        Section f(top.child("formats"), "formats");
        f.get("json", c.json);
        f.get("csv", c.csv);
        f.get("dat", c.dat);
        f.finish();
    }
    {
        Section b(top.child("bath"), "bath");
        auto& s = c.bath;
        b.get("kind", s.kind);
        b.get("amplitude", s.amplitude);
        b.get("cutoff", s.cutoff);
        b.get("beta", s.beta);
        b.get("exponent", s.exponent);
        b.get("table", s.table);
        b.get("kms_tolerance", s.kms_tolerance);
        b.get("r2_threshold", s.r2_threshold);
        b.get("gate_epsilon", s.gate_epsilon);
        b.get("collective_qubits", s.collective_qubits);
        b.finish();
    }
    {
        Section d(top.child("davies"), "davies");
        auto& s = c.davies;
        d.get("lambda2", s.lambda2);
        d.get("coupling", s.coupling);
        d.get("betas", s.betas);
        d.get("ising_sizes", s.ising_sizes);
        d.get("kitaev_sizes", s.kitaev_sizes);
        d.get("sector", s.sector);
        d.get("state_cap", s.state_cap);
        d.get("eigenpairs", s.eigenpairs);
        d.get("tolerance", s.tolerance);
        d.get("convexity_observables", s.convexity_observables);
        d.get("commuting_observables", s.commuting_observables);
        d.get("relaxation_starts", s.relaxation_starts);
        d.get("export_generators", s.export_generators);
        d.finish();
    }
    {
        Section l(top.child("lifetime"), "lifetime");
        auto& s = c.lifetime;
        l.get("sizes", s.sizes);
        l.get("betas", s.betas);
        l.get("observables", s.observables);
        l.get("decoder", s.decoder);
        l.get("mode", s.mode);
        l.get("connected", s.connected);
        l.get("trajectories", s.trajectories);
        l.get("pilot_trajectories", s.pilot_trajectories);
        l.get("samples", s.samples);
        l.get("t_max", s.t_max);
        l.get("t_cap", s.t_cap);
        l.get("pilot_target", s.pilot_target);
        l.get("burn_in_factor", s.burn_in_factor);
        l.finish();
    }
    {
        Section e(top.child("errormap"), "errormap");
        auto& s = c.errormap;
        e.get("n_qubits", s.n_qubits);
        e.get("coupling", s.coupling);
        e.get("field", s.field);
        e.get("site", s.site);
        e.get("pauli", s.pauli);
        e.get("t_max", s.t_max);
        e.get("dt", s.dt);
        e.get("tau_map", s.tau_map);
        e.get("correlation", s.correlation);
        e.get("decay_rate", s.decay_rate);
        e.get("r2_threshold", s.r2_threshold);
        e.finish();
    }
    top.finish();
    return c;
}

ExperimentConfig load_config(const std::string& path) {
    std::string text;
    try {
        text = io::read_text(path);
    } catch (const Error& e) {
        throw ParameterError(std::string("config: ") + e.what());
    }
    return parse_config(text);
}

namespace {

std::string num(double x) { return io::format_double(x); }

template <class T>
std::string list(const std::vector<T>& v) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) os << ", ";
        if constexpr (std::is_same_v<T, double>) {
            os << num(v[i]);
        } else if constexpr (std::is_same_v<T, std::string>) {
            os << v[i];
        } else {
            os << v[i];
        }
    }
    os << ']';
    return os.str();
}

std::string quoted(const std::string& s) {
    std::string out = "\"";
    for (char ch : s) {
        if (ch == '"' || ch == '\\') out += '\\';
        out += ch;
    }
    return out + "\"";
}

const char* flag(bool b) { return b ? "true" : "false"; }

}  // namespace

std::string dump_config(const ExperimentConfig& c) {
    std::ostringstream os;
    os << "# qmem experiment config (hbar = k_B = 1)\n";
    os << "experiment: " << to_string(c.experiment) << "\n";
    os << "seed: " << c.seed << "\n";
    os << "output_dir: " << quoted(c.output_dir) << "\n";
    os << "threads: " << c.threads << "\n";
    os << "formats:\n  json: " << flag(c.json) << "\n  csv: " << flag(c.csv) << "\n  dat: " << flag(c.dat) << "\n";
    const auto& b = c.bath;
    os << "bath:\n";
    os << "  kind: " << b.kind << "  # FlatKMS | PowerAnsatz | Tabulated\n";
    os << "  amplitude: " << num(b.amplitude) << "  # R or C, rate units\n";
    os << "  cutoff: " << num(b.cutoff) << "  # Omega, angular frequency\n";
    os << "  beta: " << num(b.beta) << "  # inverse temperature, time units\n";
    os << "  exponent: " << num(b.exponent) << "  # d, PowerAnsatz\n";
    os << "  table: " << quoted(b.table) << "  # CSV omega,R for Tabulated\n";
    os << "  kms_tolerance: " << num(b.kms_tolerance) << "  # dimensionless\n";
    os << "  r2_threshold: " << num(b.r2_threshold) << "  # eta threshold, dimensionless\n";
    os << "  gate_epsilon: " << num(b.gate_epsilon) << "  # gate error, dimensionless\n";
    os << "  collective_qubits: " << list(b.collective_qubits) << "\n";
    const auto& d = c.davies;
    os << "davies:\n";
    os << "  lambda2: " << num(d.lambda2) << "  # coupling squared, dimensionless\n";
    os << "  coupling: " << num(d.coupling) << "  # J, energy units\n";
    os << "  betas: " << list(d.betas) << "  # time units\n";
    os << "  ising_sizes: " << list(d.ising_sizes) << "\n";
    os << "  kitaev_sizes: " << list(d.kitaev_sizes) << "\n";
    os << "  sector: " << d.sector << "  # Z (plaquettes) | X (stars)\n";
    os << "  state_cap: " << d.state_cap << "\n";
    os << "  eigenpairs: " << d.eigenpairs << "\n";
    os << "  tolerance: " << num(d.tolerance) << "  # relative eigen-residual\n";
    os << "  convexity_observables: " << d.convexity_observables << "\n";
    os << "  commuting_observables: " << d.commuting_observables << "\n";
    os << "  relaxation_starts: " << d.relaxation_starts << "\n";
    os << "  export_generators: " << flag(d.export_generators) << "\n";
    const auto& l = c.lifetime;
    os << "lifetime:\n";
    os << "  sizes: " << list(l.sizes) << "\n";
    os << "  betas: " << list(l.betas) << "  # time units\n";
    os << "  observables: " << list(l.observables) << "  # bare | dressed\n";
    os << "  decoder: " << l.decoder << "  # auto | majority | matching\n";
    os << "  mode: " << l.mode << "  # equilibrium | relaxation\n";
    os << "  connected: " << flag(l.connected) << "\n";
    os << "  trajectories: " << l.trajectories << "\n";
    os << "  pilot_trajectories: " << l.pilot_trajectories << "\n";
    os << "  samples: " << l.samples << "\n";
    os << "  t_max: " << num(l.t_max) << "  # time units, 0 = adaptive\n";
    os << "  t_cap: " << num(l.t_cap) << "  # time units\n";
    os << "  pilot_target: " << num(l.pilot_target) << "  # dimensionless\n";
    os << "  burn_in_factor: " << l.burn_in_factor << "  # sweeps per site\n";
    const auto& e = c.errormap;
    os << "errormap:\n";
    os << "  n_qubits: " << e.n_qubits << "\n";
    os << "  coupling: " << num(e.coupling) << "  # J, energy units\n";
    os << "  field: " << num(e.field) << "  # g, energy units\n";
    os << "  site: " << e.site << "  # 0-based\n";
    os << "  pauli: " << e.pauli << "\n";
    os << "  t_max: " << num(e.t_max) << "  # time units\n";
    os << "  dt: " << num(e.dt) << "  # time units\n";
    os << "  tau_map: " << num(e.tau_map) << "  # bath time per chain time\n";
    os << "  correlation: " << e.correlation << "  # spectral | exponential\n";
    os << "  decay_rate: " << num(e.decay_rate) << "  # inverse time units\n";
    os << "  r2_threshold: " << num(e.r2_threshold) << "  # dimensionless\n";
    return os.str();
}

std::string config_hash(const ExperimentConfig& cfg) { return io::hex64(io::fnv1a(dump_config(cfg))); }

void validate(const ExperimentConfig& c) {
    if (c.threads < 1) fail("threads", "must be >= 1");
    if (c.output_dir.empty()) fail("output_dir", "must not be empty");
    const auto& b = c.bath;
    try {
        (void)bath::density_kind_from_string(b.kind);
    } catch (const Error&) {
        fail("bath.kind", "must be FlatKMS, PowerAnsatz or Tabulated");
    }
    if (!std::isfinite(b.beta) || b.beta < 0.0) fail("bath.beta", "must be finite and >= 0");
    if (!(b.amplitude > 0.0) || !std::isfinite(b.amplitude)) fail("bath.amplitude", "must be > 0");
    if (!(b.cutoff > 0.0) || !std::isfinite(b.cutoff)) fail("bath.cutoff", "must be > 0");
    if (b.kind == "PowerAnsatz" && !(b.exponent >= 1.0)) fail("bath.exponent", "must be >= 1");
    if (b.kind == "Tabulated" && b.table.empty()) fail("bath.table", "is required for Tabulated");
    if (!(b.kms_tolerance > 0.0)) fail("bath.kms_tolerance", "must be > 0");
    if (!(b.gate_epsilon > 0.0 && b.gate_epsilon < 1.0)) fail("bath.gate_epsilon", "must lie in (0, 1)");
    for (int n : b.collective_qubits) {
        if (n < 1 || n > 64) fail("bath.collective_qubits", "entries must lie in [1, 64]");
    }
    const auto& d = c.davies;
    if (!(d.lambda2 > 0.0)) fail("davies.lambda2", "must be > 0");
    if (!(d.coupling > 0.0)) fail("davies.coupling", "must be > 0");
    for (double beta : d.betas) {
        if (!std::isfinite(beta) || beta < 0.0) fail("davies.betas", "beta values must be finite and >= 0");
    }
    for (int n : d.ising_sizes) {
        if (n < 2) fail("davies.ising_sizes", "entries must be >= 2");
    }
    for (int n : d.kitaev_sizes) {
        if (n < 2) fail("davies.kitaev_sizes", "entries must be >= 2");
    }
    if (d.sector != "Z" && d.sector != "X") fail("davies.sector", "must be Z or X");
    if (d.eigenpairs < 2) fail("davies.eigenpairs", "must be >= 2");
    if (!(d.tolerance > 0.0)) fail("davies.tolerance", "must be > 0");
    if (d.convexity_observables < 0) fail("davies.convexity_observables", "must be >= 0");
    if (d.commuting_observables < 0) fail("davies.commuting_observables", "must be >= 0");
    if (d.relaxation_starts < 1) fail("davies.relaxation_starts", "must be >= 1");
    const auto& l = c.lifetime;
    if (l.sizes.empty()) fail("lifetime.sizes", "must not be empty");
    for (std::size_t i = 0; i < l.sizes.size(); ++i) {
        if (l.sizes[i] < 2) fail("lifetime.sizes", "entries must be >= 2");
        if (i && l.sizes[i] <= l.sizes[i - 1]) fail("lifetime.sizes", "must be strictly increasing");
    }
    if (l.betas.empty()) fail("lifetime.betas", "must not be empty");
    for (double beta : l.betas) {
        if (!std::isfinite(beta) || beta < 0.0) fail("lifetime.betas", "beta values must be finite and >= 0");
    }
    if (l.observables.empty()) fail("lifetime.observables", "must not be empty");
    for (const auto& o : l.observables) {
        if (o != "bare" && o != "dressed") fail("lifetime.observables", "entries must be bare or dressed");
    }
    if (l.decoder != "auto" && l.decoder != "majority" && l.decoder != "matching") {
        fail("lifetime.decoder", "must be auto, majority or matching");
    }
    if (l.mode != "equilibrium" && l.mode != "relaxation") fail("lifetime.mode", "must be equilibrium or relaxation");
    if (l.trajectories < 2) fail("lifetime.trajectories", "must be >= 2");
    if (l.pilot_trajectories < 2) fail("lifetime.pilot_trajectories", "must be >= 2");
    if (l.samples < 8) fail("lifetime.samples", "must be >= 8");
    if (!(l.t_max >= 0.0)) fail("lifetime.t_max", "must be >= 0");
    if (!(l.t_cap > 0.0)) fail("lifetime.t_cap", "must be > 0");
    if (!(l.pilot_target > 0.0 && l.pilot_target < 1.0)) fail("lifetime.pilot_target", "must lie in (0, 1)");
    if (l.burn_in_factor < 0) fail("lifetime.burn_in_factor", "must be >= 0");
    const auto& e = c.errormap;
    if (e.n_qubits < 2 || e.n_qubits > errormap::kMaxChainQubits) {
        fail("errormap.n_qubits", "must lie in [2, " + std::to_string(errormap::kMaxChainQubits) + "]");
    }
    if (e.site < 0 || e.site >= e.n_qubits) fail("errormap.site", "must lie in [0, n_qubits)");
    if (e.pauli != "X" && e.pauli != "Y" && e.pauli != "Z") fail("errormap.pauli", "must be X, Y or Z");
    if (!(e.t_max > 0.0)) fail("errormap.t_max", "must be > 0");
    if (!(e.dt > 0.0) || e.dt > e.t_max) fail("errormap.dt", "must lie in (0, t_max]");
    if (!(e.tau_map > 0.0)) fail("errormap.tau_map", "must be > 0");
    if (e.correlation != "spectral" && e.correlation != "exponential") {
        fail("errormap.correlation", "must be spectral or exponential");
    }
    if (!(e.decay_rate > 0.0)) fail("errormap.decay_rate", "must be > 0");
    if (!(e.r2_threshold > 0.0 && e.r2_threshold <= 1.0)) fail("errormap.r2_threshold", "must lie in (0, 1]");
}

bath::SpectralDensity build_bath(const BathSection& b, double beta) {
    const auto kind = bath::density_kind_from_string(b.kind);
    if (kind == bath::DensityKind::Tabulated) return bath::read_tabulated_csv(b.table, beta, b.kms_tolerance);
    bath::DensityParams p;
    p.amplitude = b.amplitude;
    p.cutoff = b.cutoff;
    p.beta = beta;
    p.exponent = b.exponent;
    p.kms_tolerance = b.kms_tolerance;
    return bath::build_spectral_density(kind, p);
}

namespace {

lattice::Sector sector_of(const std::string& s) { return s == "X" ? lattice::Sector::X : lattice::Sector::Z; }

struct Built {
    davies::ClassicalModel model;
    davies::DaviesRateTable rates;
    davies::GeneratorMatrix gen;
};

Built build_system(const ExperimentConfig& c, const davies::ClassicalModel& model, double beta) {
    const auto density = build_bath(c.bath, beta);
    auto rates = davies::build_rates(density, model.bohr_frequencies(), c.davies.lambda2);
    auto gen = davies::build_classical_generator(model, rates, beta, c.davies.state_cap);
    return {model, std::move(rates), std::move(gen)};
}

// Random observable with zero Gibbs mean and unit Gibbs norm.
Eigen::VectorXd random_observable(std::mt19937_64& rng, const std::vector<double>& pi) {
    std::normal_distribution<double> normal;
    const auto n = static_cast<Eigen::Index>(pi.size());
    Eigen::VectorXd r(n);
    for (Eigen::Index i = 0; i < n; ++i) r[i] = normal(rng);
    double mean = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) mean += pi[static_cast<std::size_t>(i)] * r[i];
    r.array() -= mean;
    double norm2 = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) norm2 += pi[static_cast<std::size_t>(i)] * r[i] * r[i];
    return r / std::sqrt(norm2);
}

SystemProperties check_system(const ExperimentConfig& c, const std::string& name, const davies::ClassicalModel& model,
                              double beta, std::mt19937_64& rng) {
    const Built b = build_system(c, model, beta);
    SystemProperties p;
    p.system = name;
    p.beta = beta;
    p.dimension = b.gen.dimension();
    const auto bal = davies::check_db_stationarity(b.gen);
    p.stationarity = bal.stationarity_residual;
    p.detailed_balance = bal.detailed_balance_residual;
    p.d1 = p.stationarity < 1e-10;
    p.d3 = p.detailed_balance < 1e-10;

    const davies::DenseEvolution ev(b.gen);
    const auto& lam = ev.eigenvalues();
    const double scale = std::max(1.0, lam.cwiseAbs().maxCoeff());
    p.min_eigenvalue = lam[0];
    p.second_eigenvalue = lam.size() > 1 ? lam[1] : 0.0;
    p.gap = p.second_eigenvalue;
    p.d4 = p.min_eigenvalue >= -1e-10 * scale;

    // relaxation: point masses and random distributions
    const Eigen::Index n = b.gen.dimension();
    Eigen::VectorXd pi(n);
    for (Eigen::Index i = 0; i < n; ++i) pi[i] = b.gen.gibbs[static_cast<std::size_t>(i)];
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::uniform_int_distribution<Eigen::Index> pick(0, n - 1);
    double tv = 0.0;
    if (p.gap > 1e-9 * scale) {
        const double t = 50.0 / p.gap;
        for (int s = 0; s < c.davies.relaxation_starts; ++s) {
            Eigen::VectorXd p0 = Eigen::VectorXd::Zero(n);
            if (s % 2 == 0) {
                p0[s == 0 ? 0 : pick(rng)] = 1.0;
            } else {
                for (Eigen::Index i = 0; i < n; ++i) p0[i] = unif(rng);
                p0 /= p0.sum();
            }
            const Eigen::VectorXd pt = ev.propagate(p0, t);
            tv = std::max(tv, 0.5 * (pt - pi).cwiseAbs().sum());
        }
        p.relaxation_tv = tv;
        p.d2 = tv <= 1e-3;
    } else {
        p.relaxation_tv = 1.0;
        p.d2 = false;
    }

    std::vector<double> grid;
    const double t_end = p.gap > 0.0 ? 5.0 / p.gap : 10.0;
    for (int k = 0; k <= 20; ++k) grid.push_back(t_end * k / 20.0);
    p.convexity_min_slack = std::numeric_limits<double>::infinity();
    for (int k = 0; k < c.davies.convexity_observables; ++k) {
        const auto rep = davies::convexity_bound_check(ev, b.gen.gibbs, random_observable(rng, b.gen.gibbs), grid);
        p.convexity_min_slack = std::min(p.convexity_min_slack, rep.min_slack);
        ++p.convexity_trials;
    }
    if (p.convexity_trials == 0) p.convexity_min_slack = 0.0;
    p.convexity = p.convexity_min_slack >= -1e-10;

    p.gap_inequality_min_slack = std::numeric_limits<double>::infinity();
    std::normal_distribution<double> normal;
    for (int k = 0; k < c.davies.commuting_observables; ++k) {
        Eigen::VectorXd a(n);
        for (Eigen::Index i = 0; i < n; ++i) a[i] = normal(rng);
        const auto rep = davies::gap_inequality_check(model, b.rates, a);
        const double rel = rep.slack / std::max(1.0, rep.rhs);
        p.gap_inequality_min_slack = std::min(p.gap_inequality_min_slack, rel);
        ++p.gap_inequality_trials;
    }
    if (p.gap_inequality_trials == 0) p.gap_inequality_min_slack = 0.0;
    p.gap_inequality = p.gap_inequality_min_slack >= -1e-10;
    return p;
}

}  // namespace

PropertiesReport davies_properties_suite(const ExperimentConfig& c) {
    PropertiesReport rep;
    std::mt19937_64 rng(c.seed);
    const double j = c.davies.coupling;
    for (double beta : c.davies.betas) {
        for (int n : c.davies.ising_sizes) {
            const auto model = davies::ClassicalModel::ising(lattice::IsingLattice(1, n), j);
            rep.systems.push_back(check_system(c, "ising1d_N" + std::to_string(n), model, beta, rng));
        }
        for (int l : c.davies.kitaev_sizes) {
            const auto model =
                davies::ClassicalModel::kitaev_sector(lattice::TorusLattice(l), sector_of(c.davies.sector), j);
            rep.systems.push_back(check_system(c, "kitaev_L" + std::to_string(l), model, beta, rng));
        }
    }
    rep.all_pass = true;
    for (const auto& s : rep.systems) {
        rep.all_pass = rep.all_pass && s.d1 && s.d2 && s.d3 && s.d4 && s.convexity && s.gap_inequality;
    }
    return rep;
}

std::vector<GapRow> kitaev_gap_study(const ExperimentConfig& c, const std::string& export_dir) {
    std::vector<GapRow> rows;
    for (double beta : c.davies.betas) {
        for (int l : c.davies.kitaev_sizes) {
            const auto model = davies::ClassicalModel::kitaev_sector(lattice::TorusLattice(l),
                                                                     sector_of(c.davies.sector), c.davies.coupling);
            const Built b = build_system(c, model, beta);
            davies::SpectralOptions opts;
            opts.tolerance = c.davies.tolerance;
            const auto sp = davies::spectral_gap(b.gen, c.davies.eigenpairs, opts);
            GapRow r;
            r.size = l;
            r.beta = beta;
            r.dimension = b.gen.dimension();
            r.gap = sp.gap;
            r.method = sp.method == davies::EigenMethod::Dense ? "dense" : "lobpcg";
            r.iterations = sp.iterations;
            for (double x : sp.residuals) r.residual = std::max(r.residual, x);
            rows.push_back(r);
            if (!export_dir.empty()) {
                const std::string stem = export_dir + "/kitaev_L" + std::to_string(l) + "_beta" + num(beta);
                davies::export_generator(b.gen, stem + ".csv", stem + ".json");
            }
        }
    }
    return rows;
}

namespace {

class Outputs {
public:
    Outputs(fs::path dir, const ExperimentConfig& c) : dir_(std::move(dir)), cfg_(c) {}

    void write(const std::string& name, const std::string& content) {
        io::write_text_atomic((dir_ / name).string(), content);
        names_.push_back(name);
    }
    void json_file(const std::string& name, const json& j) {
        if (cfg_.json) write(name, j.dump(2) + "\n");
    }
    void csv_file(const std::string& name, const std::string& s) {
        if (cfg_.csv) write(name, s);
    }
    void dat_file(const std::string& name, const std::string& s) {
        if (cfg_.dat) write(name, s);
    }
    void note(const std::string& name) { names_.push_back(name); }
    const std::vector<std::string>& names() const { return names_; }
    const fs::path& dir() const { return dir_; }

private:
    fs::path dir_;
    const ExperimentConfig& cfg_;
    std::vector<std::string> names_;
};

void run_bath_audit(const ExperimentConfig& c, Outputs& out) {
    const auto model = build_bath(c.bath, c.bath.beta);
    bath::BathConditionsOptions opts;
    opts.r2_threshold = c.bath.r2_threshold;
    const auto rep = bath::check_conditions(model, opts);

    json j;
    j["kind"] = c.bath.kind;
    j["beta"] = c.bath.beta;
    j["cutoff"] = model.cutoff();
    j["kms_max_violation"] = rep.kms_max_violation;
    j["r2_constant"] = rep.r2_constant;
    j["r2_grid_minimum"] = rep.r2_grid_minimum;
    j["r2_satisfied"] = rep.r2_satisfied;
    j["r2_verdict"] = rep.r2_satisfied ? "R2 satisfied" : "R2 violated";
    j["d1_edge_case"] = rep.d1_edge_case;
    j["tail_exponent"] = rep.tail_exponent;
    j["tail_amplitude"] = rep.tail_amplitude;
    j["tail_residual"] = rep.tail_residual;
    j["tail_power_law"] = rep.tail_power_law;
    j["tail_window"] = {rep.tail_t_min, rep.tail_t_max};
    if (rep.r2_constant > 0.0) {
        const auto tb = bath::tb_gate_time_bound(rep.r2_constant, model.cutoff(), c.bath.gate_epsilon);
        j["gate_time_bound"] = {{"tau_max", tb.tau_max},
                                {"eta", tb.eta},
                                {"epsilon", tb.epsilon},
                                {"spectral_lower", tb.spectral_lower},
                                {"norm_upper", tb.norm_upper}};
    } else {
        j["gate_time_bound"] = nullptr;
    }
    json ranks = json::array();
    for (int n : c.bath.collective_qubits) {
        bath::CorrelationMatrixSpec spec;
        spec.n_qubits = n;
        spec.coupling = bath::Coupling::Collective;
        spec.base = [&model](double w) -> Eigen::Matrix3d { return model(w) * Eigen::Matrix3d::Identity(); };
        ranks.push_back({{"n_qubits", n}, {"rank", bath::collective_rank(spec, 1.0)}, {"dimension", 3 * n}});
    }
    j["collective_ranks"] = ranks;
    out.json_file("bath_report.json", j);

    std::ostringstream floor;
    floor << "omega,R_over_omega\n";
    for (std::size_t i = 0; i < rep.floor_omega.size(); ++i) {
        floor << num(rep.floor_omega[i]) << ',' << num(rep.floor_value[i]) << '\n';
    }
    out.csv_file("gate_error_floor.csv", floor.str());

    const auto grid = bath::tail_grid(model.cutoff(), rep.tail_t_min, rep.tail_t_max, 8);
    const auto corr = bath::correlation_function(model, grid);
    std::ostringstream csv, dat;
    csv << "t,re,im,abs,abs_averaged,error_bound\n";
    dat << "# t |F| |F_avg|\n";
    for (std::size_t i = 0; i < corr.t.size(); ++i) {
        const double t = corr.t[i];
        const bool inner = t >= rep.tail_t_min && t <= rep.tail_t_max;
        const double avg = inner ? std::abs(bath::cutoff_averaged(corr, t)) : std::nan("");
        csv << num(t) << ',' << num(corr.values[i].real()) << ',' << num(corr.values[i].imag()) << ','
            << num(std::abs(corr.values[i])) << ',' << (inner ? num(avg) : std::string()) << ','
            << num(corr.error_bound[i]) << '\n';
        if (inner) dat << num(t) << ' ' << num(std::abs(corr.values[i])) << ' ' << num(avg) << '\n';
    }
    out.csv_file("correlation.csv", csv.str());
    out.dat_file("correlation.dat", dat.str());
}

void run_kitaev_gap(const ExperimentConfig& c, Outputs& out) {
    std::string export_dir;
    if (c.davies.export_generators) {
        fs::create_directories(out.dir() / "generators");
        export_dir = (out.dir() / "generators").string();
    }
    const auto rows = kitaev_gap_study(c, export_dir);
    std::ostringstream csv, dat;
    csv << "L,beta,dimension,gap,method,iterations,residual\n";
    dat << "# L gap (one block per beta)\n";
    json arr = json::array();
    double prev_beta = std::nan("");
    for (const auto& r : rows) {
        csv << r.size << ',' << num(r.beta) << ',' << r.dimension << ',' << num(r.gap) << ',' << r.method << ','
            << r.iterations << ',' << num(r.residual) << '\n';
        if (!std::isnan(prev_beta) && r.beta != prev_beta) dat << "\n\n";
        dat << r.size << ' ' << num(r.gap) << '\n';
        prev_beta = r.beta;
        arr.push_back({{"L", r.size},
                       {"beta", r.beta},
                       {"dimension", r.dimension},
                       {"gap", r.gap},
                       {"method", r.method},
                       {"iterations", r.iterations},
                       {"residual", r.residual}});
        if (export_dir.size()) {
            const std::string stem = "generators/kitaev_L" + std::to_string(r.size) + "_beta" + num(r.beta);
            out.note(stem + ".csv");
            out.note(stem + ".json");
        }
    }
    json j;
    j["gaps"] = arr;
    // spread of the gap over sizes at each beta
    json spread = json::array();
    for (double beta : c.davies.betas) {
        double lo = INFINITY, hi = 0.0;
        for (const auto& r : rows) {
            if (r.beta != beta) continue;
            lo = std::min(lo, r.gap);
            hi = std::max(hi, r.gap);
        }
        spread.push_back({{"beta", beta}, {"min_gap", lo}, {"max_gap", hi}, {"ratio", hi / lo}});
    }
    j["spread"] = spread;
    out.json_file("kitaev_gap.json", j);
    out.csv_file("kitaev_gap.csv", csv.str());
    out.dat_file("kitaev_gap.dat", dat.str());
}

void run_lifetime(const ExperimentConfig& c, Outputs& out, memory::StudyModel model) {
    const auto& l = c.lifetime;
    memory::LifetimePlan plan;
    plan.model = model;
    plan.sizes = l.sizes;
    plan.betas = l.betas;
    plan.observables.clear();
    for (const auto& o : l.observables) {
        plan.observables.push_back(o == "bare" ? memory::ObservableKind::Bare : memory::ObservableKind::Dressed);
    }
    if (l.decoder == "auto") {
        plan.decoder = model == memory::StudyModel::KitaevSector ? memory::Decoder::MinWeightMatching
                                                                  : memory::Decoder::MajorityVote;
    } else {
        plan.decoder = memory::decoder_from_string(l.decoder);
    }
    plan.sector = sector_of(c.davies.sector);
    plan.coupling = c.davies.coupling;
    plan.lambda2 = c.davies.lambda2;
    plan.bath_kind = bath::density_kind_from_string(c.bath.kind);
    plan.bath_params.amplitude = c.bath.amplitude;
    plan.bath_params.cutoff = c.bath.cutoff;
    plan.bath_params.exponent = c.bath.exponent;
    plan.bath_params.kms_tolerance = c.bath.kms_tolerance;
    if (plan.bath_kind == bath::DensityKind::Tabulated) {
        throw ParameterError("bath.kind: Tabulated densities are not supported by lifetime studies");
    }
    plan.mode = l.mode == "equilibrium" ? dynamics::CorrelationMode::EquilibriumEnsemble
                                        : dynamics::CorrelationMode::RelaxationFromOrdered;
    plan.connected = l.connected;
    plan.trajectories = l.trajectories;
    plan.pilot_trajectories = l.pilot_trajectories;
    plan.samples = l.samples;
    plan.t_max = l.t_max;
    plan.t_cap = l.t_cap;
    plan.pilot_target = l.pilot_target;
    plan.seed = c.seed;
    plan.threads = c.threads;
    plan.burn_in_factor = l.burn_in_factor;
    const auto rep = memory::lifetime_study(plan);
    if (c.json) out.write("lifetime.json", memory::lifetime_json(rep) + "\n");
    out.csv_file("lifetime.csv", memory::lifetime_csv(rep));
    out.dat_file("curves.dat", memory::lifetime_curves_dat(rep));
    out.dat_file("gamma.dat", memory::lifetime_gamma_dat(rep));
}

void run_davies_properties(const ExperimentConfig& c, Outputs& out) {
    const auto rep = davies_properties_suite(c);
    std::ostringstream csv;
    csv << "system,beta,dimension,stationarity,detailed_balance,gap,min_eigenvalue,relaxation_tv,"
           "convexity_min_slack,gap_inequality_min_slack,D1,D2,D3,D4,convexity,gap_inequality\n";
    json arr = json::array();
    for (const auto& s : rep.systems) {
        csv << s.system << ',' << num(s.beta) << ',' << s.dimension << ',' << num(s.stationarity) << ','
            << num(s.detailed_balance) << ',' << num(s.gap) << ',' << num(s.min_eigenvalue) << ','
            << num(s.relaxation_tv) << ',' << num(s.convexity_min_slack) << ',' << num(s.gap_inequality_min_slack)
            << ',' << s.d1 << ',' << s.d2 << ',' << s.d3 << ',' << s.d4 << ',' << s.convexity << ','
            << s.gap_inequality << '\n';
        arr.push_back({{"system", s.system},
                       {"beta", s.beta},
                       {"dimension", s.dimension},
                       {"stationarity_residual", s.stationarity},
                       {"detailed_balance_residual", s.detailed_balance},
                       {"gap", s.gap},
                       {"min_eigenvalue", s.min_eigenvalue},
                       {"relaxation_tv", s.relaxation_tv},
                       {"convexity_min_slack", s.convexity_min_slack},
                       {"convexity_trials", s.convexity_trials},
                       {"gap_inequality_min_slack", s.gap_inequality_min_slack},
                       {"gap_inequality_trials", s.gap_inequality_trials},
                       {"D1", s.d1},
                       {"D2", s.d2},
                       {"D3", s.d3},
                       {"D4", s.d4},
                       {"convexity", s.convexity},
                       {"gap_inequality", s.gap_inequality}});
    }
    out.json_file("davies_properties.json", json{{"systems", arr}, {"all_pass", rep.all_pass}});
    out.csv_file("davies_properties.csv", csv.str());
}

void run_errormap(const ExperimentConfig& c, Outputs& out) {
    const auto& e = c.errormap;
    errormap::ChainModel chain;
    chain.n_qubits = e.n_qubits;
    chain.coupling = e.coupling;
    chain.field = e.field;
    std::vector<double> grid;
    const auto steps = static_cast<long>(std::floor(e.t_max / e.dt + 1e-9));
    for (long k = 0; k <= steps; ++k) grid.push_back(static_cast<double>(k) * e.dt);
    const auto spectra = errormap::evolve_support(chain, e.site, grid, errormap::pauli_from_string(e.pauli));
    std::vector<double> bath_t;
    for (double t : grid) bath_t.push_back(e.tau_map * t);
    bath::CorrelationFunction corr;
    if (e.correlation == "exponential") {
        std::vector<std::complex<double>> v;
        for (double t : bath_t) v.emplace_back(std::exp(-e.decay_rate * t), 0.0);
        corr = bath::correlation_from_samples(bath_t, v);
    } else {
        corr = bath::correlation_function(build_bath(c.bath, c.bath.beta), bath_t);
    }
    const auto est = errormap::born_error_weights(spectra, corr, e.tau_map);
    const auto verdict = errormap::a2_fit(est, e.r2_threshold);
    if (c.json) out.write("errormap_verdict.json", errormap::verdict_json(verdict, est) + "\n");
    out.csv_file("support_spectra.csv", errormap::spectra_csv(spectra));
    out.csv_file("error_weights.csv", errormap::estimate_csv(est));
    std::ostringstream dat;
    dat << "# n m_n fit\n";
    for (std::size_t i = 0; i < est.sizes.size(); ++i) {
        dat << est.sizes[i] << ' ' << num(est.magnitudes[i]) << ' '
            << num(verdict.amplitude * std::pow(verdict.eta, est.sizes[i])) << '\n';
    }
    out.dat_file("error_weights.dat", dat.str());
}

std::string utc_now() {
    const std::time_t t = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

}  // namespace

RunResult run(const ExperimentConfig& cfg) {
    RunResult res;
    const auto start = std::chrono::steady_clock::now();
    const std::string started = utc_now();
    try {
        validate(cfg);
        const fs::path dir(cfg.output_dir);
        std::error_code ec;
        fs::create_directories(dir, ec);
        if (ec || !fs::is_directory(dir)) throw ParameterError("output_dir: cannot create '" + cfg.output_dir + "'");
        Outputs out(dir, cfg);
        out.write("config.yaml", dump_config(cfg));
        switch (cfg.experiment) {
            case ExperimentKind::BathAudit: run_bath_audit(cfg, out); break;
            case ExperimentKind::KitaevGap: run_kitaev_gap(cfg, out); break;
            case ExperimentKind::IsingLifetime: run_lifetime(cfg, out, memory::StudyModel::Ising2D); break;
            case ExperimentKind::KitaevLifetime: run_lifetime(cfg, out, memory::StudyModel::KitaevSector); break;
            case ExperimentKind::DaviesProperties: run_davies_properties(cfg, out); break;
            case ExperimentKind::ErrormapAudit: run_errormap(cfg, out); break;
        }
        const double wall =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        json files = json::array();
        for (const auto& name : out.names()) {
            files.push_back({{"name", name}, {"fnv1a", io::hex64(io::fnv1a(io::read_text((dir / name).string())))}});
        }
        json m;
        m["experiment"] = to_string(cfg.experiment);
        m["config_hash"] = config_hash(cfg);
        m["seed"] = cfg.seed;
        m["threads"] = cfg.threads;
        m["versions"] = {{"qmem", kVersion},
                         {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) +
                                       "." + std::to_string(EIGEN_MINOR_VERSION)},
                         {"compiler", __VERSION__},
                         {"cplusplus", __cplusplus}};
        m["started_utc"] = started;
        m["wall_time_s"] = wall;
        m["outputs"] = files;
        m["config"] = dump_config(cfg);
        io::write_text_atomic((dir / "manifest.json").string(), m.dump(2) + "\n");
        res.outputs = out.names();
        res.outputs.push_back("manifest.json");
        res.exit_code = 0;
        res.message = to_string(cfg.experiment) + ": wrote " + std::to_string(res.outputs.size()) + " files to " +
                      cfg.output_dir;
    } catch (const ParameterError& e) {
        res.exit_code = 2;
        res.message = e.what();
    } catch (const PreconditionError& e) {
        res.exit_code = 2;
        res.message = e.what();
    } catch (const CapacityError& e) {
        res.exit_code = 2;
        res.message = e.what();
    } catch (const Error& e) {
        res.exit_code = 3;
        res.message = e.what();
    } catch (const fs::filesystem_error& e) {
        res.exit_code = 2;
        res.message = std::string("output_dir: ") + e.what();
    }
    return res;
}

RunResult run_from_file(const std::string& path, const CliOverrides& o) {
    ExperimentConfig cfg;
    try {
        cfg = load_config(path);
    } catch (const Error& e) {
        return {2, e.what(), {}};
    }
    if (o.out) cfg.output_dir = *o.out;
    if (o.seed) cfg.seed = *o.seed;
    if (o.threads) cfg.threads = *o.threads;
    return run(cfg);
}

}  // namespace qmem::experiments
