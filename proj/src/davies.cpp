#include "qmem/davies.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <sstream>

#include "json.hpp"
#include "qmem/eigensolver.hpp"
#include "qmem/errors.hpp"
#include "qmem/io.hpp"

namespace qmem::davies {

namespace {

bool same_frequency(double a, double b) { return std::abs(a - b) <= 1e-9 * std::max(1.0, std::abs(a)); }

int parity(std::uint64_t x) { return std::popcount(x) & 1; }

std::vector<double> gibbs_weights(const std::vector<double>& energies, double beta, double emin,
                                  double& log_z) {
    std::vector<double> w(energies.size());
    double z = 0.0;
    for (std::size_t i = 0; i < energies.size(); ++i) {
        w[i] = std::exp(-beta * (energies[i] - emin));
        z += w[i];
    }
    for (double& x : w) x /= z;
    log_z = std::log(z);
    return w;
}

}  // namespace

double DaviesRateTable::rate(double omega) const {
    auto it = std::lower_bound(entries.begin(), entries.end(), omega - 1e-9 * std::max(1.0, std::abs(omega)),
                               [](const auto& e, double w) { return e.first < w; });
    if (it != entries.end() && same_frequency(it->first, omega)) return it->second;
    std::ostringstream os;
    os << "Bohr frequency " << omega << " is not in the rate table";
    throw ParameterError(os.str());
}

double DaviesRateTable::max_rate() const {
    double m = 0.0;
    for (const auto& e : entries) m = std::max(m, e.second);
    return m;
}

DaviesRateTable build_rates(const bath::SpectralDensity& model, const std::vector<double>& bohr_frequencies,
                            double coupling) {
    if (!(coupling >= 0.0) || !std::isfinite(coupling)) throw ParameterError("coupling lambda^2 must be >= 0");
    if (bohr_frequencies.empty()) throw ParameterError("no Bohr frequencies given");
    std::vector<double> ws = bohr_frequencies;
    std::sort(ws.begin(), ws.end());
    ws.erase(std::unique(ws.begin(), ws.end(), same_frequency), ws.end());
    for (double w : ws) {
        if (!std::isfinite(w)) throw ParameterError("Bohr frequency must be finite");
        if (w > model.cutoff() * (1 + 1e-12) || w < model.lower_edge() * (1 + 1e-12)) {
            std::ostringstream os;
            os << "Bohr frequency " << w << " outside the bath support [" << model.lower_edge() << ", "
               << model.cutoff() << "]";
            throw ParameterError(os.str());
        }
        const bool closed = std::any_of(ws.begin(), ws.end(), [w](double u) { return same_frequency(u, -w); });
        if (!closed) throw ParameterError("Bohr frequencies must be closed under negation");
    }
    DaviesRateTable table;
    table.coupling = coupling;
    table.beta = model.beta();
    for (double w : ws) {
        const double up = coupling * model(std::abs(w));
        if (up < 0.0) throw ParameterError("spectral density is negative");
        table.entries.emplace_back(w, w >= 0.0 ? up : std::exp(-model.beta() * std::abs(w)) * up);
    }
    return table;
}

std::string to_string(ModelKind kind) {
    switch (kind) {
        case ModelKind::Ising: return "Ising";
        case ModelKind::KitaevSector: return "KitaevSector";
        case ModelKind::KitaevEdgeSpins: return "KitaevEdgeSpins";
    }
    return "?";
}

ClassicalModel ClassicalModel::ising(const lattice::IsingLattice& lat, double coupling) {
    if (lat.num_sites() > 62) throw CapacityError("Ising model too large for a bit-string state");
    ClassicalModel m;
    m.kind_ = ModelKind::Ising;
    m.sites_ = lat.num_sites();
    m.bits_ = m.sites_;
    m.coupling_ = coupling;
    m.degree_ = lat.degree();
    for (auto [i, j] : lat.bonds()) m.term_masks_.push_back((std::uint64_t{1} << i) | (std::uint64_t{1} << j));
    return m;
}

ClassicalModel ClassicalModel::kitaev_edge_spins(const lattice::TorusLattice& lat, lattice::Sector sector,
                                                 double coupling) {
    if (lat.num_edges() > 62) throw CapacityError("torus too large for a bit-string edge state");
    ClassicalModel m;
    m.kind_ = ModelKind::KitaevEdgeSpins;
    m.sites_ = lat.num_edges();
    m.bits_ = m.sites_;
    m.checks_ = lat.num_cells();
    m.coupling_ = coupling;
    m.sector_ = sector;
    for (const auto& chk : lat.checks(sector)) {
        std::uint64_t mask = 0;
        for (int e : chk) mask |= std::uint64_t{1} << e;
        m.term_masks_.push_back(mask);
    }
    m.logical_h_ = lat.sector_logical(sector, lattice::Homology::Horizontal).support;
    m.logical_v_ = lat.sector_logical(sector, lattice::Homology::Vertical).support;
    return m;
}

ClassicalModel ClassicalModel::kitaev_sector(const lattice::TorusLattice& lat, lattice::Sector sector,
                                             double coupling) {
    if (lat.num_cells() + 1 > 62) throw CapacityError("torus too large for a bit-string sector state");
    ClassicalModel m;
    m.kind_ = ModelKind::KitaevSector;
    m.sites_ = lat.num_edges();
    m.checks_ = lat.num_cells();
    m.bits_ = m.checks_ + 1;
    m.coupling_ = coupling;
    m.sector_ = sector;
    m.logical_h_ = lat.sector_logical(sector, lattice::Homology::Horizontal).support;
    m.logical_v_ = lat.sector_logical(sector, lattice::Homology::Vertical).support;
    for (int e = 0; e < m.sites_; ++e) {
        std::uint64_t mask = 0;
        for (int c : lat.edge_checks(sector, e)) {
            if (c < m.checks_ - 1) mask ^= std::uint64_t{1} << (c + 2);
        }
        if (std::binary_search(m.logical_h_.begin(), m.logical_h_.end(), e)) mask ^= 1;
        if (std::binary_search(m.logical_v_.begin(), m.logical_v_.end(), e)) mask ^= 2;
        m.flip_masks_.push_back(mask);
    }
    return m;
}

double ClassicalModel::energy(std::uint64_t s) const {
    switch (kind_) {
        case ModelKind::Ising:
        case ModelKind::KitaevEdgeSpins: {
            int broken = 0;
            for (auto mask : term_masks_) broken += parity(s & mask);
            return -coupling_ * (static_cast<double>(term_masks_.size()) - 2.0 * broken);
        }
        case ModelKind::KitaevSector: {
            const int free_flags = std::popcount(s >> 2);
            const int flagged = free_flags + (free_flags & 1);
            return -coupling_ * (checks_ - 2.0 * flagged);
        }
    }
    return 0.0;
}

std::uint64_t ClassicalModel::flip(std::uint64_t s, int site) const {
    if (site < 0 || site >= sites_) throw ParameterError("site index out of range");
    if (kind_ == ModelKind::KitaevSector) return s ^ flip_masks_[static_cast<std::size_t>(site)];
    return s ^ (std::uint64_t{1} << site);
}

std::vector<double> ClassicalModel::bohr_frequencies() const {
    std::vector<double> out;
    for (int k = -degree_; k <= degree_; k += 2) out.push_back(2.0 * coupling_ * k);
    return out;
}

int ClassicalModel::check_flag(std::uint64_t s, int check) const {
    if (check < 0 || check >= checks_) throw ParameterError("check index out of range");
    if (kind_ == ModelKind::KitaevEdgeSpins) return parity(s & term_masks_[static_cast<std::size_t>(check)]);
    if (kind_ != ModelKind::KitaevSector) throw PreconditionError("check flags exist only for Kitaev models");
    if (check < checks_ - 1) return static_cast<int>((s >> (check + 2)) & 1);
    return parity(s >> 2);
}

int ClassicalModel::logical_parity(std::uint64_t s, lattice::Homology label) const {
    if (kind_ == ModelKind::KitaevSector) return static_cast<int>((s >> (label == lattice::Homology::Horizontal ? 0 : 1)) & 1);
    if (kind_ != ModelKind::KitaevEdgeSpins) throw PreconditionError("logical parities exist only for Kitaev models");
    const auto& sup = label == lattice::Homology::Horizontal ? logical_h_ : logical_v_;
    int p = 0;
    for (int e : sup) p ^= static_cast<int>((s >> e) & 1);
    return p;
}

std::uint64_t ClassicalModel::sector_state(const lattice::TorusLattice& lat, const lattice::SpinConfig& config) const {
    if (kind_ == ModelKind::Ising) throw PreconditionError("sector_state needs a Kitaev model");
    if (config.size() != static_cast<std::size_t>(sites_)) throw ParameterError("configuration size mismatch");
    if (kind_ == ModelKind::KitaevEdgeSpins) {
        std::uint64_t s = 0;
        for (int e = 0; e < sites_; ++e) {
            if (config[static_cast<std::size_t>(e)] < 0) s |= std::uint64_t{1} << e;
        }
        return s;
    }
    const auto syn = lattice::syndrome(lat, config, sector_);
    std::uint64_t s = 0;
    for (int c = 0; c < checks_ - 1; ++c) {
        if (syn.flags[static_cast<std::size_t>(c)]) s |= std::uint64_t{1} << (c + 2);
    }
    lattice::LogicalOperator op;
    op.support = logical_h_;
    if (lattice::bare_logical_value(config, op) < 0) s |= 1;
    op.support = logical_v_;
    if (lattice::bare_logical_value(config, op) < 0) s |= 2;
    return s;
}

GeneratorMatrix build_classical_generator(const ClassicalModel& model, const DaviesRateTable& rates, double beta,
                                          std::uint64_t state_cap) {
    if (!(beta >= 0.0) || !std::isfinite(beta)) throw ParameterError("beta must be finite and >= 0");
    if (std::abs(beta - rates.beta) > 1e-12 * std::max(1.0, beta)) {
        throw ParameterError("rate table was built at a different beta");
    }
    const std::uint64_t n = model.num_states();
    if (n > state_cap) {
        std::ostringstream os;
        os << "state space of " << n << " states exceeds the exact-generator cap of " << state_cap
           << "; use the kinetic Monte Carlo path (dynamics) for this size";
        throw CapacityError(os.str());
    }
    GeneratorMatrix gen;
    gen.beta = beta;
    gen.kind = GeneratorKind::ClassicalSector;
    gen.energies.resize(n);
    for (std::uint64_t s = 0; s < n; ++s) gen.energies[s] = model.energy(s);
    gen.energy_min = *std::min_element(gen.energies.begin(), gen.energies.end());
    gen.gibbs = gibbs_weights(gen.energies, beta, gen.energy_min, gen.log_partition);

    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(static_cast<std::size_t>(n) * (model.num_sites() + 1));
    for (std::uint64_t s = 0; s < n; ++s) {
        double out = 0.0;
        for (int j = 0; j < model.num_sites(); ++j) {
            const std::uint64_t t = model.flip(s, j);
            const double r = rates.rate(-(gen.energies[t] - gen.energies[s]));
            if (r == 0.0) continue;
            if (t == s) continue;
            trip.emplace_back(static_cast<int>(t), static_cast<int>(s), r);
            out += r;
        }
        trip.emplace_back(static_cast<int>(s), static_cast<int>(s), -out);
    }
    gen.rates.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    gen.rates.setFromTriplets(trip.begin(), trip.end());
    gen.rates.makeCompressed();
    return gen;
}

GeneratorMatrix perturb_rate(const GeneratorMatrix& gen, Eigen::Index from, Eigen::Index to, double factor) {
    if (from == to || from < 0 || to < 0 || from >= gen.dimension() || to >= gen.dimension()) {
        throw ParameterError("perturb_rate needs two distinct valid states");
    }
    GeneratorMatrix out = gen;
    const double r = out.rates.coeff(to, from);
    if (r == 0.0) throw ParameterError("no move between the given states");
    out.rates.coeffRef(to, from) = r * factor;
    out.rates.coeffRef(from, from) -= r * (factor - 1.0);
    return out;
}

BalanceReport check_db_stationarity(const GeneratorMatrix& gen) {
    BalanceReport rep;
    const Eigen::Index n = gen.dimension();
    Eigen::VectorXd pi = Eigen::Map<const Eigen::VectorXd>(gen.gibbs.data(), n);
    rep.stationarity_residual = (gen.rates * pi).lpNorm<1>();
    Eigen::VectorXd colsum = Eigen::VectorXd::Zero(n);
    rep.min_offdiagonal = std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < gen.rates.outerSize(); ++j) {
        for (Eigen::SparseMatrix<double>::InnerIterator it(gen.rates, j); it; ++it) {
            colsum[j] += it.value();
            if (it.row() == j) continue;
            rep.min_offdiagonal = std::min(rep.min_offdiagonal, it.value());
            const double back = gen.rates.coeff(j, it.row());
            rep.detailed_balance_residual = std::max(
                rep.detailed_balance_residual, std::abs(it.value() * pi[j] - back * pi[it.row()]));
        }
    }
    rep.column_sum_residual = colsum.cwiseAbs().maxCoeff();
    if (!std::isfinite(rep.min_offdiagonal)) rep.min_offdiagonal = 0.0;
    return rep;
}

Eigen::SparseMatrix<double, Eigen::RowMajor> symmetrized(const GeneratorMatrix& gen) {
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(static_cast<std::size_t>(gen.rates.nonZeros()));
    for (Eigen::Index j = 0; j < gen.rates.outerSize(); ++j) {
        for (Eigen::SparseMatrix<double>::InnerIterator it(gen.rates, j); it; ++it) {
            const Eigen::Index i = it.row();
            // sqrt(pi_j / pi_i) from energies to stay accurate at low temperature
            const double scale = std::exp(-0.5 * gen.beta * (gen.energies[j] - gen.energies[i]));
            trip.emplace_back(i, j, -it.value() * scale);
        }
    }
    Eigen::SparseMatrix<double, Eigen::RowMajor> s(gen.dimension(), gen.dimension());
    s.setFromTriplets(trip.begin(), trip.end());
    // remove the O(eps) asymmetry left by rounding
    Eigen::SparseMatrix<double, Eigen::RowMajor> st = s.transpose();
    return 0.5 * (s + st);
}

SpectralReport spectral_gap(const GeneratorMatrix& gen, int k, const SpectralOptions& opts) {
    const Eigen::Index n = gen.dimension();
    if (k < 2) throw ParameterError("spectral_gap needs k >= 2");
    if (k > n) throw ParameterError("k exceeds the generator dimension");
    const auto s = symmetrized(gen);
    SpectralReport rep;
    if (n < opts.dense_threshold && !opts.force_iterative) {
        rep.method = EigenMethod::Dense;
        Eigen::MatrixXd dense = Eigen::MatrixXd(s);
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(dense);
        if (es.info() != Eigen::Success) throw NumericalError("dense eigensolver failed");
        for (int i = 0; i < k; ++i) {
            rep.eigenvalues.push_back(es.eigenvalues()[i]);
            rep.residuals.push_back((dense * es.eigenvectors().col(i) - es.eigenvalues()[i] * es.eigenvectors().col(i)).norm());
        }
    } else {
        rep.method = EigenMethod::IterativeSparse;
        Eigen::VectorXd u(n);
        for (Eigen::Index i = 0; i < n; ++i) u[i] = std::sqrt(gen.gibbs[static_cast<std::size_t>(i)]);
        u.normalize();
        rep.eigenvalues.push_back(u.dot(s * u));
        rep.residuals.push_back((s * u - rep.eigenvalues[0] * u).norm());
        linalg::LobpcgOptions lo;
        lo.tolerance = opts.tolerance;
        lo.max_iterations = opts.max_iterations;
        const auto res = linalg::lobpcg_lowest(s, k - 1, u, lo);
        for (int i = 0; i < k - 1; ++i) {
            rep.eigenvalues.push_back(res.values[i]);
            rep.residuals.push_back(res.residuals[static_cast<std::size_t>(i)]);
        }
        rep.iterations = res.iterations;
    }
    std::sort(rep.eigenvalues.begin(), rep.eigenvalues.end());
    rep.gap = rep.eigenvalues[1];
    return rep;
}

DenseEvolution::DenseEvolution(const GeneratorMatrix& gen) {
    const Eigen::Index n = gen.dimension();
    if (n > 8192) throw CapacityError("dense evolution limited to 8192 states");
    sqrt_pi_.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) sqrt_pi_[i] = std::sqrt(gen.gibbs[static_cast<std::size_t>(i)]);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(Eigen::MatrixXd(symmetrized(gen)));
    if (es.info() != Eigen::Success) throw NumericalError("dense eigensolver failed");
    evals_ = es.eigenvalues();
    evecs_ = es.eigenvectors();
}

Eigen::VectorXd DenseEvolution::propagate(const Eigen::VectorXd& p0, double t) const {
    if (p0.size() != sqrt_pi_.size()) throw ParameterError("distribution size mismatch");
    Eigen::VectorXd y = evecs_.transpose() * p0.cwiseQuotient(sqrt_pi_);
    y.array() *= (-t * evals_.array()).exp();
    return sqrt_pi_.cwiseProduct(evecs_ * y);
}

double DenseEvolution::correlation(const Eigen::VectorXd& a, const Eigen::VectorXd& b, double t) const {
    if (a.size() != sqrt_pi_.size() || b.size() != sqrt_pi_.size()) throw ParameterError("observable size mismatch");
    Eigen::VectorXd ya = evecs_.transpose() * a.cwiseProduct(sqrt_pi_);
    Eigen::VectorXd yb = evecs_.transpose() * b.cwiseProduct(sqrt_pi_);
    return (ya.array() * yb.array() * (-t * evals_.array()).exp()).sum();
}

double DenseEvolution::dirichlet(const Eigen::VectorXd& a, const Eigen::VectorXd& b) const {
    if (a.size() != sqrt_pi_.size() || b.size() != sqrt_pi_.size()) throw ParameterError("observable size mismatch");
    Eigen::VectorXd ya = evecs_.transpose() * a.cwiseProduct(sqrt_pi_);
    Eigen::VectorXd yb = evecs_.transpose() * b.cwiseProduct(sqrt_pi_);
    return -(ya.array() * yb.array() * evals_.array()).sum();
}

ConvexityReport convexity_bound_check(const GeneratorMatrix& gen, const Eigen::VectorXd& r,
                                      const std::vector<double>& t_grid) {
    if (r.size() != gen.dimension()) throw ParameterError("observable size mismatch");
    const DenseEvolution ev(gen);
    return convexity_bound_check(ev, gen.gibbs, r, t_grid);
}

ConvexityReport convexity_bound_check(const DenseEvolution& ev, const std::vector<double>& gibbs,
                                      const Eigen::VectorXd& r, const std::vector<double>& t_grid) {
    if (static_cast<std::size_t>(r.size()) != gibbs.size()) throw ParameterError("observable size mismatch");
    double mean = 0.0, norm2 = 0.0;
    for (Eigen::Index i = 0; i < r.size(); ++i) {
        mean += gibbs[static_cast<std::size_t>(i)] * r[i];
        norm2 += gibbs[static_cast<std::size_t>(i)] * r[i] * r[i];
    }
    if (std::abs(mean) > 1e-9) throw PreconditionError("observable must have zero Gibbs mean");
    if (std::abs(norm2 - 1.0) > 1e-9) throw PreconditionError("observable must have unit Gibbs norm");
    for (double t : t_grid) {
        if (!(t >= 0.0)) throw ParameterError("time grid must be nonnegative");
    }
    ConvexityReport rep;
    rep.dirichlet = ev.dirichlet(r, r);
    rep.min_slack = std::numeric_limits<double>::infinity();
    for (double t : t_grid) {
        rep.t.push_back(t);
        rep.lhs.push_back(ev.correlation(r, r, t));
        rep.rhs.push_back(std::exp(t * rep.dirichlet));
        rep.min_slack = std::min(rep.min_slack, rep.lhs.back() - rep.rhs.back());
    }
    if (t_grid.empty()) rep.min_slack = 0.0;
    return rep;
}

GapInequalityReport gap_inequality_check(const ClassicalModel& model, const DaviesRateTable& rates,
                                         const Eigen::VectorXd& a) {
    const std::uint64_t n = model.num_states();
    if (n > (std::uint64_t{1} << 20)) throw CapacityError("gap inequality check limited to 2^20 states");
    if (static_cast<std::uint64_t>(a.size()) != n) throw ParameterError("observable size mismatch");
    std::vector<double> energies(n);
    for (std::uint64_t s = 0; s < n; ++s) energies[s] = model.energy(s);
    const double emin = *std::min_element(energies.begin(), energies.end());
    double log_z = 0.0;
    const auto pi = gibbs_weights(energies, rates.beta, emin, log_z);
    GapInequalityReport rep;
    double commutators = 0.0;
    for (std::uint64_t s = 0; s < n; ++s) {
        for (int j = 0; j < model.num_sites(); ++j) {
            const std::uint64_t t = model.flip(s, j);
            const double d = a[static_cast<Eigen::Index>(t)] - a[static_cast<Eigen::Index>(s)];
            const double d2 = d * d;
            rep.lhs += 0.5 * pi[s] * rates.rate(-(energies[t] - energies[s])) * d2;
            commutators += pi[s] * d2;
        }
    }
    rep.rhs = 2.0 * rates.max_rate() * commutators;
    rep.slack = rep.rhs - rep.lhs;
    return rep;
}

KSquaredVerdict k_squared_gap_bound(const Eigen::MatrixXd& k, double c) {
    if (k.rows() != k.cols()) throw ParameterError("K must be square");
    const double scale = std::max(1.0, k.cwiseAbs().maxCoeff());
    if ((k - k.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale) throw ParameterError("K must be symmetric");
    if (!(c > 0.0)) throw ParameterError("c must be > 0");
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(k);
    const auto& ev = es.eigenvalues();
    if (ev.minCoeff() < -1e-10 * scale) throw PreconditionError("K must be positive semidefinite");
    KSquaredVerdict v;
    // K^2 - cK shares eigenvectors with K
    v.min_eigenvalue = (ev.array() * (ev.array() - c)).minCoeff();
    v.condition_holds = v.min_eigenvalue >= -1e-10;
    const double top = ev.cwiseAbs().maxCoeff();
    v.gap = 0.0;
    for (Eigen::Index i = 0; i < ev.size(); ++i) {
        if (ev[i] > 1e-10 * std::max(top, 1e-300)) {
            v.gap = ev[i];
            break;
        }
    }
    v.gap_bound_verified = v.condition_holds && (v.gap == 0.0 || v.gap >= c - 1e-9 * std::max(1.0, c));
    return v;
}

void export_generator(const GeneratorMatrix& gen, const std::string& csv_path, const std::string& json_path) {
    std::ostringstream csv;
    csv << "row,col,value\n";
    for (Eigen::Index j = 0; j < gen.rates.outerSize(); ++j) {
        for (Eigen::SparseMatrix<double>::InnerIterator it(gen.rates, j); it; ++it) {
            csv << it.row() << ',' << j << ',' << io::format_double(it.value()) << '\n';
        }
    }
    io::write_text_atomic(csv_path, csv.str());
    nlohmann::json side;
    side["dimension"] = gen.dimension();
    side["nonzeros"] = gen.rates.nonZeros();
    side["beta"] = gen.beta;
    side["log_partition"] = gen.log_partition;
    side["energy_min"] = gen.energy_min;
    side["convention"] = "column: dp/dt = Q p, Q(row=to, col=from)";
    side["kind"] = gen.kind == GeneratorKind::ClassicalSector ? "ClassicalSector" : "FullDavies";
    side["gibbs"] = gen.gibbs;
    io::write_text_atomic(json_path, side.dump(2));
}

}  // namespace qmem::davies
