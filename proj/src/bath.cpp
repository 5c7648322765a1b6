#include "qmem/bath.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <numbers>
#include <numeric>
#include <sstream>

#include "qmem/errors.hpp"

namespace qmem::bath {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

// Filon weights for \int f(x) e^{itx} dx with Simpson-type quadratic interpolation.
struct FilonWeights {
    double alpha, beta, gamma;
};

FilonWeights filon_weights(double theta) {
    if (std::abs(theta) < 1.0 / 6.0) {
        const double t2 = theta * theta;
        const double t3 = t2 * theta;
        return {2.0 * t3 / 45.0 - 2.0 * t3 * t2 / 315.0 + 2.0 * t3 * t2 * t2 / 4725.0,
                2.0 / 3.0 + 2.0 * t2 / 15.0 - 4.0 * t2 * t2 / 105.0 + 2.0 * t2 * t2 * t2 / 567.0,
                4.0 / 3.0 - 2.0 * t2 / 15.0 + t2 * t2 / 210.0 - t2 * t2 * t2 / 11340.0};
    }
    const double s = std::sin(theta);
    const double c = std::cos(theta);
    const double t3 = theta * theta * theta;
    return {(theta * theta + theta * s * c - 2.0 * s * s) / t3,
            2.0 * (theta * (1.0 + c * c) - 2.0 * s * c) / t3,
            4.0 * (s - theta * c) / t3};
}

// One smooth piece [a, b] of the integrand. Samples of R are cached per
// refinement level so that many t values share the evaluations.
class FilonPiece {
public:
    FilonPiece(const SpectralDensity& model, double a, double b) : model_(model), a_(a), b_(b) {}

    // Composite rule with `panels` Simpson double-intervals.
    std::complex<double> integrate(double t, int panels) {
        const auto& f = samples(panels);
        const int m = 2 * panels;
        const double h = (b_ - a_) / m;
        const FilonWeights w = filon_weights(t * h);
        std::complex<double> even{0.0, 0.0};
        std::complex<double> odd{0.0, 0.0};
        for (int j = 0; j <= m; ++j) {
            const double x = a_ + j * h;
            const std::complex<double> term = f[j] * std::polar(1.0, t * x);
            if (j % 2 == 0) {
                even += (j == 0 || j == m) ? 0.5 * term : term;
            } else {
                odd += term;
            }
        }
        const std::complex<double> edge = f[m] * std::polar(1.0, t * b_) - f[0] * std::polar(1.0, t * a_);
        return h * (std::complex<double>(0.0, -w.alpha) * edge + w.beta * even + w.gamma * odd);
    }

    double width() const { return b_ - a_; }

private:
    const std::vector<double>& samples(int panels) {
        auto it = cache_.find(panels);
        if (it != cache_.end()) return it->second;
        const int m = 2 * panels;
        const double h = (b_ - a_) / m;
        std::vector<double> f(m + 1);
        // Interior evaluation avoids picking the wrong branch exactly at a breakpoint.
        const double eps = 1e-14 * std::max(1.0, std::abs(b_ - a_));
        for (int j = 0; j <= m; ++j) {
            double x = a_ + j * h;
            if (j == 0) x = a_ + eps;
            if (j == m) x = b_ - eps;
            f[j] = model_(x);
        }
        return cache_.emplace(panels, std::move(f)).first->second;
    }

    const SpectralDensity& model_;
    double a_, b_;
    std::map<int, std::vector<double>> cache_;
};

void require(bool ok, const std::string& msg) {
    if (!ok) throw ParameterError(msg);
}

}  // namespace

std::string to_string(DensityKind kind) {
    switch (kind) {
        case DensityKind::FlatKMS: return "FlatKMS";
        case DensityKind::PowerAnsatz: return "PowerAnsatz";
        case DensityKind::Tabulated: return "Tabulated";
    }
    return "unknown";
}

DensityKind density_kind_from_string(const std::string& name) {
    if (name == "FlatKMS") return DensityKind::FlatKMS;
    if (name == "PowerAnsatz") return DensityKind::PowerAnsatz;
    if (name == "Tabulated") return DensityKind::Tabulated;
    throw ParameterError("unknown spectral density kind '" + name + "'");
}

double SpectralDensity::operator()(double w) const {
    if (w > cutoff_ || w < lower_) return 0.0;
    switch (kind_) {
        case DensityKind::FlatKMS:
            return w >= 0.0 ? amplitude_ : amplitude_ * std::exp(beta_ * w);
        case DensityKind::PowerAnsatz: {
            const double a = std::abs(w);
            const double positive = amplitude_ * std::pow(a, exponent_) * std::exp(-a / cutoff_);
            return w >= 0.0 ? positive : positive * std::exp(-beta_ * a);
        }
        case DensityKind::Tabulated: {
            auto it = std::upper_bound(tab_w_.begin(), tab_w_.end(), w);
            if (it == tab_w_.end()) return tab_r_.back();
            if (it == tab_w_.begin()) return tab_r_.front();
            const std::size_t i = static_cast<std::size_t>(it - tab_w_.begin());
            const double s = (w - tab_w_[i - 1]) / (tab_w_[i] - tab_w_[i - 1]);
            return tab_r_[i - 1] + s * (tab_r_[i] - tab_r_[i - 1]);
        }
    }
    return 0.0;
}

std::vector<double> SpectralDensity::breakpoints() const {
    std::vector<double> points{0.0};
    if (kind_ == DensityKind::Tabulated) {
        for (double w : tab_w_) {
            if (w > lower_ && w < cutoff_ && w != 0.0) points.push_back(w);
        }
    }
    std::sort(points.begin(), points.end());
    return points;
}

double SpectralDensity::kms_violation(const std::vector<double>& positive_omegas) const {
    double worst = 0.0;
    for (double w : positive_omegas) {
        if (w <= 0.0 || w > cutoff_) continue;
        const double forward = (*this)(w);
        if (forward <= 0.0) continue;
        const double ratio = (*this)(-w) * std::exp(beta_ * w) / forward;
        worst = std::max(worst, std::abs(ratio - 1.0));
    }
    return worst;
}

SpectralDensity build_spectral_density(DensityKind kind, const DensityParams& p) {
    require(std::isfinite(p.beta) && p.beta >= 0.0, "beta must be finite and >= 0");
    SpectralDensity m;
    m.kind_ = kind;
    m.beta_ = p.beta;
    switch (kind) {
        case DensityKind::FlatKMS:
        case DensityKind::PowerAnsatz:
            require(p.amplitude > 0.0 && std::isfinite(p.amplitude), "amplitude must be > 0");
            require(p.cutoff > 0.0 && std::isfinite(p.cutoff), "cutoff must be > 0");
            if (kind == DensityKind::PowerAnsatz) {
                require(p.exponent >= 1.0 && std::isfinite(p.exponent), "exponent d must be >= 1");
                m.exponent_ = p.exponent;
            }
            m.amplitude_ = p.amplitude;
            m.cutoff_ = p.cutoff;
            m.lower_ = -p.cutoff;
            return m;
        case DensityKind::Tabulated: {
            require(p.omegas.size() == p.values.size(), "tabulated omega/value length mismatch");
            require(p.omegas.size() >= 3, "tabulated density needs at least 3 samples");
            require(p.kms_tolerance > 0.0, "kms_tolerance must be > 0");
            std::vector<std::size_t> order(p.omegas.size());
            std::iota(order.begin(), order.end(), 0);
            std::sort(order.begin(), order.end(),
                      [&](std::size_t a, std::size_t b) { return p.omegas[a] < p.omegas[b]; });
            for (std::size_t i : order) {
                require(std::isfinite(p.omegas[i]) && std::isfinite(p.values[i]),
                        "tabulated samples must be finite");
                require(p.values[i] >= 0.0, "tabulated density must be nonnegative");
                if (!m.tab_w_.empty()) {
                    require(p.omegas[i] > m.tab_w_.back(), "tabulated omegas must be distinct");
                }
                m.tab_w_.push_back(p.omegas[i]);
                m.tab_r_.push_back(p.values[i]);
            }
            require(m.tab_w_.front() < 0.0 && m.tab_w_.back() > 0.0,
                    "tabulated density must cover both signs of omega");
            m.lower_ = m.tab_w_.front();
            m.cutoff_ = m.tab_w_.back();
            m.amplitude_ = *std::max_element(m.tab_r_.begin(), m.tab_r_.end());
            require(m.amplitude_ > 0.0, "tabulated density is identically zero");
            std::vector<double> probe;
            const double reach = std::min(-m.lower_, m.cutoff_);
            for (double w : m.tab_w_) {
                if (w > 0.0 && w <= reach) probe.push_back(w);
                if (w < 0.0 && -w <= reach) probe.push_back(-w);
            }
            const double violation = m.kms_violation(probe);
            if (violation > p.kms_tolerance) {
                std::ostringstream os;
                os << "tabulated density violates KMS by " << violation << " (tolerance "
                   << p.kms_tolerance << ")";
                throw ParameterError(os.str());
            }
            return m;
        }
    }
    throw ParameterError("unknown spectral density kind");
}

SpectralDensity read_tabulated_csv(const std::string& path, double beta, double kms_tolerance) {
    std::ifstream in(path);
    if (!in) throw ParameterError("cannot open tabulated density '" + path + "'");
    DensityParams p;
    p.beta = beta;
    p.kms_tolerance = kms_tolerance;
    std::string line;
    std::getline(in, line);  // header
    int lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        std::replace(line.begin(), line.end(), ',', ' ');
        std::istringstream fields(line);
        double w = 0.0, r = 0.0;
        if (!(fields >> w >> r)) {
            throw ParameterError(path + ":" + std::to_string(lineno) + ": expected 'omega,R'");
        }
        p.omegas.push_back(w);
        p.values.push_back(r);
    }
    return build_spectral_density(DensityKind::Tabulated, p);
}

CorrelationFunction correlation_function(const SpectralDensity& model,
                                         const std::vector<double>& t_grid,
                                         const QuadratureOptions& opts) {
    for (std::size_t i = 0; i < t_grid.size(); ++i) {
        if (!(t_grid[i] >= 0.0)) throw ParameterError("t_grid must be nonnegative");
        if (i > 0 && t_grid[i] < t_grid[i - 1]) throw ParameterError("t_grid must be sorted");
    }

    std::vector<double> edges{model.lower_edge()};
    for (double b : model.breakpoints()) edges.push_back(b);
    edges.push_back(model.cutoff());
    std::vector<FilonPiece> pieces;
    for (std::size_t i = 0; i + 1 < edges.size(); ++i) {
        if (edges[i + 1] > edges[i]) pieces.emplace_back(model, edges[i], edges[i + 1]);
    }

    // Scale for the absolute floor: F(0) = \int R.
    double total_mass = 0.0;
    for (auto& piece : pieces) total_mass += std::abs(piece.integrate(0.0, 64));
    const double abs_floor = 1e-14 * std::max(total_mass, 1e-300);

    CorrelationFunction out;
    out.t = t_grid;
    out.values.reserve(t_grid.size());
    out.error_bound.reserve(t_grid.size());
    out.rel_tol = opts.rel_tol;
    out.cutoff = model.cutoff();

    for (double t : t_grid) {
        std::complex<double> total{0.0, 0.0};
        double err = 0.0;
        for (auto& piece : pieces) {
            int n = opts.initial_panels;
            std::complex<double> coarse = piece.integrate(t, n);
            while (true) {
                if (2 * n > opts.max_panels) {
                    std::ostringstream os;
                    os << "correlation quadrature did not converge at t=" << t << " on panel width "
                       << piece.width() << " after " << n << " panels (last change "
                       << std::abs(coarse - piece.integrate(t, n / 2)) << ")";
                    throw NumericalError(os.str());
                }
                const std::complex<double> fine = piece.integrate(t, 2 * n);
                const double change = std::abs(fine - coarse);
                n *= 2;
                coarse = fine;
                if (change <= opts.rel_tol * std::max(std::abs(fine), abs_floor) || change <= abs_floor) {
                    err += change;
                    break;
                }
            }
            out.max_panels_used = std::max(out.max_panels_used, n);
            total += coarse;
        }
        if (t == 0.0) total.imag(0.0);  // \int R e^{0} is real by construction
        out.values.push_back(total);
        out.error_bound.push_back(err);
    }
    return out;
}

CorrelationFunction correlation_from_samples(std::vector<double> t,
                                             std::vector<std::complex<double>> values,
                                             double cutoff) {
    if (t.size() != values.size()) throw ParameterError("sample length mismatch");
    for (std::size_t i = 1; i < t.size(); ++i) {
        if (t[i] <= t[i - 1]) throw ParameterError("sample times must be strictly increasing");
    }
    CorrelationFunction out;
    out.t = std::move(t);
    out.values = std::move(values);
    out.error_bound.assign(out.t.size(), 0.0);
    out.cutoff = cutoff;
    return out;
}

std::complex<double> cutoff_averaged(const CorrelationFunction& corr, double t) {
    if (!(corr.cutoff > 0.0)) throw PreconditionError("cutoff-averaging needs a known cutoff");
    const double half = kTwoPi / corr.cutoff;
    const double slack = 1e-9 * half;
    if (corr.t.empty() || t - half < corr.t.front() - slack || t + half > corr.t.back() + slack) {
        throw PreconditionError("t_grid does not cover the averaging window around t=" +
                                std::to_string(t));
    }
    auto lo = std::lower_bound(corr.t.begin(), corr.t.end(), t - half - slack);
    auto hi = std::upper_bound(corr.t.begin(), corr.t.end(), t + half + slack);
    const std::size_t first = static_cast<std::size_t>(lo - corr.t.begin());
    const std::size_t last = static_cast<std::size_t>(hi - corr.t.begin());
    std::complex<double> acc{0.0, 0.0};
    double norm = 0.0;
    for (std::size_t k = first; k < last; ++k) {
        const double tri = std::max(0.0, 1.0 - std::abs(corr.t[k] - t) / half);
        const double left = k > first ? corr.t[k] - corr.t[k - 1] : 0.0;
        const double right = k + 1 < last ? corr.t[k + 1] - corr.t[k] : 0.0;
        const double w = tri * 0.5 * (left + right);
        acc += w * corr.values[k];
        norm += w;
    }
    if (norm <= 0.0) throw PreconditionError("averaging window contains no samples");
    return acc / norm;
}

std::vector<double> tail_grid(double cutoff, double t_min, double t_max, int points_per_period) {
    if (!(cutoff > 0.0) || !(t_max > t_min) || !(t_min >= 0.0) || points_per_period < 2) {
        throw ParameterError("invalid tail grid request");
    }
    const double period = kTwoPi / cutoff;
    const double dt = period / points_per_period;
    const long back = std::min<long>(2L * points_per_period, static_cast<long>(std::floor(t_min / dt)));
    const long fwd = static_cast<long>(std::ceil((t_max - t_min) / dt)) + 2L * points_per_period;
    std::vector<double> grid;
    grid.reserve(static_cast<std::size_t>(back + fwd + 1));
    for (long k = -back; k <= fwd; ++k) grid.push_back(t_min + static_cast<double>(k) * dt);
    return grid;
}

TailFit tail_fit(const CorrelationFunction& corr, double t_min, double t_max,
                 const TailFitOptions& opts) {
    if (corr.t.empty() || !(t_max > t_min) || t_min < corr.t.front() || t_max > corr.t.back()) {
        throw PreconditionError("tail window must lie inside the correlation t_grid");
    }
    if (corr.cutoff > 0.0 && t_min * corr.cutoff < 20.0) {
        throw PreconditionError("tail window starts inside the cutoff transient (t_min*cutoff < 20)");
    }

    std::vector<double> xs, ys;
    if (corr.cutoff > 0.0) {
        const double period = kTwoPi / corr.cutoff;
        double bin_start = t_min;
        double best_t = 0.0, best_v = -1.0;
        for (std::size_t k = 0; k < corr.t.size(); ++k) {
            const double t = corr.t[k];
            if (t < t_min || t > t_max) continue;
            while (t >= bin_start + period) {
                if (best_v > 0.0) {
                    xs.push_back(std::log(best_t));
                    ys.push_back(std::log(best_v));
                }
                best_v = -1.0;
                bin_start += period;
            }
            const double v = std::abs(cutoff_averaged(corr, t));
            if (v > best_v) {
                best_v = v;
                best_t = t;
            }
        }
        if (best_v > 0.0) {
            xs.push_back(std::log(best_t));
            ys.push_back(std::log(best_v));
        }
    } else {
        for (std::size_t k = 0; k < corr.t.size(); ++k) {
            const double t = corr.t[k];
            if (t < t_min || t > t_max) continue;
            const double v = std::abs(corr.values[k]);
            if (v <= 0.0 || t <= 0.0) continue;
            xs.push_back(std::log(t));
            ys.push_back(std::log(v));
        }
    }
    if (xs.size() < opts.min_points) {
        throw DataError("tail fit needs at least " + std::to_string(opts.min_points) +
                        " envelope points, got " + std::to_string(xs.size()));
    }

    const double n = static_cast<double>(xs.size());
    const double mx = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
    const double my = std::accumulate(ys.begin(), ys.end(), 0.0) / n;
    double sxx = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        sxx += (xs[i] - mx) * (xs[i] - mx);
        sxy += (xs[i] - mx) * (ys[i] - my);
    }
    const double slope = sxy / sxx;
    const double intercept = my - slope * mx;
    double ss = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const double r = ys[i] - (intercept + slope * xs[i]);
        ss += r * r;
    }
    TailFit fit;
    fit.exponent = -slope;
    fit.amplitude = std::exp(intercept);
    fit.residual = std::sqrt(ss / n);
    fit.power_law = fit.residual <= opts.residual_threshold;
    fit.points = xs.size();
    return fit;
}

BathConditionsReport check_conditions(const SpectralDensity& model, const BathConditionsOptions& opts) {
    if (opts.grid_points < 2) throw ParameterError("grid_points must be >= 2");
    BathConditionsReport rep;
    const double omega_max = model.cutoff();
    const int n = opts.grid_points;
    rep.floor_omega.reserve(static_cast<std::size_t>(n));
    double grid_min = std::numeric_limits<double>::infinity();
    for (int k = 1; k <= n; ++k) {
        const double w = omega_max * std::pow(10.0, -6.0 * (1.0 - static_cast<double>(k) / n));
        const double ratio = model(w) / w;
        rep.floor_omega.push_back(w);
        rep.floor_value.push_back(ratio);
        grid_min = std::min(grid_min, ratio);
    }
    rep.kms_max_violation = model.kms_violation(rep.floor_omega);
    rep.r2_grid_minimum = grid_min;
    switch (model.kind()) {
        case DensityKind::FlatKMS:
            // R/w is decreasing on (0, Omega]; infimum at the cutoff.
            rep.r2_constant = model.amplitude() / omega_max;
            break;
        case DensityKind::PowerAnsatz:
            if (model.exponent() > 1.0) {
                rep.r2_constant = 0.0;  // C w^{d-1} e^{-w/Omega} -> 0 as w -> 0
            } else {
                rep.r2_constant = model.amplitude() * std::exp(-1.0);
                rep.d1_edge_case = true;
            }
            break;
        case DensityKind::Tabulated:
            rep.r2_constant = grid_min;
            break;
    }
    rep.r2_satisfied = rep.r2_constant > opts.r2_threshold;

    if (opts.fit_tail) {
        const double scale = std::max(1.0 / omega_max, model.beta());
        rep.tail_t_min = 20.0 * scale;
        rep.tail_t_max = 200.0 * scale;
        const auto grid = tail_grid(omega_max, rep.tail_t_min, rep.tail_t_max);
        const auto corr = correlation_function(model, grid);
        const TailFit fit = tail_fit(corr, rep.tail_t_min, rep.tail_t_max);
        rep.tail_exponent = fit.exponent;
        rep.tail_amplitude = fit.amplitude;
        rep.tail_residual = fit.residual;
        rep.tail_power_law = fit.power_law;
    }
    return rep;
}

Eigen::MatrixXd expand_correlation_matrix(const CorrelationMatrixSpec& spec, double omega) {
    if (spec.n_qubits < 1) throw ParameterError("n_qubits must be >= 1");
    if (!spec.base) throw ParameterError("correlation matrix spec has no base matrix");
    const Eigen::Matrix3d base = spec.base(omega);
    if ((base - base.transpose()).cwiseAbs().maxCoeff() > 1e-12 * std::max(1.0, base.cwiseAbs().maxCoeff())) {
        throw ParameterError("base correlation matrix must be symmetric");
    }
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(base, Eigen::EigenvaluesOnly);
    if (es.eigenvalues().minCoeff() < -1e-12 * std::max(1.0, es.eigenvalues().cwiseAbs().maxCoeff())) {
        throw ParameterError("base correlation matrix must be positive semidefinite");
    }
    const int n = spec.n_qubits;
    Eigen::MatrixXd full = Eigen::MatrixXd::Zero(3 * n, 3 * n);
    for (int j = 0; j < n; ++j) {
        for (int k = 0; k < n; ++k) {
            if (spec.coupling == Coupling::Private && j != k) continue;
            full.block<3, 3>(3 * j, 3 * k) = base;
        }
    }
    return full;
}

int collective_rank(const CorrelationMatrixSpec& spec, double omega) {
    const Eigen::MatrixXd full = expand_correlation_matrix(spec, omega);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(full, Eigen::EigenvaluesOnly);
    const auto& ev = es.eigenvalues();
    const double largest = ev.cwiseAbs().maxCoeff();
    if (largest == 0.0) return 0;
    int rank = 0;
    for (Eigen::Index i = 0; i < ev.size(); ++i) {
        if (ev[i] > 1e-10 * largest) ++rank;
    }
    return rank;
}

GateTimeBound tb_gate_time_bound(double eta, double cutoff, double epsilon) {
    require(eta > 0.0 && std::isfinite(eta), "eta must be > 0");
    require(cutoff > 0.0 && std::isfinite(cutoff), "cutoff must be > 0");
    require(epsilon > 0.0 && epsilon < 1.0, "epsilon must lie in (0, 1)");
    GateTimeBound b;
    b.eta = eta;
    b.cutoff = cutoff;
    b.epsilon = epsilon;
    b.tau_max = epsilon * std::sqrt(2.0 / eta) / cutoff;
    b.spectral_lower = 0.5 * eta * cutoff * cutoff;
    b.norm_upper = epsilon * epsilon / (b.tau_max * b.tau_max);
    return b;
}

}  // namespace qmem::bath
