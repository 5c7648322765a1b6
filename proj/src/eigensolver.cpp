#include "qmem/eigensolver.hpp"

#include <algorithm>
#include <initializer_list>
#include <cmath>
#include <random>
#include <sstream>

#include "qmem/errors.hpp"

namespace qmem::linalg {

namespace {

void project_out(Eigen::MatrixXd& v, const Eigen::MatrixXd& basis) {
    if (basis.cols() == 0 || v.cols() == 0) return;
    v -= basis * (basis.transpose() * v);
}

// Orthonormalizes the columns of z by eigen-decomposition of the Gram matrix
// (SVQB). Returns the transformation M with z_new = z M; near-dependent
// directions are dropped.
Eigen::MatrixXd svqb(const Eigen::MatrixXd& z) {
    Eigen::MatrixXd gram = z.transpose() * z;
    Eigen::VectorXd d = gram.diagonal().cwiseMax(1e-300).cwiseSqrt().cwiseInverse();
    Eigen::MatrixXd scaled = d.asDiagonal() * gram * d.asDiagonal();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(scaled);
    const double top = es.eigenvalues().maxCoeff();
    std::vector<Eigen::Index> keep;
    for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i) {
        if (es.eigenvalues()[i] > 1e-13 * top) keep.push_back(i);
    }
    Eigen::MatrixXd m(z.cols(), static_cast<Eigen::Index>(keep.size()));
    for (std::size_t j = 0; j < keep.size(); ++j) {
        m.col(static_cast<Eigen::Index>(j)) =
            d.asDiagonal() * es.eigenvectors().col(keep[j]) / std::sqrt(es.eigenvalues()[keep[j]]);
    }
    return m;
}

Eigen::MatrixXd hcat(Eigen::Index rows, std::initializer_list<const Eigen::MatrixXd*> blocks) {
    Eigen::Index cols = 0;
    for (const auto* b : blocks) cols += b->cols();
    Eigen::MatrixXd out(rows, cols);
    Eigen::Index at = 0;
    for (const auto* b : blocks) {
        if (b->cols() == 0) continue;
        out.middleCols(at, b->cols()) = *b;
        at += b->cols();
    }
    return out;
}

}  // namespace

LobpcgResult lobpcg_lowest(const Eigen::SparseMatrix<double, Eigen::RowMajor>& a, int k,
                           const Eigen::MatrixXd& deflate, const LobpcgOptions& opts) {
    const Eigen::Index n = a.rows();
    if (a.cols() != n) throw ParameterError("eigensolver needs a square matrix");
    if (k < 1) throw ParameterError("eigensolver needs k >= 1");
    const Eigen::Index block = std::min<Eigen::Index>(k + opts.guard_vectors, n - deflate.cols());
    if (block < k) throw ParameterError("matrix too small for the requested eigenpairs");

    Eigen::VectorXd precond = a.diagonal();
    const double shift = std::max(1e-12, 1e-3 * precond.cwiseAbs().mean());
    for (Eigen::Index i = 0; i < n; ++i) precond[i] = 1.0 / (std::abs(precond[i]) + shift);

    std::mt19937_64 rng(opts.seed);
    Eigen::MatrixXd x(n, block);
    for (Eigen::Index j = 0; j < block; ++j) {
        for (Eigen::Index i = 0; i < n; ++i) {
            x(i, j) = static_cast<double>(rng() >> 11) * 0x1.0p-53 - 0.5;
        }
    }
    project_out(x, deflate);
    x = x * svqb(x);

    Eigen::MatrixXd ax = a * x;
    {
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(x.transpose() * ax);
        x = x * es.eigenvectors();
        ax = ax * es.eigenvectors();
    }
    Eigen::VectorXd lambda = (x.transpose() * ax).diagonal();
    Eigen::MatrixXd p, ap;

    LobpcgResult res;
    for (int it = 1; it <= opts.max_iterations; ++it) {
        Eigen::MatrixXd r = ax - x * lambda.asDiagonal();
        std::vector<double> norms(static_cast<std::size_t>(block));
        bool done = true;
        for (Eigen::Index j = 0; j < block; ++j) {
            norms[static_cast<std::size_t>(j)] = r.col(j).norm();
            if (j < k && norms[static_cast<std::size_t>(j)] > opts.tolerance) done = false;
        }
        if (it == 1 || it % 50 == 0 || done) {
            std::ostringstream os;
            os << "iter " << it << " lambda0=" << lambda[0] << " max_res="
               << *std::max_element(norms.begin(), norms.begin() + k);
            res.log.push_back(os.str());
        }
        if (done) {
            res.values = lambda.head(k);
            res.vectors = x.leftCols(k);
            res.residuals.assign(norms.begin(), norms.begin() + k);
            res.iterations = it;
            res.converged = true;
            return res;
        }

        Eigen::MatrixXd w = precond.asDiagonal() * r;
        project_out(w, deflate);
        project_out(w, x);
        const Eigen::Index nw = w.cols();
        const Eigen::Index np = p.cols();
        const Eigen::MatrixXd z = hcat(n, {&x, &w, &p});
        const Eigen::MatrixXd m = svqb(z);
        Eigen::MatrixXd aw = a * w;
        const Eigen::MatrixXd az_raw = hcat(n, {&ax, &aw, &ap});
        const Eigen::MatrixXd zn = z * m;
        const Eigen::MatrixXd azn = az_raw * m;
        Eigen::MatrixXd g = zn.transpose() * azn;
        g = 0.5 * (g + g.transpose()).eval();
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(g);
        if (es.info() != Eigen::Success || es.eigenvalues().size() < block) {
            throw NumericalError("LOBPCG Rayleigh-Ritz step failed at iteration " + std::to_string(it));
        }
        const Eigen::MatrixXd c = es.eigenvectors().leftCols(block);
        Eigen::MatrixXd x_new = zn * c;
        Eigen::MatrixXd ax_new = azn * c;
        // Search direction: component of the update outside the old X.
        Eigen::MatrixXd cw = m.bottomRows(nw + np) * c;
        p = hcat(n, {&w, &p}) * cw;
        ap = hcat(n, {&aw, &ap}) * cw;
        x = std::move(x_new);
        ax = std::move(ax_new);
        lambda = es.eigenvalues().head(block);
        res.iterations = it;
    }
    std::ostringstream os;
    os << "LOBPCG did not converge in " << opts.max_iterations << " iterations; log:";
    for (const auto& line : res.log) os << "\n  " << line;
    throw NumericalError(os.str());
}

}  // namespace qmem::linalg
