// eigensolver.hpp: lowest eigenpairs of large sparse symmetric matrices

#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

namespace qmem::linalg {

struct LobpcgOptions {
    int guard_vectors{4};  // block size = k + guard_vectors
    double tolerance{1e-8};
    int max_iterations{5000};
    unsigned long long seed{0x5eedULL};
};

struct LobpcgResult {
    Eigen::VectorXd values;
    Eigen::MatrixXd vectors;
    std::vector<double> residuals;
    int iterations{0};
    bool converged{false};
    std::vector<std::string> log;
};

// Block LOBPCG with Jacobi preconditioning for the k lowest eigenpairs of a
// symmetric matrix, restricted to the orthogonal complement of the columns of
// `deflate` (which must be orthonormal; may have zero columns).
LobpcgResult lobpcg_lowest(const Eigen::SparseMatrix<double, Eigen::RowMajor>& a, int k,
                           const Eigen::MatrixXd& deflate, const LobpcgOptions& opts = {});

}  // namespace qmem::linalg
