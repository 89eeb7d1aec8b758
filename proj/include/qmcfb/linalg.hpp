#pragma once

#include <complex>

#include <Eigen/Dense>

#include "qmcfb/errors.hpp"

namespace qmcfb {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

namespace linalg {

inline Matrix symmetrized(const Matrix& x) { return 0.5 * (x + x.transpose()); }

/// Largest singular value.
inline double spectral_norm(const Matrix& x) {
    if (x.size() == 0) return 0.0;
    if (x.rows() <= x.cols()) {
        Eigen::SelfAdjointEigenSolver<Matrix> es(x * x.transpose(), Eigen::EigenvaluesOnly);
        return std::sqrt(std::max(0.0, es.eigenvalues().maxCoeff()));
    }
    Eigen::SelfAdjointEigenSolver<Matrix> es(x.transpose() * x, Eigen::EigenvaluesOnly);
    return std::sqrt(std::max(0.0, es.eigenvalues().maxCoeff()));
}

inline double min_eigenvalue(const Matrix& sym) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(symmetrized(sym), Eigen::EigenvaluesOnly);
    return es.eigenvalues().minCoeff();
}

inline double max_eigenvalue(const Matrix& sym) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(symmetrized(sym), Eigen::EigenvaluesOnly);
    return es.eigenvalues().maxCoeff();
}

/**
 * Solves the Sylvester equation  A X + X B = C  by the Bartels-Stewart
 * method on complex Schur forms of A and B.
 *
 * Throws SolverError when A and -B share an eigenvalue (to working precision).
 */
inline Matrix solve_sylvester(const Matrix& a, const Matrix& b, const Matrix& c) {
    using Complex = std::complex<double>;
    using CMatrix = Eigen::MatrixXcd;
    const Eigen::Index n = a.rows();
    const Eigen::Index m = b.rows();
    if (a.cols() != n || b.cols() != m || c.rows() != n || c.cols() != m) {
        throw ContractError("solve_sylvester: shape mismatch");
    }
    Eigen::ComplexSchur<CMatrix> sa(a.cast<Complex>());
    Eigen::ComplexSchur<CMatrix> sb(b.cast<Complex>());
    const CMatrix& ta = sa.matrixT();
    const CMatrix& ua = sa.matrixU();
    const CMatrix& tb = sb.matrixT();
    const CMatrix& ub = sb.matrixU();

    // T_A Y + Y T_B = U_A^* C U_B, T_A and T_B upper triangular.
    CMatrix f = ua.adjoint() * c.cast<Complex>() * ub;
    CMatrix y(n, m);
    const double scale = ta.cwiseAbs().maxCoeff() + tb.cwiseAbs().maxCoeff() + 1e-300;
    for (Eigen::Index j = 0; j < m; ++j) {
        Eigen::VectorXcd rhs = f.col(j);
        if (j > 0) rhs.noalias() -= y.leftCols(j) * tb.col(j).head(j);
        for (Eigen::Index i = n - 1; i >= 0; --i) {
            Complex acc = rhs(i);
            for (Eigen::Index k = i + 1; k < n; ++k) acc -= ta(i, k) * y(k, j);
            const Complex diag = ta(i, i) + tb(j, j);
            if (std::abs(diag) <= 1e-14 * scale) {
                throw SolverError("solve_sylvester: spectra of A and -B intersect");
            }
            y(i, j) = acc / diag;
        }
    }
    return (ua * y * ub.adjoint()).real();
}

/**
 * Factorization for repeated solves of  M^T E + E M = C.
 *
 * With the complex Schur form M = V T V^*, the substitution E = conj(V) Y V^*
 * gives T^T Y + Y T = V^T C V, solved column by column with T^T lower triangular.
 */
class TransposedLyapunov {
public:
    using Complex = std::complex<double>;
    using CMatrix = Eigen::MatrixXcd;

    explicit TransposedLyapunov(const Matrix& mat) {
        if (mat.rows() != mat.cols()) throw ContractError("TransposedLyapunov: matrix not square");
        Eigen::ComplexSchur<CMatrix> schur(mat.cast<Complex>());
        t_ = schur.matrixT();
        v_ = schur.matrixU();
        const double scale = 2.0 * t_.cwiseAbs().maxCoeff() + 1e-300;
        const Eigen::Index n = t_.rows();
        for (Eigen::Index i = 0; i < n; ++i)
            for (Eigen::Index j = 0; j < n; ++j)
                if (std::abs(t_(i, i) + t_(j, j)) <= 1e-14 * scale)
                    throw SolverError("TransposedLyapunov: singular Lyapunov operator");
    }

    Matrix solve(const Matrix& c) const {
        const Eigen::Index n = t_.rows();
        if (c.rows() != n || c.cols() != n) throw ContractError("TransposedLyapunov: shape mismatch");
        CMatrix y = v_.transpose() * c.cast<Complex>() * v_;
        for (Eigen::Index j = 0; j < n; ++j) {
            if (j > 0) y.col(j).noalias() -= y.leftCols(j) * t_.col(j).head(j);
            // (T^T + t_jj I) y_j = rhs by forward substitution; (T^T)(i,k) = t(k,i).
            for (Eigen::Index i = 0; i < n; ++i) {
                Complex acc = y(i, j);
                if (i > 0) acc -= t_.col(i).head(i).cwiseProduct(y.col(j).head(i)).sum();
                y(i, j) = acc / (t_(i, i) + t_(j, j));
            }
        }
        return (v_.conjugate() * y * v_.adjoint()).real();
    }

private:
    CMatrix t_;
    CMatrix v_;
};

/// Solves  M^T E + E M = C  (single use of TransposedLyapunov).
inline Matrix solve_transposed_lyapunov(const Matrix& mat, const Matrix& c) {
    if (mat.rows() != c.rows() || c.rows() != c.cols()) throw ContractError("solve_transposed_lyapunov: shape mismatch");
    return TransposedLyapunov(mat).solve(c);
}

}  // namespace linalg
}  // namespace qmcfb
