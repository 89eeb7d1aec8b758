#pragma once

#include <sstream>
#include <vector>

#include <Eigen/Sparse>
#include <Eigen/SparseLU>

#include "qmcfb/errors.hpp"
#include "qmcfb/linalg.hpp"
#include "qmcfb/riccati.hpp"
#include "qmcfb/spatial_model.hpp"

namespace qmcfb {

struct OptimalitySolution {
    std::vector<Vector> ys;
    std::vector<Vector> qs;
    std::vector<Vector> us;
    double cost = 0.0;
    double kkt_residual = 0.0;
};

/**
 * J = 1/2 dt sum_{k<nt} (q^2 |y_k - g_k|_H^2 + |u_k|^2) + 1/2 p^2 |y_nt - g_T|_H^2.
 */
inline double compute_cost(const std::vector<Vector>& ys, const std::vector<Vector>& us, const ProblemData& data,
                           const OperatorFamily& fam, const TimeGrid& grid) {
    const int nt = grid.nt();
    if (static_cast<int>(ys.size()) != nt + 1 || static_cast<int>(us.size()) < nt) {
        throw ContractError("compute_cost: trajectory length does not match grid");
    }
    const SpatialGrid& sg = fam.grid;
    const double q2 = fam.q_obs * fam.q_obs;
    double running = 0.0;
    for (int k = 0; k < nt; ++k) {
        const Vector e = ys[k] - data.g(grid.t(k));
        running += q2 * sg.inner(e, e) + us[k].squaredNorm();
    }
    const Vector eT = ys[nt] - data.gT;
    return 0.5 * grid.dt() * running + 0.5 * fam.p_ter * fam.p_ter * sg.inner(eT, eT);
}

/**
 * All-at-once discrete optimality system. Unknowns y_1..y_nt and q_0..q_nt,
 * controls u_k = B^* q_k. The adjoint rows are the exact discrete adjoint of
 * the implicit-Euler state equation under the left-endpoint cost above, so the
 * returned controls minimize compute_cost over all discrete controls:
 *
 *   (I - dt A) y_{k+1} - y_k - dt S q_k       = dt f_{k+1}          k = 0..nt-1
 *   (I - dt A^T) q_k - q_{k+1} + dt q^2 y_{k+1} = dt q^2 g_{k+1}  k = 0..nt-2
 *   (I - dt A^T) q_{nt-1} - q_nt              = 0
 *   q_nt + p^2 y_nt                           = p^2 g_T
 */
inline OptimalitySolution solve_open_loop(const OperatorFamily& fam, const ProblemData& data,
                                          std::span<const double> sigma, const TimeGrid& grid) {
    const Matrix A = evaluate_operator(fam, sigma);
    const int n = fam.n();
    const int nt = grid.nt();
    const double dt = grid.dt();
    const double q2 = fam.q_obs * fam.q_obs;
    const double p2 = fam.p_ter * fam.p_ter;
    const Matrix S = detail::control_gramian(fam);

    // Column blocks: y_k (k=1..nt) at index (2k-1)n, q_k (k=0..nt) at index 2k n.
    auto ycol = [n](int k) { return (2 * k - 1) * n; };
    auto qcol = [n](int k) { return 2 * k * n; };
    const int dim = (2 * nt + 1) * n;

    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(static_cast<std::size_t>(nt) * (8 * n + 2 * S.nonZeros()));
    auto add_block = [&trip](int row, int col, const Matrix& blk) {
        for (Eigen::Index j = 0; j < blk.cols(); ++j)
            for (Eigen::Index i = 0; i < blk.rows(); ++i)
                if (blk(i, j) != 0.0) trip.emplace_back(row + static_cast<int>(i), col + static_cast<int>(j), blk(i, j));
    };
    auto add_diag = [&trip, n](int row, int col, double v) {
        if (v == 0.0) return;
        for (int i = 0; i < n; ++i) trip.emplace_back(row + i, col + i, v);
    };

    const Matrix I = Matrix::Identity(n, n);
    const Matrix stepA = I - dt * A;
    const Matrix stepAt = I - dt * A.transpose();
    const Matrix dtS = -dt * S;
    Vector rhs = Vector::Zero(dim);

    // State rows occupy row block 2k (k=0..nt-1); adjoint rows 2k+1 (k=0..nt-1); terminal row 2nt.
    for (int k = 0; k < nt; ++k) {
        const int row = 2 * k * n;
        add_block(row, ycol(k + 1), stepA);
        if (k > 0) add_diag(row, ycol(k), -1.0);
        add_block(row, qcol(k), dtS);
        rhs.segment(row, n) = dt * data.f(grid.t(k + 1));
        if (k == 0) rhs.segment(row, n) += data.y0;
    }
    for (int k = 0; k < nt; ++k) {
        const int row = (2 * k + 1) * n;
        add_block(row, qcol(k), stepAt);
        add_diag(row, qcol(k + 1), -1.0);
        if (k + 1 < nt) {
            add_diag(row, ycol(k + 1), dt * q2);
            rhs.segment(row, n) = dt * q2 * data.g(grid.t(k + 1));
        }
    }
    {
        const int row = 2 * nt * n;
        add_diag(row, qcol(nt), 1.0);
        add_diag(row, ycol(nt), p2);
        rhs.segment(row, n) = p2 * data.gT;
    }

    Eigen::SparseMatrix<double> K(dim, dim);
    K.setFromTriplets(trip.begin(), trip.end());
    K.makeCompressed();
    Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
    lu.compute(K);
    if (lu.info() != Eigen::Success) {
        throw SolverError("solve_open_loop: factorization failed: " + lu.lastErrorMessage());
    }
    const Vector sol = lu.solve(rhs);
    if (lu.info() != Eigen::Success) throw SolverError("solve_open_loop: back substitution failed");

    OptimalitySolution out;
    out.kkt_residual = (K * sol - rhs).norm() / std::max(1e-300, rhs.norm());
    if (!(out.kkt_residual <= 1e-8)) {
        std::ostringstream msg;
        msg << "solve_open_loop: KKT residual " << out.kkt_residual << " too large";
        throw SolverError(msg.str());
    }
    const Matrix Bstar = adjoint_control(fam);
    out.ys.reserve(nt + 1);
    out.ys.push_back(data.y0);
    for (int k = 1; k <= nt; ++k) out.ys.push_back(sol.segment(ycol(k), n));
    for (int k = 0; k <= nt; ++k) {
        out.qs.push_back(sol.segment(qcol(k), n));
        out.us.push_back(Bstar * out.qs.back());
    }
    out.cost = compute_cost(out.ys, out.us, data, fam, grid);
    return out;
}

}  // namespace qmcfb
