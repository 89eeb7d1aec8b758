#pragma once

#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/LU>

#include "qmcfb/errors.hpp"
#include "qmcfb/linalg.hpp"
#include "qmcfb/spatial_model.hpp"

namespace qmcfb {

class TimeGrid {
public:
    TimeGrid(double T, int nt) : T_(T), nt_(nt) {
        if (!(T > 0.0)) throw DomainError("TimeGrid: horizon must be positive");
        if (nt < 2) throw DomainError("TimeGrid: need nt >= 2, got " + std::to_string(nt));
        dt_ = T / static_cast<double>(nt);
    }

    double T() const { return T_; }
    int nt() const { return nt_; }
    double dt() const { return dt_; }
    /// t_k = k dt, with t_nt pinned to T.
    double t(int k) const { return k == nt_ ? T_ : k * dt_; }

    friend bool operator==(const TimeGrid&, const TimeGrid&) = default;

private:
    double T_;
    int nt_;
    double dt_;
};

struct RiccatiTrajectory {
    std::vector<Matrix> Pis;
    TimeGrid grid;
};

struct OffsetTrajectory {
    std::vector<Vector> hs;
    TimeGrid grid;
};

/// u(t_k) = gains[k] y + offsets[k]; gains[k] = -B^* Pi(T - t_k).
struct FeedbackLaw {
    std::vector<Matrix> gains;
    std::vector<Vector> offsets;
    TimeGrid grid;
    double hx = 1.0;
};

struct NewtonOptions {
    /// Stop as soon as ||R||_F <= target * (1 + ||Pi_k||_F).
    double target = 1e-14;
    /// Accept a stagnating iteration once ||R||_F <= accept * dt * (1 + ||Pi_k||_F).
    double accept = 1e-10;
    int max_iter = 30;
    /// Rebuild the Jacobian factorization when an iteration contracts the residual by less than this.
    double refresh_ratio = 0.1;
};

namespace detail {

inline Matrix control_gramian(const OperatorFamily& fam) { return fam.hx() * fam.Bmat * fam.Bmat.transpose(); }

}  // namespace detail

/**
 * Implicit Euler for  dPi/dt = Pi A + A^T Pi - Pi S Pi + q^2 I,  Pi(0) = p^2 I,
 * with S = B B^*. Each step is a Newton solve on
 *   R(X) = X - Pi_k - dt (X A + A^T X - X S X + q^2 I),
 * whose linearization is the Lyapunov-type equation M^T E + E M = -R(X),
 * M = I/2 - dt (A - S X).
 *
 * The Schur factorization of M is kept across iterations and steps while the
 * residual contracts by at least `refresh_ratio` per iteration; otherwise it is
 * rebuilt at the current iterate (a full Newton step).
 */
inline RiccatiTrajectory solve_riccati(const Matrix& A, const OperatorFamily& fam, const TimeGrid& grid,
                                       const NewtonOptions& opts = {}) {
    const Eigen::Index n = A.rows();
    if (A.cols() != n || n != fam.n()) throw ContractError("solve_riccati: operator shape does not match family");
    const double dt = grid.dt();
    const double q2 = fam.q_obs * fam.q_obs;
    const Matrix S = detail::control_gramian(fam);
    const Matrix I = Matrix::Identity(n, n);

    RiccatiTrajectory out{{}, grid};
    out.Pis.reserve(grid.nt() + 1);
    out.Pis.push_back(fam.p_ter * fam.p_ter * I);

    std::optional<linalg::TransposedLyapunov> jac;
    bool refresh = true;
    Matrix X, R;
    for (int k = 0; k < grid.nt(); ++k) {
        const Matrix& prev = out.Pis.back();
        const double scale = 1.0 + prev.norm();
        X = k > 0 ? Matrix(2.0 * prev - out.Pis[k - 1]) : prev;
        double last = std::numeric_limits<double>::infinity();
        for (int iter = 0;; ++iter) {
            R.noalias() = X * A;
            R += R.transpose().eval();
            R.noalias() -= (X * S) * X;
            R.diagonal().array() += q2;
            R = X - prev - dt * R;
            const double res = R.norm();
            if (res <= opts.target * scale) break;
            const bool stalled = res > 0.5 * last;
            if (stalled && res <= opts.accept * std::min(1.0, dt) * scale) break;
            if (iter >= opts.max_iter) {
                std::ostringstream msg;
                msg << "solve_riccati: Newton did not converge at step " << k + 1 << " of " << grid.nt()
                    << " (residual " << res << ", dt " << dt << ")";
                throw SolverError(msg.str());
            }
            if (res > opts.refresh_ratio * last) refresh = true;
            if (refresh) {
                jac.emplace(Matrix(0.5 * I - dt * (A - S * X)));
                refresh = false;
            }
            last = res;
            X += jac->solve(-R);
            X = linalg::symmetrized(X);
        }
        out.Pis.push_back(X);
    }
    return out;
}

/// |(Pi_{k+1} - Pi_k)/dt - RHS(Pi_{k+1})|_F / (1 + |Pi_{k+1}|_F) for step k -> k+1.
inline double dre_step_residual(const Matrix& A, const OperatorFamily& fam, const RiccatiTrajectory& ric, int k) {
    if (k < 0 || k >= ric.grid.nt()) throw ContractError("dre_step_residual: step index out of range");
    const Matrix& x = ric.Pis[static_cast<std::size_t>(k) + 1];
    const Matrix S = detail::control_gramian(fam);
    Matrix rhs = x * A + A.transpose() * x - x * S * x;
    rhs.diagonal().array() += fam.q_obs * fam.q_obs;
    const Matrix r = (x - ric.Pis[static_cast<std::size_t>(k)]) / ric.grid.dt() - rhs;
    return r.norm() / (1.0 + x.norm());
}

/**
 * Backward implicit Euler for the offset equation from h(T) = 0:
 *   (I - dt (A^T - Pi_{nt-k} S)) h_k = h_{k+1} + dt Pi_{nt-k} r(t_k).
 */
inline OffsetTrajectory solve_offset(const Matrix& A, const OperatorFamily& fam, const RiccatiTrajectory& ric,
                                     const ProblemData& data, const TimeGrid& grid) {
    if (!(ric.grid == grid)) throw ContractError("solve_offset: Riccati trajectory on a different time grid");
    const Eigen::Index n = A.rows();
    const int nt = grid.nt();
    const double dt = grid.dt();
    const Matrix S = detail::control_gramian(fam);
    const Matrix I = Matrix::Identity(n, n);

    OffsetTrajectory out{std::vector<Vector>(nt + 1), grid};
    out.hs[nt] = Vector::Zero(n);
    for (int k = nt - 1; k >= 0; --k) {
        const Matrix& pi = ric.Pis[nt - k];
        const Matrix step = I - dt * (A.transpose() - pi * S);
        Eigen::PartialPivLU<Matrix> lu(step);
        if (!(lu.rcond() > 1e-14)) {
            std::ostringstream msg;
            msg << "solve_offset: singular step matrix at k=" << k << " (dt " << dt << "); reduce dt";
            throw SolverError(msg.str());
        }
        const Vector rhs = out.hs[k + 1] + dt * (pi * forcing_r(fam, data, A, grid.t(k)));
        out.hs[k] = lu.solve(rhs);
    }
    return out;
}

inline FeedbackLaw feedback_from(const RiccatiTrajectory& ric, const OffsetTrajectory& off, const OperatorFamily& fam) {
    if (!(ric.grid == off.grid)) throw ContractError("feedback_from: trajectories on different time grids");
    const int nt = ric.grid.nt();
    if (static_cast<int>(ric.Pis.size()) != nt + 1 || static_cast<int>(off.hs.size()) != nt + 1) {
        throw ContractError("feedback_from: trajectory length does not match grid");
    }
    const Matrix Bstar = adjoint_control(fam);
    FeedbackLaw law{{}, {}, ric.grid, fam.hx()};
    law.gains.reserve(nt + 1);
    law.offsets.reserve(nt + 1);
    for (int k = 0; k <= nt; ++k) {
        law.gains.push_back(-Bstar * ric.Pis[nt - k]);
        law.offsets.push_back(-Bstar * off.hs[k]);
    }
    return law;
}

inline OffsetTrajectory zero_offset(const TimeGrid& grid, int n) {
    return OffsetTrajectory{std::vector<Vector>(grid.nt() + 1, Vector::Zero(n)), grid};
}

struct ParametricSolution {
    Matrix A;
    RiccatiTrajectory ric;
    OffsetTrajectory off;
    FeedbackLaw law;
};

/// Riccati (+ offset when tracking) solve and feedback law at one parameter value.
inline ParametricSolution solve_parametric(const OperatorFamily& fam, const ProblemData& data,
                                           std::span<const double> sigma, const TimeGrid& grid) {
    Matrix A = evaluate_operator(fam, sigma);
    RiccatiTrajectory ric = solve_riccati(A, fam, grid);
    OffsetTrajectory off = data.scenario == Scenario::tracking ? solve_offset(A, fam, ric, data, grid)
                                                               : zero_offset(grid, fam.n());
    FeedbackLaw law = feedback_from(ric, off, fam);
    return {std::move(A), std::move(ric), std::move(off), std::move(law)};
}

/// 1/2 <Pi(T) y0, y0>_H.
inline double optimal_cost_homogeneous(const RiccatiTrajectory& ric, const Vector& y0, const SpatialGrid& grid) {
    return 0.5 * grid.inner(ric.Pis.back() * y0, y0);
}

/**
 * 1/2 <Pi(T) x0, x0> + <h(0), x0> + int_0^T (<h, r> - 1/2 |B^* h|^2) dt
 * with left-endpoint quadrature; x0 = y0 - g(0).
 */
inline double optimal_cost_nonhomogeneous(const RiccatiTrajectory& ric, const OffsetTrajectory& off,
                                          const OperatorFamily& fam, const ProblemData& data, const Matrix& A,
                                          const Vector& x0) {
    const SpatialGrid& sg = fam.grid;
    const TimeGrid& grid = ric.grid;
    const Matrix Bstar = adjoint_control(fam);
    double cost = 0.5 * sg.inner(ric.Pis.back() * x0, x0) + sg.inner(off.hs[0], x0);
    for (int k = 0; k < grid.nt(); ++k) {
        const Vector& h = off.hs[k];
        const Vector r = forcing_r(fam, data, A, grid.t(k));
        cost += grid.dt() * (sg.inner(h, r) - 0.5 * (Bstar * h).squaredNorm());
    }
    return cost;
}

}  // namespace qmcfb
