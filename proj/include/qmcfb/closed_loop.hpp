#pragma once

#include <sstream>
#include <vector>

#include <Eigen/LU>

#include "qmcfb/errors.hpp"
#include "qmcfb/feedback_distance.hpp"
#include "qmcfb/riccati.hpp"
#include "qmcfb/spatial_model.hpp"

namespace qmcfb {

struct Trajectory {
    std::vector<Vector> ys;
    std::vector<Vector> us;
    TimeGrid grid;
};

/**
 * Implicit Euler under u = K (y - g) + kappa:
 *   (I - dt (A + B K_{k+1})) y_{k+1} = y_k + dt (B (kappa_{k+1} - K_{k+1} g_{k+1}) + f_{k+1}).
 * With g = 0 this is the plain law u = K y + kappa.
 */
inline Trajectory simulate(const OperatorFamily& fam, std::span<const double> sigma, const FeedbackLaw& law,
                           const ProblemData& data, const TimeGrid& grid) {
    if (!(law.grid == grid)) throw ContractError("simulate: feedback law on a different time grid");
    const Matrix A = evaluate_operator(fam, sigma);
    const int n = fam.n();
    const double dt = grid.dt();
    const Matrix I = Matrix::Identity(n, n);
    const Matrix& B = fam.Bmat;

    Trajectory out{{}, {}, grid};
    out.ys.reserve(grid.nt() + 1);
    out.ys.push_back(data.y0);
    for (int k = 0; k < grid.nt(); ++k) {
        const double t1 = grid.t(k + 1);
        const Matrix& K = law.gains[k + 1];
        Eigen::PartialPivLU<Matrix> lu(I - dt * (A + B * K));
        if (!(lu.rcond() > 1e-14)) {
            std::ostringstream msg;
            msg << "simulate: singular closed-loop step at k=" << k << " (dt " << dt << "); reduce dt";
            throw SolverError(msg.str());
        }
        const Vector rhs = out.ys.back() + dt * (B * (law.offsets[k + 1] - K * data.g(t1)) + data.f(t1));
        out.ys.push_back(lu.solve(rhs));
    }
    out.us.reserve(grid.nt() + 1);
    for (int k = 0; k <= grid.nt(); ++k) {
        out.us.push_back(law.gains[k] * (out.ys[k] - data.g(grid.t(k))) + law.offsets[k]);
    }
    return out;
}

struct PropagationRow {
    int sigma_id = 0;
    double eps_fb = 0.0;
    double eps_y = 0.0;
    double eps_u = 0.0;
    double ratio_y = 0.0;
    double ratio_u = 0.0;
};

/// Trajectory and control deviations caused by replacing law_exact with law_hat.
inline PropagationRow propagation_row(const OperatorFamily& fam, const ProblemData& data, const TimeGrid& grid,
                                      std::span<const double> sigma, const FeedbackLaw& law_exact,
                                      const FeedbackLaw& law_hat, int id = 0) {
    const Trajectory a = simulate(fam, sigma, law_exact, data, grid);
    const Trajectory b = simulate(fam, sigma, law_hat, data, grid);
    PropagationRow row;
    row.sigma_id = id;
    row.eps_fb = feedback_distance(law_exact, law_hat);
    for (int k = 0; k <= grid.nt(); ++k) {
        row.eps_y = std::max(row.eps_y, fam.grid.norm(a.ys[k] - b.ys[k]));
        row.eps_u = std::max(row.eps_u, (a.us[k] - b.us[k]).norm());
    }
    row.ratio_y = row.eps_fb > 0.0 ? row.eps_y / row.eps_fb : 0.0;
    row.ratio_u = row.eps_fb > 0.0 ? row.eps_u / row.eps_fb : 0.0;
    return row;
}

/**
 * One row per evaluation point. `exact` and `hat` hold either one law shared by
 * all points or one law per point.
 */
inline std::vector<PropagationRow> propagation_study(const OperatorFamily& fam, const ProblemData& data,
                                                     const TimeGrid& grid,
                                                     const std::vector<std::vector<double>>& sigmas,
                                                     const std::vector<FeedbackLaw>& exact,
                                                     const std::vector<FeedbackLaw>& hat) {
    auto pick = [&](const std::vector<FeedbackLaw>& laws, std::size_t i) -> const FeedbackLaw& {
        if (laws.size() == 1) return laws.front();
        if (laws.size() != sigmas.size()) throw ContractError("propagation_study: law count does not match points");
        return laws[i];
    };
    std::vector<PropagationRow> rows;
    rows.reserve(sigmas.size());
    for (std::size_t i = 0; i < sigmas.size(); ++i) {
        rows.push_back(propagation_row(fam, data, grid, sigmas[i], pick(exact, i), pick(hat, i), static_cast<int>(i)));
    }
    return rows;
}

}  // namespace qmcfb
