#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "qmcfb/averaging.hpp"
#include "qmcfb/lq_oracle.hpp"

using namespace qmcfb;

namespace {

ModelConfig cfg(int n, int nt) {
    ModelConfig c;
    c.n = n;
    c.nt = nt;
    return c;
}

// implicit Euler under prescribed controls: (I - dt A) y_{k+1} = y_k + dt (B u_k + f_{k+1})
std::vector<Vector> forward(const OperatorFamily& fam, const ProblemData& data, const Matrix& A,
                            const std::vector<Vector>& us, const TimeGrid& grid) {
    const double dt = grid.dt();
    Eigen::PartialPivLU<Matrix> lu(Matrix::Identity(fam.n(), fam.n()) - dt * A);
    std::vector<Vector> ys{data.y0};
    for (int k = 0; k < grid.nt(); ++k) ys.push_back(lu.solve(ys.back() + dt * (fam.Bmat * us[k] + data.f(grid.t(k + 1)))));
    return ys;
}

}  // namespace

TEST(ComputeCost, Degenerate) {
    ModelConfig c = cfg(8, 4);
    c.scenario = Scenario::tracking;
    const Model m = build_model(c);
    const TimeGrid grid(1.0, 4);
    std::vector<Vector> ys, us(5, Vector::Zero(2));
    for (int k = 0; k <= 4; ++k) ys.push_back(m.data.g(grid.t(k)));
    EXPECT_EQ(compute_cost(ys, us, m.data, m.fam, grid), 0.0);

    OperatorFamily fam = m.fam;
    fam.q_obs = 0.0;
    ys.back() = m.data.gT + Vector::Ones(8);
    EXPECT_NEAR(compute_cost(ys, us, m.data, fam, grid), 0.5 * 0.01 * fam.grid.inner(Vector::Ones(8), Vector::Ones(8)), 1e-16);
    ys.pop_back();
    EXPECT_THROW(compute_cost(ys, us, m.data, fam, grid), ContractError);
}

TEST(Oracle, ZeroData) {
    Model m = build_model(cfg(12, 10));
    m.data.y0.setZero();
    const OptimalitySolution sol = solve_open_loop(m.fam, m.data, std::vector<double>{0.1}, TimeGrid(1.0, 10));
    for (const auto& y : sol.ys) EXPECT_TRUE(y.isZero(0.0));
    for (const auto& q : sol.qs) EXPECT_TRUE(q.isZero(0.0));
    for (const auto& u : sol.us) EXPECT_TRUE(u.isZero(0.0));
    EXPECT_EQ(sol.cost, 0.0);
}

TEST(Oracle, NoTrackingIncentive) {
    ModelConfig c = cfg(12, 10);
    c.q_obs = 0.0;
    c.p_ter = 0.0;
    const Model m = build_model(c);
    const TimeGrid grid(1.0, 10);
    const std::vector<double> sigma{0.2, -0.3};
    const OptimalitySolution sol = solve_open_loop(m.fam, m.data, sigma, grid);
    for (const auto& u : sol.us) EXPECT_TRUE(u.isZero(0.0));
    const auto free = forward(m.fam, m.data, evaluate_operator(m.fam, sigma), sol.us, grid);
    for (int k = 0; k <= 10; ++k) EXPECT_LE((sol.ys[k] - free[k]).norm(), 1e-13);
}

TEST(Oracle, KktResidualAndStateConsistency) {
    ModelConfig c = cfg(24, 20);
    c.scenario = Scenario::tracking;
    const Model m = build_model(c);
    const TimeGrid grid(1.0, 20);
    const std::vector<double> sigma{0.4, -0.1, 0.3};
    const OptimalitySolution sol = solve_open_loop(m.fam, m.data, sigma, grid);
    EXPECT_LE(sol.kkt_residual, 1e-10);
    const auto ys = forward(m.fam, m.data, evaluate_operator(m.fam, sigma), sol.us, grid);
    for (int k = 0; k <= 20; ++k) EXPECT_LE((ys[k] - sol.ys[k]).norm(), 1e-10 * (1 + ys[k].norm()));
}

TEST(Oracle, Convexity) {
    for (Scenario sc : {Scenario::homogeneous, Scenario::tracking}) {
        ModelConfig c = cfg(16, 16);
        c.scenario = sc;
        const Model m = build_model(c);
        const TimeGrid grid(1.0, 16);
        const std::vector<double> sigma{-0.2, 0.1};
        const Matrix A = evaluate_operator(m.fam, sigma);
        const OptimalitySolution sol = solve_open_loop(m.fam, m.data, sigma, grid);
        CounterRng rng(77);
        for (int trial = 0; trial < 10; ++trial) {
            std::vector<Vector> du(17, Vector(m.fam.m()));
            for (auto& v : du)
                for (auto& x : v) x = rng.next_unit() - 0.5;
            for (double eps : {1e-2, 1e-1}) {
                std::vector<Vector> us = sol.us;
                for (int k = 0; k <= 16; ++k) us[k] += eps * du[k];
                const double j = compute_cost(forward(m.fam, m.data, A, us, grid), us, m.data, m.fam, grid);
                EXPECT_GE(j, sol.cost);
            }
        }
    }
}

TEST(Oracle, CostIdentityAndFeedbackEquivalence) {
    std::vector<double> cost_err, fb_err, hs;
    for (int n : {32, 64}) {
        const Model m = build_model(cfg(n, n));
        const TimeGrid grid(1.0, n);
        const std::vector<double> sigma(4, 0.0);
        const OptimalitySolution orc = solve_open_loop(m.fam, m.data, sigma, grid);
        const ParametricSolution sol = solve_parametric(m.fam, m.data, sigma, grid);
        cost_err.push_back(std::abs(optimal_cost_homogeneous(sol.ric, m.data.y0, m.fam.grid) - orc.cost) / orc.cost);
        double worst = 0.0, umax = 0.0;
        for (int k = 0; k <= n; ++k) {
            worst = std::max(worst, (orc.us[k] - sol.law.gains[k] * orc.ys[k]).norm());
            umax = std::max(umax, orc.us[k].norm());
        }
        fb_err.push_back(worst / umax);
        hs.push_back(1.0 / n);
    }
    EXPECT_LE(cost_err[1], 1e-2);
    EXPECT_GE(cost_err[0] / cost_err[1], 1.5);
    EXPECT_LE(fb_err[1], 5e-2);
    EXPECT_GE(loglog_slope(hs, fb_err), 0.8);
}
