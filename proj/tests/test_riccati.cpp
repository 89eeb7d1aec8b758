#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "qmcfb/averaging.hpp"
#include "qmcfb/lq_oracle.hpp"
#include "qmcfb/riccati.hpp"

using namespace qmcfb;

namespace {

ModelConfig small(int n, int nt) {
    ModelConfig c;
    c.n = n;
    c.nt = nt;
    return c;
}

std::vector<double> random_sigma(CounterRng& rng, int s) {
    std::vector<double> sigma(static_cast<std::size_t>(s));
    for (auto& v : sigma) v = rng.next_unit() - 0.5;
    return sigma;
}

// x' = -c x^2 - 2x + q2, x(0) = x0, in closed form (roots r1 > 0 > r2)
double scalar_riccati(double c, double q2, double x0, double t) {
    const double disc = std::sqrt(4.0 + 4.0 * c * q2);
    const double r1 = (-2.0 + disc) / (2.0 * c);
    const double r2 = (-2.0 - disc) / (2.0 * c);
    const double K = (x0 - r1) / (x0 - r2);
    const double E = std::exp(-c * (r1 - r2) * t);
    return (r1 - r2 * K * E) / (1.0 - K * E);
}

}  // namespace

TEST(Linalg, SylvesterAndTransposedLyapunov) {
    CounterRng rng(1);
    Matrix a(6, 6), b(4, 4), c(6, 4), m(6, 6), d(6, 6);
    for (auto* x : {&a, &b, &c, &m, &d})
        for (Eigen::Index i = 0; i < x->size(); ++i) x->data()[i] = rng.next_unit() - 0.5;
    a.diagonal().array() += 3.0;
    b.diagonal().array() += 3.0;
    const Matrix x = linalg::solve_sylvester(a, b, c);
    EXPECT_LE((a * x + x * b - c).norm(), 1e-12);
    m.diagonal().array() += 2.0;
    const Matrix e = linalg::solve_transposed_lyapunov(m, d);
    EXPECT_LE((m.transpose() * e + e * m - d).norm(), 1e-12);
    EXPECT_THROW(linalg::solve_transposed_lyapunov(Matrix::Zero(3, 3), Matrix::Identity(3, 3)), SolverError);
    EXPECT_THROW(linalg::solve_sylvester(a, b, Matrix::Zero(3, 3)), ContractError);
}

TEST(TimeGrid, Construction) {
    const TimeGrid g(1.0, 64);
    EXPECT_DOUBLE_EQ(g.dt(), 1.0 / 64);
    EXPECT_EQ(g.t(64), 1.0);
    EXPECT_THROW(TimeGrid(0.0, 4), DomainError);
    EXPECT_THROW(TimeGrid(1.0, 1), DomainError);
}

TEST(Riccati, NoDynamicsNoControl) {
    Model model = build_model(small(8, 20));
    model.fam.Bmat.setZero();
    model.fam.q_obs = 0.7;
    model.fam.p_ter = 0.3;
    const TimeGrid grid(2.0, 20);
    const RiccatiTrajectory ric = solve_riccati(Matrix::Zero(8, 8), model.fam, grid);
    for (int k = 0; k <= 20; ++k) {
        const double expect = 0.09 + grid.t(k) * 0.49;
        EXPECT_LE((ric.Pis[k] - expect * Matrix::Identity(8, 8)).cwiseAbs().maxCoeff(), 1e-12);
    }
}

TEST(Riccati, DecoupledScalarAgainstClosedForm) {
    // A = -I, B = I on two nodes: each diagonal entry solves x' = -hx x^2 - 2x + 1.
    Model model = build_model(small(2, 4));
    model.fam.Bmat = Matrix::Identity(2, 2);
    model.fam.q_obs = 1.0;
    model.fam.p_ter = 0.0;
    const Matrix A = -Matrix::Identity(2, 2);
    auto pi_T = [&](int nt) { return solve_riccati(A, model.fam, TimeGrid(1.0, nt)).Pis.back()(0, 0); };
    const double richardson = 2.0 * pi_T(4000) - pi_T(2000);
    EXPECT_NEAR(richardson, scalar_riccati(model.fam.hx(), 1.0, 0.0, 1.0), 1e-6);
    EXPECT_NEAR(pi_T(4000), scalar_riccati(model.fam.hx(), 1.0, 0.0, 1.0), 1e-4);
}

TEST(Riccati, SymmetricPsdAndSmallResidual) {
    const Model model = build_model(small(16, 32));
    const TimeGrid grid(1.0, 32);
    CounterRng rng(50);
    for (int trial = 0; trial < 50; ++trial) {
        const Matrix A = evaluate_operator(model.fam, random_sigma(rng, 16));
        const RiccatiTrajectory ric = solve_riccati(A, model.fam, grid);
        for (int k = 0; k <= grid.nt(); ++k) {
            const Matrix& P = ric.Pis[k];
            ASSERT_EQ(P, P.transpose());
            ASSERT_GE(linalg::min_eigenvalue(P), -1e-12 * P.norm());
            if (k < grid.nt()) ASSERT_LE(dre_step_residual(A, model.fam, ric, k), 1e-9);
        }
    }
}

TEST(Riccati, FirstOrderInTime) {
    const Model model = build_model(small(16, 32));
    std::vector<Matrix> finals;
    for (int nt : {32, 64, 128, 256, 512}) finals.push_back(solve_riccati(model.fam.A0, model.fam, TimeGrid(1.0, nt)).Pis.back());
    std::vector<double> dts, diffs;
    for (std::size_t i = 0; i + 1 < finals.size(); ++i) {
        dts.push_back(1.0 / (32 << i));
        diffs.push_back((finals[i] - finals[i + 1]).norm());
    }
    EXPECT_NEAR(loglog_slope(dts, diffs), 1.0, 0.2);
}

TEST(Riccati, HorizonConsistency) {
    const Model model = build_model(small(12, 32));
    const Matrix A = evaluate_operator(model.fam, std::vector<double>{0.3, -0.2});
    const RiccatiTrajectory full = solve_riccati(A, model.fam, TimeGrid(1.0, 32));
    const RiccatiTrajectory half = solve_riccati(A, model.fam, TimeGrid(0.5, 16));
    for (int k = 0; k <= 16; ++k) EXPECT_EQ(half.Pis[k], full.Pis[k]);
}

TEST(Riccati, ShapeMismatch) {
    const Model model = build_model(small(8, 4));
    EXPECT_THROW(solve_riccati(Matrix::Zero(5, 5), model.fam, TimeGrid(1.0, 4)), ContractError);
}

TEST(Riccati, DerivativeDecay) {
    ModelConfig c = small(16, 16);
    c.a0 = 0.2;
    c.cbar = 0.1;
    const Model model = build_model(c);
    const TimeGrid grid(1.0, 16);
    auto D = [&](int j) {
        std::vector<double> plus(16, 0.0), minus(16, 0.0);
        plus[j - 1] = 1e-3;
        minus[j - 1] = -1e-3;
        const Matrix a = solve_riccati(evaluate_operator(model.fam, plus), model.fam, grid).Pis.back();
        const Matrix b = solve_riccati(evaluate_operator(model.fam, minus), model.fam, grid).Pis.back();
        return linalg::spectral_norm(a - b) / 2e-3;
    };
    const double d1 = D(1);
    for (int j : {2, 4, 8, 16}) EXPECT_LE(D(j) / d1, 2.0 * model.fam.bseq[j - 1] / model.fam.bseq[0]) << "j=" << j;
}

TEST(Offset, ZeroForcingGivesZero) {
    const Model model = build_model(small(10, 16));
    const TimeGrid grid(1.0, 16);
    const ParametricSolution sol = solve_parametric(model.fam, model.data, std::vector<double>{}, grid);
    for (const auto& h : solve_offset(sol.A, model.fam, sol.ric, model.data, grid).hs) EXPECT_TRUE(h.isZero(0.0));

    ModelConfig tc = small(10, 16);
    tc.scenario = Scenario::tracking;
    tc.q_obs = 0.0;
    tc.p_ter = 0.0;
    const Model tracking = build_model(tc);
    const ParametricSolution ts = solve_parametric(tracking.fam, tracking.data, std::vector<double>{}, grid);
    for (const auto& h : ts.off.hs) EXPECT_TRUE(h.isZero(0.0));
}

TEST(Offset, MatchesOracleAdjoint) {
    ModelConfig c = small(32, 32);
    c.scenario = Scenario::tracking;
    std::vector<double> errs;
    for (int n : {32, 64}) {
        c.n = c.nt = n;
        const Model model = build_model(c);
        const TimeGrid grid(1.0, n);
        const std::vector<double> sigma(4, 0.0);
        const ParametricSolution sol = solve_parametric(model.fam, model.data, sigma, grid);
        const OptimalitySolution orc = solve_open_loop(model.fam, model.data, sigma, grid);
        const Vector x0 = model.data.y0 - model.data.g(0.0);
        const Vector h0 = -(orc.qs.front() + sol.ric.Pis.back() * x0);
        errs.push_back((h0 - sol.off.hs.front()).norm() / sol.off.hs.front().norm());
    }
    EXPECT_LE(errs[1], 2e-2);
    EXPECT_LT(errs[1], errs[0]);
}

TEST(FeedbackLaw, IndexReversalAndOffsets) {
    const Model model = build_model(small(8, 8));
    const TimeGrid grid(1.0, 8);
    RiccatiTrajectory ric{std::vector<Matrix>(9, 0.5 * Matrix::Identity(8, 8)), grid};
    const FeedbackLaw law = feedback_from(ric, zero_offset(grid, 8), model.fam);
    for (int k = 0; k <= 8; ++k) {
        EXPECT_EQ(law.gains[k], law.gains[0]);
        EXPECT_TRUE(law.offsets[k].isZero(0.0));
    }
    const ParametricSolution sol = solve_parametric(model.fam, model.data, std::vector<double>{}, grid);
    EXPECT_TRUE(sol.law.gains[0].isApprox(-adjoint_control(model.fam) * sol.ric.Pis[8]));
    EXPECT_TRUE(sol.law.gains[8].isApprox(-adjoint_control(model.fam) * sol.ric.Pis[0]));
    EXPECT_THROW(feedback_from(ric, zero_offset(TimeGrid(1.0, 4), 8), model.fam), ContractError);
}

TEST(OptimalCost, Homogeneous) {
    const SpatialGrid sg(6);
    const TimeGrid grid(1.0, 4);
    RiccatiTrajectory ric{std::vector<Matrix>(5, 3.0 * Matrix::Identity(6, 6)), grid};
    const Vector y0 = Vector::LinSpaced(6, 1.0, 2.0);
    EXPECT_NEAR(optimal_cost_homogeneous(ric, y0, sg), 1.5 * sg.hx() * y0.squaredNorm(), 1e-14);
    EXPECT_EQ(optimal_cost_homogeneous(ric, Vector::Zero(6), sg), 0.0);
}

TEST(OptimalCost, Nonhomogeneous) {
    const Model model = build_model(small(10, 8));
    const TimeGrid grid(1.0, 8);
    const ParametricSolution sol = solve_parametric(model.fam, model.data, std::vector<double>{}, grid);
    const double hom = optimal_cost_homogeneous(sol.ric, model.data.y0, model.fam.grid);
    EXPECT_NEAR(optimal_cost_nonhomogeneous(sol.ric, sol.off, model.fam, model.data, sol.A, model.data.y0), hom, 1e-15);
    EXPECT_EQ(optimal_cost_nonhomogeneous(sol.ric, sol.off, model.fam, model.data, sol.A, Vector::Zero(10)), 0.0);
}

TEST(OptimalCost, TrackingAgainstOracle) {
    ModelConfig c = small(64, 64);
    c.scenario = Scenario::tracking;
    const Model model = build_model(c);
    const TimeGrid grid(1.0, 64);
    const std::vector<double> sigma(4, 0.0);
    const ParametricSolution sol = solve_parametric(model.fam, model.data, sigma, grid);
    const OptimalitySolution orc = solve_open_loop(model.fam, model.data, sigma, grid);
    const double j = optimal_cost_nonhomogeneous(sol.ric, sol.off, model.fam, model.data, sol.A,
                                                 model.data.y0 - model.data.g(0.0));
    EXPECT_LE(std::abs(j - orc.cost) / orc.cost, 2e-2);
}
