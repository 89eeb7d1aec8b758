#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <numbers>
#include <string>
#include <vector>

#include "qmcfb/averaging.hpp"
#include "qmcfb/closed_loop.hpp"
#include "qmcfb/config.hpp"
#include "qmcfb/csv.hpp"
#include "qmcfb/lq_oracle.hpp"
#include "qmcfb/qmc.hpp"
#include "qmcfb/riccati.hpp"

namespace qmcfb {

/// Process-level settings that are not part of the hashed experiment config.
struct RunContext {
    int threads = 0;
    std::filesystem::path cache_dir = "cache";
    bool use_cache = true;
};

inline TimeGrid time_grid(const ModelConfig& m) { return TimeGrid(m.T, m.nt); }

/// Point set in [-1/2,1/2]^s for the `points` study and subcommand.
inline qmc::QmcPointSet make_points(const std::string& method, std::int64_t N, int s, int alpha, std::uint64_t seed,
                                    const std::vector<double>& bseq) {
    if (static_cast<int>(bseq.size()) < s) throw ValidationError("points: weight sequence shorter than s");
    const std::vector<double> b(bseq.begin(), bseq.begin() + s);
    if (method == "mc") return qmc::mc_points(static_cast<std::size_t>(N), static_cast<std::size_t>(s), seed);
    if (method == "interlaced") {
        if (N < 4 || (N & (N - 1)) != 0) throw ValidationError("points: interlaced rules need N = 2^m");
        const int m = std::countr_zero(static_cast<std::uint64_t>(N));
        const qmc::WeightSpec w = alpha == 1 ? qmc::WeightSpec::pod(b) : qmc::WeightSpec::spod(b, alpha);
        return qmc::to_symmetric(qmc::interlaced_point_set(qmc::cbc_interlaced(m, s, alpha, w)));
    }
    const qmc::LatticeRule rule = qmc::cbc_lattice(N, s, qmc::WeightSpec::pod(b));
    if (method == "lattice") return qmc::to_symmetric(qmc::lattice_points(rule));
    if (method == "shifted") return qmc::to_symmetric(qmc::random_shift(rule, seed));
    if (method == "folded") return qmc::to_symmetric(qmc::tent_fold(qmc::lattice_points(rule)));
    throw ValidationError("points: unknown method '" + method + "'");
}

inline csv::Table points_table(const qmc::QmcPointSet& ps) {
    std::vector<std::string> header{"k"};
    for (std::size_t j = 1; j <= ps.s; ++j) header.push_back("x" + std::to_string(j));
    csv::Table t(header);
    t.comment(ps.describe());
    for (std::size_t k = 0; k < ps.N; ++k) {
        std::vector<std::string> cells{std::to_string(k)};
        for (std::size_t j = 0; j < ps.s; ++j) cells.push_back(csv::num(ps(k, j)));
        t.push(std::move(cells));
    }
    return t;
}

/// Per time node: norms, PSD margin, symmetry defect and DRE residual of Pi at sigma.
inline csv::Table riccati_table(const Model& model, const TimeGrid& grid, const std::vector<double>& sigma, bool full) {
    const Matrix A = evaluate_operator(model.fam, sigma);
    const RiccatiTrajectory ric = solve_riccati(A, model.fam, grid);
    const int n = model.fam.n();
    std::vector<std::string> header{"k", "t", "fro_norm", "min_eig", "max_eig", "sym_defect", "dre_residual"};
    if (full)
        for (int i = 1; i <= n; ++i)
            for (int j = 1; j <= n; ++j) header.push_back("p_" + std::to_string(i) + "_" + std::to_string(j));
    csv::Table t(header);
    for (int k = 0; k <= grid.nt(); ++k) {
        const Matrix& P = ric.Pis[static_cast<std::size_t>(k)];
        std::vector<std::string> cells{std::to_string(k), csv::num(grid.t(k)), csv::num(P.norm()),
                                       csv::num(linalg::min_eigenvalue(P)), csv::num(linalg::max_eigenvalue(P)),
                                       csv::num((P - P.transpose()).norm() / std::max(1e-300, P.norm())),
                                       k == 0 ? "nan" : csv::num(dre_step_residual(A, model.fam, ric, k - 1))};
        if (full)
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < n; ++j) cells.push_back(csv::num(P(i, j)));
        t.push(std::move(cells));
    }
    return t;
}

struct OracleComparison {
    int n = 0;
    int nt = 0;
    double cost_feedback = 0.0;
    double cost_oracle = 0.0;
    double cost_rel = 0.0;
    /// sup_k |u_k - (K_k (y_k - g_k) + kappa_k)| / max_k |u_k|
    double feedback_rel = 0.0;
    /// |h(0) - (-(q_0 + Pi(T) x0))| / |h(0)|, tracking only
    double offset_rel = std::numeric_limits<double>::quiet_NaN();
};

/// Riccati feedback against the all-at-once oracle for one model at sigma.
inline OracleComparison compare_with_oracle(const ModelConfig& cfg, const std::vector<double>& sigma) {
    const Model model = build_model(cfg);
    const TimeGrid grid = time_grid(cfg);
    const ParametricSolution sol = solve_parametric(model.fam, model.data, sigma, grid);
    const OptimalitySolution orc = solve_open_loop(model.fam, model.data, sigma, grid);
    OracleComparison out;
    out.n = cfg.n;
    out.nt = cfg.nt;
    out.cost_feedback = node_cost(model.fam, model.data, sol);
    out.cost_oracle = orc.cost;
    out.cost_rel = std::abs(out.cost_feedback - orc.cost) / std::abs(orc.cost);
    double worst = 0.0, umax = 0.0;
    for (int k = 0; k <= grid.nt(); ++k) {
        const Vector& u = orc.us[static_cast<std::size_t>(k)];
        const Vector fb = sol.law.gains[static_cast<std::size_t>(k)] * (orc.ys[static_cast<std::size_t>(k)] - model.data.g(grid.t(k))) +
                          sol.law.offsets[static_cast<std::size_t>(k)];
        worst = std::max(worst, (u - fb).norm());
        umax = std::max(umax, u.norm());
    }
    out.feedback_rel = worst / umax;
    if (cfg.scenario == Scenario::tracking) {
        const Vector x0 = model.data.y0 - model.data.g(0.0);
        const Vector h0 = -(orc.qs.front() + sol.ric.Pis.back() * x0);
        out.offset_rel = (h0 - sol.off.hs.front()).norm() / sol.off.hs.front().norm();
    }
    return out;
}

inline csv::Table oracle_table(const ModelConfig& cfg, int levels) {
    csv::Table t({"n", "nt", "cost_feedback", "cost_oracle", "cost_rel", "feedback_rel", "offset_rel"});
    ModelConfig c = cfg;
    const std::vector<double> sigma(static_cast<std::size_t>(std::min(4, cfg.smax)), 0.0);
    for (int l = 0; l < levels; ++l) {
        const OracleComparison r = compare_with_oracle(c, sigma);
        t.row(r.n, r.nt, r.cost_feedback, r.cost_oracle, r.cost_rel, r.feedback_rel, r.offset_rel);
        c.n *= 2;
        c.nt *= 2;
    }
    return t;
}

inline QmcMethod parse_method(const std::string& m) {
    if (m == "shifted" || m == "lattice") return QmcMethod::shifted;
    if (m == "folded") return QmcMethod::folded;
    if (m == "interlaced") return QmcMethod::interlaced;
    if (m == "mc") return QmcMethod::mc;
    throw ValidationError("unknown qmc method '" + m + "'");
}

/// Reference mean for the rate studies, loaded from or stored to the cache directory.
inline FeedbackEnsembleStats cached_reference(const ExperimentConfig& cfg, const Model& model, const TimeGrid& grid,
                                              const RunContext& ctx) {
    const std::string key = reference_key(cfg.model, cfg.qmc.s, cfg.qmc.m_ref, cfg.qmc.alpha_ref);
    if (ctx.use_cache)
        if (auto hit = cache::load(ctx.cache_dir, key)) return *hit;
    FeedbackEnsembleStats ref = reference_mean(model.fam, model.data, grid, cfg.qmc.s, cfg.qmc.m_ref, cfg.qmc.alpha_ref,
                                               AveragingOptions{ctx.threads, 64});
    if (ctx.use_cache) cache::save(ctx.cache_dir, key, ref);
    return ref;
}

inline csv::Table rate_table(const ExperimentConfig& cfg, QmcMethod method, const RunContext& ctx) {
    const Model model = build_model(cfg.model);
    const TimeGrid grid = time_grid(cfg.model);
    const FeedbackEnsembleStats ref = cached_reference(cfg, model, grid, ctx);
    RateOptions opts;
    opts.R = (method == QmcMethod::shifted || method == QmcMethod::mc) ? cfg.qmc.R : 1;
    opts.seed = cfg.qmc.seed;
    opts.alpha = cfg.qmc.alpha;
    opts.avg.threads = ctx.threads;
    const RateResult res = qmc_rate_study(model.fam, model.data, grid, cfg.qmc.s, cfg.qmc.N_list, method, ref, opts);
    csv::Table t({"N", "error", "slope_running", "cost_error"});
    t.comment(std::string("method=") + method_name(method) + ",R=" + std::to_string(opts.R) + ",s=" + std::to_string(cfg.qmc.s));
    for (const auto& r : res.rows) t.row(static_cast<long long>(r.N), r.rms_fb, r.slope_running, r.rms_cost);
    t.comment("slope_error=" + csv::num(res.slope_fb) + ",slope_cost=" + csv::num(res.slope_cost));
    return t;
}

inline csv::Table truncation_table(const ExperimentConfig& cfg, const RunContext& ctx) {
    const Model model = build_model(cfg.model);
    const TimeGrid grid = time_grid(cfg.model);
    const CubatureRule rule = centered_lattice_rule(cfg.truncation.N, cfg.truncation.s_ref, leading_bseq(model.fam, cfg.truncation.s_ref));
    const TruncationResult res = truncation_study(model.fam, model.data, grid, cfg.truncation.s_list, cfg.truncation.s_ref,
                                                  rule, AveragingOptions{ctx.threads, 64});
    csv::Table t({"s", "error", "slope_running", "corner_error"});
    std::vector<double> xs, ys;
    for (const auto& r : res.rows) {
        xs.push_back(r.s);
        ys.push_back(r.error);
        t.row(r.s, r.error, loglog_slope(xs, ys), r.corner_error);
    }
    t.comment("slope=" + csv::num(res.slope) + ",corner_monotone=" + (res.corner_monotone ? "1" : "0"));
    return t;
}

/// Constant-in-time gain perturbation c * e_1 w^T with |e_1 w^T|_{H->U} = 1.
inline FeedbackLaw perturb_gain(const FeedbackLaw& law, const SpatialGrid& grid, double c) {
    Vector w = grid.sample([](double x) { return std::sin(std::numbers::pi * x); });
    w *= std::sqrt(grid.hx()) / w.norm();
    FeedbackLaw out = law;
    for (auto& K : out.gains) K.row(0) += c * w.transpose();
    return out;
}

/// Random evaluation points in [-1/2,1/2]^smax from stream `seed`.
inline std::vector<std::vector<double>> random_sigmas(int count, int smax, std::uint64_t seed) {
    const qmc::QmcPointSet ps = qmc::mc_points(static_cast<std::size_t>(count), static_cast<std::size_t>(smax), seed);
    std::vector<std::vector<double>> out;
    for (std::size_t k = 0; k < ps.N; ++k) out.emplace_back(ps.row(k).begin(), ps.row(k).end());
    return out;
}

/// Mean feedback over the first point set of the qmc block (method, N_list[0], s, alpha, seed).
inline FeedbackLaw averaged_law(const ExperimentConfig& cfg, const Model& model, const TimeGrid& grid, const RunContext& ctx) {
    const int s = std::min(cfg.qmc.s, model.fam.smax());
    const CubatureRule rule = CubatureRule::equal_weight(
        make_points(cfg.qmc.method, cfg.qmc.N_list.front(), s, cfg.qmc.alpha, cfg.qmc.seed, model.fam.bseq));
    return average_feedback(rule, model.fam, model.data, grid, AveragingOptions{ctx.threads, 64}).law();
}

inline csv::Table propagation_table(const ExperimentConfig& cfg, const RunContext& ctx) {
    const Model model = build_model(cfg.model);
    const TimeGrid grid = time_grid(cfg.model);
    const auto sigmas = random_sigmas(cfg.propagation.points, model.fam.smax(), cfg.qmc.seed);
    std::vector<FeedbackLaw> exact;
    for (const auto& s : sigmas) exact.push_back(solve_parametric(model.fam, model.data, s, grid).law);
    csv::Table t({"variant", "sigma_id", "c", "eps_fb", "eps_y", "eps_u", "ratio_y", "ratio_u"});
    for (double c : cfg.propagation.c_list) {
        std::vector<FeedbackLaw> hat;
        for (const auto& law : exact) hat.push_back(perturb_gain(law, model.fam.grid, c));
        for (const auto& r : propagation_study(model.fam, model.data, grid, sigmas, exact, hat))
            t.push({"rank-one", std::to_string(r.sigma_id), csv::num(c), csv::num(r.eps_fb), csv::num(r.eps_y),
                    csv::num(r.eps_u), csv::num(r.ratio_y), csv::num(r.ratio_u)});
    }
    // averaged law applied to each realization (suboptimality of the parameter-free feedback)
    const FeedbackLaw avg = averaged_law(cfg, model, grid, ctx);
    for (const auto& r : propagation_study(model.fam, model.data, grid, sigmas, exact, {avg}))
        t.push({"averaged", std::to_string(r.sigma_id), "nan", csv::num(r.eps_fb), csv::num(r.eps_y), csv::num(r.eps_u),
                csv::num(r.ratio_y), csv::num(r.ratio_u)});
    return t;
}

inline csv::Table decay_table(const ExperimentConfig& cfg, const RunContext& ctx) {
    const Model model = build_model(cfg.model);
    const TimeGrid grid = time_grid(cfg.model);
    const auto rows = derivative_decay_study(model.fam, model.data, grid, cfg.decay.j_list, cfg.decay.delta, ctx.threads);
    csv::Table t({"j", "fd_gain", "fd_cost", "fd_pi", "ratio_gain", "ratio_cost", "ratio_pi", "bound"});
    for (const auto& r : rows) t.row(r.j, r.fd_gain, r.fd_cost, r.fd_pi, r.ratio_gain, r.ratio_cost, r.ratio_pi, r.bound);
    return t;
}

/// Dispatches the configured study and returns its table (without provenance comments).
inline csv::Table run_study(const ExperimentConfig& cfg, const RunContext& ctx) {
    build_model(cfg.model);  // validates the model before any long computation
    switch (cfg.study) {
        case StudyKind::riccati_check: {
            const Model model = build_model(cfg.model);
            return riccati_table(model, time_grid(cfg.model), std::vector<double>(static_cast<std::size_t>(cfg.model.smax), 0.0), false);
        }
        case StudyKind::oracle_check: return oracle_table(cfg.model, 2);
        case StudyKind::qmc_rate: return rate_table(cfg, parse_method(cfg.qmc.method), ctx);
        case StudyKind::mc_rate: return rate_table(cfg, QmcMethod::mc, ctx);
        case StudyKind::truncation: return truncation_table(cfg, ctx);
        case StudyKind::propagation: return propagation_table(cfg, ctx);
        case StudyKind::derivative_decay: return decay_table(cfg, ctx);
        case StudyKind::points: {
            const Model model = build_model(cfg.model);
            return points_table(make_points(cfg.qmc.method, cfg.qmc.N_list.front(), cfg.qmc.s, cfg.qmc.alpha, cfg.qmc.seed,
                                            model.fam.bseq));
        }
    }
    throw ValidationError("unhandled study kind");
}

}  // namespace qmcfb
