#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "qmcfb/errors.hpp"
#include "qmcfb/feedback_distance.hpp"
#include "qmcfb/parallel.hpp"
#include "qmcfb/qmc.hpp"
#include "qmcfb/riccati.hpp"
#include "qmcfb/spatial_model.hpp"

namespace qmcfb {

struct CubatureRule {
    qmc::QmcPointSet nodes;
    std::vector<double> weights;

    static CubatureRule equal_weight(qmc::QmcPointSet nodes) {
        if (!nodes.centered) nodes = qmc::to_symmetric(nodes);
        std::vector<double> w(nodes.N, 1.0 / static_cast<double>(nodes.N));
        return {std::move(nodes), std::move(w)};
    }

    std::size_t size() const { return nodes.N; }

    /// Neumaier-compensated sum of the weights.
    double weight_sum() const {
        double sum = 0.0, comp = 0.0;
        for (double w : weights) {
            const double t = sum + w;
            comp += std::abs(sum) >= std::abs(w) ? (sum - t) + w : (w - t) + sum;
            sum = t;
        }
        return sum + comp;
    }
    std::size_t dim() const { return nodes.s; }

    void validate() const {
        if (!nodes.centered) throw ContractError("CubatureRule: nodes must be in [-1/2,1/2]^s");
        if (weights.size() != nodes.N) throw ContractError("CubatureRule: weight count differs from node count");
        if (!(std::abs(weight_sum() - 1.0) <= 1e-14)) throw ContractError("CubatureRule: weights do not sum to 1");
    }
};

struct FeedbackEnsembleStats {
    std::vector<Matrix> mean_gain;
    std::vector<Vector> mean_offset;
    /// Cubature mean of the optimal cost over the nodes.
    double mean_cost = 0.0;
    TimeGrid grid{1.0, 2};
    double hx = 1.0;

    FeedbackLaw law() const { return FeedbackLaw{mean_gain, mean_offset, grid, hx}; }
};

struct AveragingOptions {
    int threads = 0;
    std::size_t chunk = 64;
};

/// Optimal cost at one parameter: 1/2<Pi(T)y0,y0> or its tracking counterpart with x0 = y0 - g(0).
inline double node_cost(const OperatorFamily& fam, const ProblemData& data, const ParametricSolution& sol) {
    if (data.scenario == Scenario::homogeneous) return optimal_cost_homogeneous(sol.ric, data.y0, fam.grid);
    const Vector x0 = data.y0 - data.g(0.0);
    return optimal_cost_nonhomogeneous(sol.ric, sol.off, fam, data, sol.A, x0);
}

/// Cubature average of the feedback law (and optimal cost) over the rule's nodes, truncated by (sigma_s, 0).
inline FeedbackEnsembleStats average_feedback(const CubatureRule& rule, const OperatorFamily& fam,
                                              const ProblemData& data, const TimeGrid& grid,
                                              const AveragingOptions& opts = {}) {
    rule.validate();
    if (static_cast<int>(rule.dim()) > fam.smax()) {
        throw DomainError("average_feedback: node dimension " + std::to_string(rule.dim()) + " exceeds smax " +
                          std::to_string(fam.smax()));
    }
    const int nt = grid.nt();
    const int m = fam.m();
    const int n = fam.n();
    struct Acc {
        std::vector<Matrix> K;
        std::vector<Vector> kap;
        double J = 0.0;
    };
    auto make = [&] {
        return Acc{std::vector<Matrix>(nt + 1, Matrix::Zero(m, n)), std::vector<Vector>(nt + 1, Vector::Zero(m)), 0.0};
    };
    auto add = [&](Acc& acc, std::size_t i) {
        try {
            const ParametricSolution sol = solve_parametric(fam, data, rule.nodes.row(i), grid);
            const double w = rule.weights[i];
            for (int k = 0; k <= nt; ++k) {
                acc.K[k] += w * sol.law.gains[k];
                acc.kap[k] += w * sol.law.offsets[k];
            }
            acc.J += w * node_cost(fam, data, sol);
        } catch (const Error& e) {
            throw SolverError("average_feedback: node " + std::to_string(i) + ": " + e.what());
        }
    };
    auto merge = [&](Acc& a, const Acc& b) {
        for (int k = 0; k <= nt; ++k) {
            a.K[k] += b.K[k];
            a.kap[k] += b.kap[k];
        }
        a.J += b.J;
    };
    Acc total = chunked_reduce<Acc>(rule.size(), opts.chunk, opts.threads, make, add, merge);
    FeedbackEnsembleStats out;
    out.mean_gain = std::move(total.K);
    out.mean_offset = std::move(total.kap);
    out.mean_cost = total.J;
    out.grid = grid;
    out.hx = fam.hx();
    return out;
}

/// Least-squares slope of log y against log x.
inline double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size() || x.size() < 2) return std::numeric_limits<double>::quiet_NaN();
    double mx = 0.0, my = 0.0;
    const auto n = static_cast<double>(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += std::log(x[i]);
        my += std::log(y[i]);
    }
    mx /= n;
    my /= n;
    double sxy = 0.0, sxx = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double dx = std::log(x[i]) - mx;
        sxy += dx * (std::log(y[i]) - my);
        sxx += dx * dx;
    }
    return sxy / sxx;
}

/// Largest prime not exceeding n.
inline std::int64_t prime_at_most(std::int64_t n) {
    for (std::int64_t p = n; p >= 2; --p)
        if (qmc::is_prime(p)) return p;
    throw DomainError("prime_at_most: no prime <= " + std::to_string(n));
}

inline std::vector<double> leading_bseq(const OperatorFamily& fam, int s) {
    if (s > fam.smax()) throw DomainError("dimension " + std::to_string(s) + " exceeds smax " + std::to_string(fam.smax()));
    return {fam.bseq.begin(), fam.bseq.begin() + s};
}

/**
 * CBC lattice with the shift 1/2, mapped to [-1/2,1/2]^s. The node set is
 * closed under sigma -> -sigma, so odd parts of the integrand cancel exactly.
 */
inline CubatureRule centered_lattice_rule(std::int64_t N, int s, const std::vector<double>& bseq) {
    const qmc::LatticeRule rule = qmc::cbc_lattice(N, s, qmc::WeightSpec::pod(bseq));
    const std::vector<double> half(static_cast<std::size_t>(s), 0.5);
    qmc::QmcPointSet ps = qmc::shift_points(qmc::lattice_points(rule), half);
    ps.meta.kind = "centered-lattice";
    return CubatureRule::equal_weight(std::move(ps));
}

/// Interlaced polynomial lattice rule of order alpha with SPOD weights from bseq.
inline CubatureRule interlaced_rule(int m, int s, int alpha, const std::vector<double>& bseq) {
    const qmc::WeightSpec w = alpha == 1 ? qmc::WeightSpec::pod(bseq) : qmc::WeightSpec::spod(bseq, alpha);
    return CubatureRule::equal_weight(qmc::interlaced_point_set(qmc::cbc_interlaced(m, s, alpha, w)));
}

/// Zero out coordinates s..end of every node: the (sigma_s, 0) truncation.
inline CubatureRule truncate_rule(const CubatureRule& rule, std::size_t s) {
    CubatureRule out = rule;
    for (std::size_t k = 0; k < out.nodes.N; ++k)
        for (std::size_t j = s; j < out.nodes.s; ++j) out.nodes(k, j) = 0.0;
    return out;
}

struct TruncationRow {
    int s = 0;
    double error = 0.0;
    double corner_error = 0.0;
};

struct TruncationResult {
    std::vector<TruncationRow> rows;
    double slope = 0.0;
    bool corner_monotone = true;
};

/**
 * error(s) = feedback_distance(mean at dimension s, mean at s_ref), all means
 * taken with `rule` (dimension >= s_ref) truncated by zeros. corner_error(s) is
 * |Pi(T) at (1/2,..,1/2,0..) with s halves minus the same with s_ref halves|_2.
 */
inline TruncationResult truncation_study(const OperatorFamily& fam, const ProblemData& data, const TimeGrid& grid,
                                         const std::vector<int>& s_list, int s_ref, const CubatureRule& rule,
                                         const AveragingOptions& opts = {}) {
    for (int s : s_list)
        if (s >= s_ref) throw DomainError("truncation_study: s_ref must exceed every s in the list");
    if (static_cast<int>(rule.dim()) < s_ref) throw DomainError("truncation_study: rule dimension below s_ref");
    if (s_ref > fam.smax()) throw DomainError("truncation_study: s_ref exceeds smax");

    const CubatureRule ref_rule = truncate_rule(rule, static_cast<std::size_t>(s_ref));
    const FeedbackLaw ref = average_feedback(ref_rule, fam, data, grid, opts).law();
    auto corner = [&](int s) {
        std::vector<double> sigma(static_cast<std::size_t>(s_ref), 0.0);
        std::fill(sigma.begin(), sigma.begin() + s, 0.5);
        return solve_riccati(evaluate_operator(fam, sigma), fam, grid).Pis.back();
    };
    const Matrix corner_ref = corner(s_ref);

    TruncationResult out;
    std::vector<double> xs, ys;
    for (int s : s_list) {
        const FeedbackLaw mean_s = average_feedback(truncate_rule(rule, static_cast<std::size_t>(s)), fam, data, grid, opts).law();
        TruncationRow row{s, feedback_distance(mean_s, ref), linalg::spectral_norm(corner(s) - corner_ref)};
        out.rows.push_back(row);
        xs.push_back(s);
        ys.push_back(row.error);
    }
    out.slope = loglog_slope(xs, ys);
    std::vector<TruncationRow> sorted = out.rows;
    std::sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) { return a.s < b.s; });
    for (std::size_t i = 1; i < sorted.size(); ++i)
        if (sorted[i].corner_error > sorted[i - 1].corner_error) out.corner_monotone = false;
    return out;
}

enum class QmcMethod { shifted, folded, interlaced, mc };

inline const char* method_name(QmcMethod m) {
    switch (m) {
        case QmcMethod::shifted: return "shifted";
        case QmcMethod::folded: return "folded";
        case QmcMethod::interlaced: return "interlaced";
        case QmcMethod::mc: return "mc";
    }
    return "?";
}

struct RateRow {
    std::int64_t N = 0;
    double rms_fb = 0.0;
    double rms_cost = 0.0;
    /// Slope of the log-log fit over this and all previous rows.
    double slope_running = std::numeric_limits<double>::quiet_NaN();
};

struct RateResult {
    QmcMethod method = QmcMethod::shifted;
    std::vector<RateRow> rows;
    double slope_fb = 0.0;
    double slope_cost = 0.0;
};

struct RateOptions {
    int R = 16;
    std::uint64_t seed = 0;
    int alpha = 2;
    AveragingOptions avg;
};

/// Point sets used by one study entry: R shifts (shifted, mc) or a single deterministic rule.
inline std::vector<CubatureRule> study_rules(QmcMethod method, std::int64_t N, int s, const std::vector<double>& bseq,
                                             const RateOptions& opts) {
    std::vector<CubatureRule> rules;
    switch (method) {
        case QmcMethod::shifted: {
            const qmc::LatticeRule lat = qmc::cbc_lattice(N, s, qmc::WeightSpec::pod(bseq));
            const qmc::QmcPointSet base = qmc::lattice_points(lat);
            for (int r = 0; r < opts.R; ++r) {
                const std::uint64_t seed = opts.seed + static_cast<std::uint64_t>(r);
                qmc::QmcPointSet ps = qmc::shift_points(base, qmc::draw_shift(base.s, seed));
                ps.meta.seed = seed;
                rules.push_back(CubatureRule::equal_weight(std::move(ps)));
            }
            break;
        }
        case QmcMethod::mc:
            for (int r = 0; r < opts.R; ++r)
                rules.push_back(CubatureRule::equal_weight(
                    qmc::mc_points(static_cast<std::size_t>(N), static_cast<std::size_t>(s), opts.seed + static_cast<std::uint64_t>(r))));
            break;
        case QmcMethod::folded: {
            const qmc::LatticeRule lat = qmc::cbc_lattice(N, s, qmc::WeightSpec::pod(bseq));
            rules.push_back(CubatureRule::equal_weight(qmc::tent_fold(qmc::lattice_points(lat))));
            break;
        }
        case QmcMethod::interlaced: {
            if (N < 4 || (N & (N - 1)) != 0) throw DomainError("interlaced rules need N = 2^m, got " + std::to_string(N));
            rules.push_back(interlaced_rule(std::countr_zero(static_cast<std::uint64_t>(N)), s, opts.alpha, bseq));
            break;
        }
    }
    return rules;
}

/**
 * RMS over the method's repetitions of the distance between the cubature mean
 * feedback and `reference`, together with the RMS error of the mean optimal cost.
 */
inline RateResult qmc_rate_study(const OperatorFamily& fam, const ProblemData& data, const TimeGrid& grid, int s,
                                 const std::vector<std::int64_t>& N_list, QmcMethod method,
                                 const FeedbackEnsembleStats& reference, const RateOptions& opts = {}) {
    const std::vector<double> bseq = leading_bseq(fam, s);
    const FeedbackLaw ref_law = reference.law();
    RateResult out;
    out.method = method;
    std::vector<double> xs, yfb, ycost;
    for (std::int64_t N : N_list) {
        const std::vector<CubatureRule> rules = study_rules(method, N, s, bseq, opts);
        double sum_fb = 0.0, sum_cost = 0.0;
        for (const auto& rule : rules) {
            const FeedbackEnsembleStats st = average_feedback(rule, fam, data, grid, opts.avg);
            const double e_fb = feedback_distance(st.law(), ref_law);
            const double e_cost = st.mean_cost - reference.mean_cost;
            sum_fb += e_fb * e_fb;
            sum_cost += e_cost * e_cost;
        }
        RateRow row;
        row.N = N;
        row.rms_fb = std::sqrt(sum_fb / static_cast<double>(rules.size()));
        row.rms_cost = std::sqrt(sum_cost / static_cast<double>(rules.size()));
        xs.push_back(static_cast<double>(N));
        yfb.push_back(row.rms_fb);
        ycost.push_back(row.rms_cost);
        row.slope_running = loglog_slope(xs, yfb);
        out.rows.push_back(row);
    }
    out.slope_fb = loglog_slope(xs, yfb);
    out.slope_cost = loglog_slope(xs, ycost);
    return out;
}

/// Reference mean by an interlaced rule of order alpha with 2^m points.
inline FeedbackEnsembleStats reference_mean(const OperatorFamily& fam, const ProblemData& data, const TimeGrid& grid,
                                            int s, int m, int alpha, const AveragingOptions& opts = {}) {
    return average_feedback(interlaced_rule(m, s, alpha, leading_bseq(fam, s)), fam, data, grid, opts);
}

namespace cache {

inline constexpr char kMagic[8] = {'Q', 'M', 'C', 'F', 'B', 'R', 'E', 'F'};
inline constexpr std::uint32_t kVersion = 1;

template <class T>
void put(std::ostream& os, const T& v) { os.write(reinterpret_cast<const char*>(&v), sizeof(T)); }
template <class T>
bool get(std::istream& is, T& v) { return static_cast<bool>(is.read(reinterpret_cast<char*>(&v), sizeof(T))); }

/// Writes stats under `dir/<key>.bin` (header: magic, version, key, shapes).
inline std::filesystem::path save(const std::filesystem::path& dir, const std::string& key, const FeedbackEnsembleStats& st) {
    std::filesystem::create_directories(dir);
    const auto path = dir / (key + ".bin");
    const auto tmp = dir / (key + ".bin.tmp");
    {
        std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
        if (!os) throw ValidationError("cache: cannot write " + tmp.string());
        os.write(kMagic, sizeof kMagic);
        put(os, kVersion);
        put(os, static_cast<std::uint32_t>(key.size()));
        os.write(key.data(), static_cast<std::streamsize>(key.size()));
        const auto nt = static_cast<std::uint32_t>(st.grid.nt());
        const auto m = static_cast<std::uint32_t>(st.mean_gain.front().rows());
        const auto n = static_cast<std::uint32_t>(st.mean_gain.front().cols());
        put(os, nt); put(os, m); put(os, n);
        put(os, st.grid.T()); put(os, st.hx); put(os, st.mean_cost);
        for (const auto& K : st.mean_gain) os.write(reinterpret_cast<const char*>(K.data()), static_cast<std::streamsize>(sizeof(double) * K.size()));
        for (const auto& v : st.mean_offset) os.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(sizeof(double) * v.size()));
        if (!os) throw ValidationError("cache: write failed for " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
    return path;
}

/// Loads stats if the file exists and its header matches key and version.
inline std::optional<FeedbackEnsembleStats> load(const std::filesystem::path& dir, const std::string& key) {
    std::ifstream is(dir / (key + ".bin"), std::ios::binary);
    if (!is) return std::nullopt;
    char magic[8];
    if (!is.read(magic, sizeof magic) || std::memcmp(magic, kMagic, sizeof magic) != 0) return std::nullopt;
    std::uint32_t version = 0, klen = 0, nt = 0, m = 0, n = 0;
    if (!get(is, version) || version != kVersion || !get(is, klen) || klen != key.size()) return std::nullopt;
    std::string stored(klen, '\0');
    if (!is.read(stored.data(), klen) || stored != key) return std::nullopt;
    double T = 0.0, hx = 0.0, J = 0.0;
    if (!get(is, nt) || !get(is, m) || !get(is, n) || !get(is, T) || !get(is, hx) || !get(is, J)) return std::nullopt;
    FeedbackEnsembleStats st;
    st.grid = TimeGrid(T, static_cast<int>(nt));
    st.hx = hx;
    st.mean_cost = J;
    for (std::uint32_t k = 0; k <= nt; ++k) {
        Matrix K(m, n);
        if (!is.read(reinterpret_cast<char*>(K.data()), static_cast<std::streamsize>(sizeof(double) * K.size()))) return std::nullopt;
        st.mean_gain.push_back(std::move(K));
    }
    for (std::uint32_t k = 0; k <= nt; ++k) {
        Vector v(m);
        if (!is.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(sizeof(double) * v.size()))) return std::nullopt;
        st.mean_offset.push_back(std::move(v));
    }
    return st;
}

}  // namespace cache

struct DecayRow {
    int j = 0;
    double fd_gain = 0.0;
    double fd_cost = 0.0;
    double fd_pi = 0.0;
    double ratio_gain = 0.0;
    double ratio_cost = 0.0;
    double ratio_pi = 0.0;
    /// 2 b_j / b_1
    double bound = 0.0;
};

/**
 * Central differences at sigma = 0 in direction e_j: gain law distance,
 * optimal cost and |Pi(T)|_2, each divided by 2 delta, with ratios to j = 1.
 */
inline std::vector<DecayRow> derivative_decay_study(const OperatorFamily& fam, const ProblemData& data,
                                                    const TimeGrid& grid, const std::vector<int>& j_list, double delta,
                                                    int threads = 1) {
    if (!(delta > 0.0 && delta <= 1e-2)) throw DomainError("derivative_decay_study: delta must lie in (0, 1e-2]");
    int jmax = 1;
    for (int j : j_list) {
        if (j < 1 || j > fam.smax()) throw DomainError("derivative_decay_study: j out of range 1..smax");
        jmax = std::max(jmax, j);
    }
    std::vector<int> js{1};
    for (int j : j_list)
        if (j != 1) js.push_back(j);
    auto fd = [&](std::size_t idx) {
        const int j = js[idx];
        std::vector<double> plus(static_cast<std::size_t>(jmax), 0.0), minus = plus;
        plus[static_cast<std::size_t>(j - 1)] = delta;
        minus[static_cast<std::size_t>(j - 1)] = -delta;
        const ParametricSolution a = solve_parametric(fam, data, plus, grid);
        const ParametricSolution b = solve_parametric(fam, data, minus, grid);
        DecayRow row;
        row.j = j;
        row.fd_gain = feedback_distance(a.law, b.law) / (2.0 * delta);
        row.fd_cost = std::abs(node_cost(fam, data, a) - node_cost(fam, data, b)) / (2.0 * delta);
        row.fd_pi = linalg::spectral_norm(a.ric.Pis.back() - b.ric.Pis.back()) / (2.0 * delta);
        row.bound = 2.0 * fam.bseq[static_cast<std::size_t>(j - 1)] / fam.bseq[0];
        return row;
    };
    std::vector<DecayRow> rows = parallel_map<DecayRow>(js.size(), threads, fd);
    const DecayRow base = rows.front();
    auto ratio = [](double a, double b) { return b > 0.0 ? a / b : (a > 0.0 ? std::numeric_limits<double>::infinity() : 0.0); };
    std::vector<DecayRow> out;
    for (auto& r : rows) {
        r.ratio_gain = ratio(r.fd_gain, base.fd_gain);
        r.ratio_cost = ratio(r.fd_cost, base.fd_cost);
        r.ratio_pi = ratio(r.fd_pi, base.fd_pi);
    }
    for (int j : j_list)
        for (const auto& r : rows)
            if (r.j == j) { out.push_back(r); break; }
    return out;
}

}  // namespace qmcfb
