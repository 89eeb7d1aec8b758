#pragma once

#include <cmath>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "qmcfb/errors.hpp"
#include "qmcfb/qmc/number_theory.hpp"

namespace qmcfb::qmc {

enum class WeightKind { pod, spod };

/**
 * Weight generator from a nonincreasing positive sequence b_j.
 *
 * POD: gamma_u = Gamma_{|u|} prod_{j in u} beta_j with Gamma_l = (l+2)!, beta_j = 2 b_j.
 * With refine_lambda in (1/2,1] the shape is raised to the 1/(1+lambda) power and
 * beta_j picks up the kernel constant, the choice minimizing the shifted-lattice
 * error constant for that lambda.
 */
struct WeightSpec {
    WeightKind kind = WeightKind::pod;
    std::vector<double> bseq;
    int alpha = 1;
    double refine_lambda = 0.0;

    static WeightSpec pod(std::vector<double> b) { return {WeightKind::pod, std::move(b), 1, 0.0}; }
    static WeightSpec spod(std::vector<double> b, int alpha) { return {WeightKind::spod, std::move(b), alpha, 0.0}; }

    int s() const { return static_cast<int>(bseq.size()); }

    void validate() const {
        for (std::size_t j = 0; j < bseq.size(); ++j) {
            if (!(bseq[j] > 0.0)) throw DomainError("WeightSpec: b_" + std::to_string(j + 1) + " must be positive");
            if (j > 0 && bseq[j] > bseq[j - 1]) throw DomainError("WeightSpec: b_j must be nonincreasing");
        }
        if (kind == WeightKind::spod && alpha < 2) throw DomainError("WeightSpec: SPOD weights need alpha >= 2");
        if (kind == WeightKind::pod && alpha != 1) throw DomainError("WeightSpec: POD weights have alpha = 1");
        if (refine_lambda != 0.0 && (kind != WeightKind::pod || !(refine_lambda > 0.5 && refine_lambda <= 1.0))) {
            throw DomainError("WeightSpec: refine_lambda must lie in (1/2,1] and applies to POD weights only");
        }
    }

    /// log of the order-dependent factor Gamma_l.
    double log_order_factor(int l) const {
        const double lg = std::lgamma(static_cast<double>(l) + 3.0);
        return refine_lambda == 0.0 ? lg : lg / (1.0 + refine_lambda);
    }

    /// Product factor beta_j for 1-based j (POD only).
    double product_factor(int j) const {
        const double b = bseq.at(static_cast<std::size_t>(j - 1));
        if (refine_lambda == 0.0) return 2.0 * b;
        const double lam = refine_lambda;
        const double c = std::pow(2.0 * std::numbers::pi * std::numbers::pi, lam / 2.0) /
                         std::sqrt(2.0 * riemann_zeta(2.0 * lam));
        return std::pow(b * c, 1.0 / (1.0 + lam));
    }
};

inline double factorial(int n) { return std::exp(std::lgamma(static_cast<double>(n) + 1.0)); }

/// (|u|+2)! prod_{j in u} (2 b_j); the empty set gets weight 1.
inline double pod_weight(int u_size, std::span<const double> b_subset) {
    if (u_size != static_cast<int>(b_subset.size())) throw ContractError("pod_weight: size mismatch");
    if (u_size == 0) return 1.0;
    double w = factorial(u_size + 2);
    for (double b : b_subset) w *= 2.0 * b;
    return w;
}

/**
 * sum over nu in {1..alpha}^|u| of (|nu|+2)! prod_j 2^{[nu_j = alpha]} b_j^{nu_j};
 * the empty set gets weight 1.
 */
inline double spod_weight(std::span<const double> b_subset, int alpha) {
    if (alpha < 1) throw DomainError("spod_weight: alpha must be >= 1");
    if (b_subset.empty()) return 1.0;
    // poly[l] = sum over nu of total order l of prod_j 2^{[nu_j=alpha]} b_j^{nu_j}
    std::vector<double> poly{1.0};
    for (double b : b_subset) {
        std::vector<double> next(poly.size() + static_cast<std::size_t>(alpha), 0.0);
        for (std::size_t l = 0; l < poly.size(); ++l) {
            double bp = 1.0;
            for (int nu = 1; nu <= alpha; ++nu) {
                bp *= b;
                next[l + static_cast<std::size_t>(nu)] += poly[l] * bp * (nu == alpha ? 2.0 : 1.0);
            }
        }
        poly = std::move(next);
    }
    double w = 0.0;
    for (std::size_t l = 0; l < poly.size(); ++l)
        if (poly[l] != 0.0) w += factorial(static_cast<int>(l) + 2) * poly[l];
    return w;
}

/// gamma_u for a subset given by 1-based indices.
inline double weight_of(const WeightSpec& w, std::span<const int> subset) {
    if (subset.empty()) return 1.0;
    if (w.kind == WeightKind::spod) {
        std::vector<double> b;
        for (int j : subset) b.push_back(w.bseq.at(static_cast<std::size_t>(j - 1)));
        return spod_weight(b, w.alpha);
    }
    double g = std::exp(w.log_order_factor(static_cast<int>(subset.size())));
    for (int j : subset) g *= w.product_factor(j);
    return g;
}

}  // namespace qmcfb::qmc
