#pragma once

#include <bit>
#include <cmath>
#include <limits>
#include <cstdint>
#include <numbers>
#include <numeric>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "qmcfb/errors.hpp"
#include "qmcfb/qmc/number_theory.hpp"
#include "qmcfb/qmc/weights.hpp"

namespace qmcfb::qmc {

struct LatticeRule {
    std::int64_t N = 1;
    std::vector<std::int64_t> z;
    /// Shift-averaged squared worst-case error after each CBC step (empty if not built by CBC).
    std::vector<double> e2_trace;

    int s() const { return static_cast<int>(z.size()); }

    void validate() const {
        if (N < 1) throw DomainError("LatticeRule: N must be >= 1");
        for (auto zj : z)
            if (zj < 1 || zj >= std::max<std::int64_t>(N, 2) || std::gcd(zj, N) != 1)
                throw DomainError("LatticeRule: generator " + std::to_string(zj) + " not a unit mod " + std::to_string(N));
    }
};

/// B_2(x) = x^2 - x + 1/6.
inline double bernoulli2(double x) { return x * x - x + 1.0 / 6.0; }

/**
 * Component-by-component construction minimizing the shift-averaged squared
 * worst-case error
 *   e^2(z) = sum_{u != {}} gamma_u^2 (1/N) sum_k prod_{j in u} B_2({k z_j / N})
 * for POD weights gamma_u = Gamma_|u| prod beta_j.
 *
 * Per point k the order-dependent sums are carried scaled by Gamma_l^2, so each
 * step costs O(d N) for the update plus O(N^2) for the candidate scan. The scan
 * enumerates k = g^a, z = g^b for a primitive root g, turning the criterion into
 * a contiguous correlation. Ties go to the smallest z.
 */
inline LatticeRule cbc_lattice(std::int64_t N, int s, const WeightSpec& weights) {
    if (!is_prime(N)) throw DomainError("cbc_lattice: N = " + std::to_string(N) + " is not prime");
    if (s < 1) throw DomainError("cbc_lattice: s must be >= 1");
    if (weights.kind != WeightKind::pod) throw DomainError("cbc_lattice: POD weights required");
    if (weights.s() < s) throw DomainError("cbc_lattice: weight sequence shorter than s");
    weights.validate();

    const auto n = static_cast<std::size_t>(N);
    const std::int64_t L = N - 1;
    const std::int64_t g = primitive_root(N);
    std::vector<std::int64_t> gpow(static_cast<std::size_t>(L));
    {
        std::int64_t v = 1;
        for (std::int64_t a = 0; a < L; ++a) { gpow[static_cast<std::size_t>(a)] = v; v = v * g % N; }
    }
    std::vector<double> omega(n);
    for (std::size_t r = 0; r < n; ++r) omega[r] = bernoulli2(static_cast<double>(r) / static_cast<double>(N));
    // omega along the cyclic order, doubled so every rotation is a contiguous window
    std::vector<double> cyc(2 * static_cast<std::size_t>(L));
    for (std::size_t c = 0; c < cyc.size(); ++c) cyc[c] = omega[static_cast<std::size_t>(gpow[c % static_cast<std::size_t>(L)])];

    // U[l][k] = Gamma_l^2 * sum_{|u|=l, u in 1..d} prod beta_j^2 omega_j(k)
    std::vector<std::vector<double>> U(static_cast<std::size_t>(s) + 1);
    U[0].assign(n, std::exp(2.0 * weights.log_order_factor(0)));
    std::vector<double> ratio(static_cast<std::size_t>(s) + 1, 0.0);
    for (int l = 1; l <= s; ++l) ratio[static_cast<std::size_t>(l)] = std::exp(2.0 * (weights.log_order_factor(l) - weights.log_order_factor(l - 1)));

    LatticeRule rule;
    rule.N = N;
    std::vector<double> W(n), wv(static_cast<std::size_t>(L));
    for (int d = 1; d <= s; ++d) {
        const double beta2 = std::pow(weights.product_factor(d), 2);
        for (std::size_t k = 0; k < n; ++k) {
            double acc = 0.0;
            for (int l = 1; l <= d; ++l) acc += ratio[static_cast<std::size_t>(l)] * U[static_cast<std::size_t>(l - 1)][k];
            W[k] = beta2 * acc;
        }
        for (std::int64_t a = 0; a < L; ++a) wv[static_cast<std::size_t>(a)] = W[static_cast<std::size_t>(gpow[static_cast<std::size_t>(a)])];

        const Eigen::Map<const Eigen::VectorXd> wmap(wv.data(), L);
        double best = std::numeric_limits<double>::infinity();
        std::int64_t best_z = 0;
        for (std::int64_t b = 0; b < L; ++b) {
            const double val = wmap.dot(Eigen::Map<const Eigen::VectorXd>(cyc.data() + b, L));
            const std::int64_t zc = gpow[static_cast<std::size_t>(b)];
            const double tol = 1e-12 * std::abs(best);
            if (best_z == 0 || val < best - tol || (val <= best + tol && zc < best_z)) {
                best = best_z == 0 ? val : std::min(best, val);
                best_z = zc;
            }
        }
        if (N == 2) best_z = 1;
        rule.z.push_back(best_z);

        // Fold the chosen coordinate into the order-dependent sums, highest order first.
        U[static_cast<std::size_t>(d)].assign(n, 0.0);
        double e2 = 0.0;
        for (std::size_t k = 0; k < n; ++k) {
            const double w = beta2 * omega[static_cast<std::size_t>((static_cast<std::int64_t>(k) * best_z) % N)];
            double sum = 0.0;
            for (int l = d; l >= 1; --l) {
                auto& cur = U[static_cast<std::size_t>(l)][k];
                cur += w * ratio[static_cast<std::size_t>(l)] * U[static_cast<std::size_t>(l - 1)][k];
                sum += cur;
            }
            e2 += sum;
        }
        e2 /= static_cast<double>(N);
        rule.e2_trace.push_back(e2);
    }
    return rule;
}

namespace detail {

/// gamma_u^2 for every subset mask of {1..s}.
inline std::vector<double> squared_weights_by_mask(const WeightSpec& weights, int s) {
    const std::size_t count = std::size_t{1} << s;
    std::vector<double> g2(count, 0.0);
    std::vector<int> subset;
    for (std::size_t mask = 1; mask < count; ++mask) {
        subset.clear();
        for (int j = 0; j < s; ++j)
            if (mask >> j & 1U) subset.push_back(j + 1);
        const double g = weight_of(weights, subset);
        g2[mask] = g * g;
    }
    return g2;
}

}  // namespace detail

/// Direct evaluation of the CBC criterion by subset enumeration (s <= 20).
inline double wce_shift_avg(const LatticeRule& rule, const WeightSpec& weights) {
    rule.validate();
    const int s = rule.s();
    if (s > 20) throw DomainError("wce_shift_avg: direct subset enumeration limited to s <= 20");
    if (weights.s() < s) throw DomainError("wce_shift_avg: weight sequence shorter than s");
    const std::vector<double> g2 = detail::squared_weights_by_mask(weights, s);
    const std::size_t count = std::size_t{1} << s;
    std::vector<double> prod(count);
    std::vector<double> om(static_cast<std::size_t>(s));
    double total = 0.0;
    for (std::int64_t k = 0; k < rule.N; ++k) {
        for (int j = 0; j < s; ++j) {
            const std::int64_t r = (k * rule.z[static_cast<std::size_t>(j)]) % rule.N;
            om[static_cast<std::size_t>(j)] = bernoulli2(static_cast<double>(r) / static_cast<double>(rule.N));
        }
        prod[0] = 1.0;
        double acc = 0.0;
        for (std::size_t mask = 1; mask < count; ++mask) {
            const int low = std::countr_zero(mask);
            prod[mask] = prod[mask & (mask - 1)] * om[static_cast<std::size_t>(low)];
            acc += g2[mask] * prod[mask];
        }
        total += acc;
    }
    return total / static_cast<double>(rule.N);
}

/**
 * ((1/phi(N)) sum_{u != {}} gamma_u^{2 lambda} (2 zeta(2 lambda) / (2 pi^2)^lambda)^{|u|})^{1/lambda}.
 * POD weights use an elementary-symmetric recursion; SPOD weights enumerate subsets (s <= 20).
 */
inline double theoretical_bound(std::int64_t N, int s, const WeightSpec& weights, double lambda) {
    if (!(lambda > 0.5 && lambda <= 1.0)) throw DomainError("theoretical_bound: lambda must lie in (1/2, 1]");
    if (weights.s() < s) throw DomainError("theoretical_bound: weight sequence shorter than s");
    const double c = 2.0 * riemann_zeta(2.0 * lambda) / std::pow(2.0 * std::numbers::pi * std::numbers::pi, lambda);
    double sum = 0.0;
    if (weights.kind == WeightKind::pod) {
        std::vector<double> e(static_cast<std::size_t>(s) + 1, 0.0);
        e[0] = 1.0;
        for (int j = 1; j <= s; ++j) {
            const double x = std::pow(weights.product_factor(j), 2.0 * lambda) * c;
            for (int l = j; l >= 1; --l) e[static_cast<std::size_t>(l)] += x * e[static_cast<std::size_t>(l - 1)];
        }
        for (int l = 1; l <= s; ++l) sum += std::exp(2.0 * lambda * weights.log_order_factor(l)) * e[static_cast<std::size_t>(l)];
    } else {
        if (s > 20) throw DomainError("theoretical_bound: SPOD enumeration limited to s <= 20");
        const std::vector<double> g2 = detail::squared_weights_by_mask(weights, s);
        for (std::size_t mask = 1; mask < g2.size(); ++mask)
            sum += std::pow(g2[mask], lambda) * std::pow(c, std::popcount(mask));
    }
    return std::pow(sum / static_cast<double>(euler_totient(N)), 1.0 / lambda);
}

}  // namespace qmcfb::qmc
