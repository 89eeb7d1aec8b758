#pragma once

#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "qmcfb/errors.hpp"
#include "qmcfb/qmc/number_theory.hpp"
#include "qmcfb/qmc/weights.hpp"

namespace qmcfb::qmc {

namespace gf2 {

/// Polynomials over GF(2) as bitmasks, bit i = coefficient of x^i.
using Poly = std::uint64_t;

inline int degree(Poly p) { return p == 0 ? -1 : 63 - std::countl_zero(p); }

inline Poly mod(Poly a, Poly p) {
    const int dp = degree(p);
    for (int da = degree(a); da >= dp; da = degree(a)) a ^= p << (da - dp);
    return a;
}

/// a*b mod p for deg a, deg b < deg p <= 31.
inline Poly mulmod(Poly a, Poly b, Poly p) {
    const int m = degree(p);
    Poly r = 0;
    while (b != 0) {
        if (b & 1U) r ^= a;
        b >>= 1;
        a <<= 1;
        if (a >> m & 1U) a ^= p;
    }
    return r;
}

inline Poly powmod(Poly a, std::uint64_t e, Poly p) {
    Poly r = 1;
    while (e > 0) {
        if (e & 1U) r = mulmod(r, a, p);
        a = mulmod(a, a, p);
        e >>= 1;
    }
    return r;
}

/// Trial division by every polynomial of degree 1..deg(p)/2.
inline bool is_irreducible(Poly p) {
    const int m = degree(p);
    if (m < 1) return false;
    for (int d = 1; 2 * d <= m; ++d)
        for (Poly q = Poly{1} << d; q < Poly{1} << (d + 1); ++q)
            if (mod(p, q) == 0) return false;
    return true;
}

/// x generates the multiplicative group of GF(2)[x]/p.
inline bool is_primitive(Poly p) {
    if (!is_irreducible(p)) return false;
    const int m = degree(p);
    const std::uint64_t order = (std::uint64_t{1} << m) - 1;
    if (m == 1) return true;
    for (auto q : prime_factors(static_cast<std::int64_t>(order)))
        if (powmod(2, order / static_cast<std::uint64_t>(q), p) == 1) return false;
    return true;
}

}  // namespace gf2

inline constexpr int kMinPolyDegree = 2;
inline constexpr int kMaxPolyDegree = 16;

/// Fixed primitive moduli, checked for irreducibility and primitivity on every lookup.
inline gf2::Poly modulus_for_degree(int m) {
    static constexpr std::array<gf2::Poly, kMaxPolyDegree + 1> table{
        0, 0, 0x7, 0xB, 0x13, 0x25, 0x43, 0x83, 0x11D, 0x211, 0x409, 0x805, 0x1053, 0x201B, 0x4443, 0x8003, 0x1100B};
    if (m < kMinPolyDegree || m > kMaxPolyDegree) {
        throw ConstructionError("no modulus available at degree " + std::to_string(m) + " (supported " +
                                std::to_string(kMinPolyDegree) + ".." + std::to_string(kMaxPolyDegree) + ")");
    }
    const gf2::Poly p = table[static_cast<std::size_t>(m)];
    if (gf2::degree(p) != m || !gf2::is_primitive(p)) {
        throw ConstructionError("modulus table entry for degree " + std::to_string(m) + " is not primitive");
    }
    return p;
}

struct PolyLatticeRule {
    int m = 0;
    gf2::Poly modulus = 0;
    int alpha = 1;
    int s = 0;
    /// alpha*s generating polynomials; component (j, i) lives at index j*alpha + i.
    std::vector<gf2::Poly> zpolys;
    /// Criterion value after each component choice.
    std::vector<double> trace;

    std::int64_t N() const { return std::int64_t{1} << m; }
};

/// Digits t_1..t_m of r/p as the integer sum t_l 2^{m-l}.
inline std::uint64_t laurent_digits(gf2::Poly r, gf2::Poly p, int m) {
    std::uint64_t out = 0;
    for (int l = 0; l < m; ++l) {
        r <<= 1;
        const bool bit = (r >> m & 1U) != 0;
        if (bit) r ^= p;
        out = out << 1 | (bit ? 1U : 0U);
    }
    return out;
}

/**
 * Digit interlacing: output digits cycle through the streams' binary digits,
 * first digit of each stream, then the second, and so on, truncated at 53 bits.
 */
inline double interlace_digits(std::span<const double> streams, int alpha) {
    if (alpha < 1 || static_cast<int>(streams.size()) != alpha) throw ContractError("interlace_digits: need alpha streams");
    if (alpha == 1) return streams[0];
    std::vector<double> frac(streams.begin(), streams.end());
    for (double f : frac)
        if (!(f >= 0.0 && f < 1.0)) throw DomainError("interlace_digits: streams must lie in [0,1)");
    std::uint64_t bits = 0;
    int count = 0;
    while (count < 53) {
        for (int i = 0; i < alpha && count < 53; ++i) {
            frac[static_cast<std::size_t>(i)] *= 2.0;
            const bool bit = frac[static_cast<std::size_t>(i)] >= 1.0;
            if (bit) frac[static_cast<std::size_t>(i)] -= 1.0;
            bits = bits << 1 | (bit ? 1U : 0U);
            ++count;
        }
    }
    return std::ldexp(static_cast<double>(bits), -53);
}

/**
 * Walsh kernel of the order-alpha construction in base 2:
 *   omega(x) = sum_{k>=1} 2^{-alpha a(k)} wal_k(x),  a(k) = bit length of k,
 * which sums to (r - r^c (2 - r)) / (2 (1 - r)) with r = 2^{1-alpha}, x in [2^-c, 2^{1-c}),
 * and r / (2 (1 - r)) at x = 0.
 */
inline double walsh_kernel(std::uint64_t digits, int m, int alpha) {
    const double r = std::ldexp(1.0, 1 - alpha);
    if (digits == 0) return r / (2.0 * (1.0 - r));
    const int c = m - (64 - std::countl_zero(digits)) + 1;
    return (r - std::pow(r, c) * (2.0 - r)) / (2.0 * (1.0 - r));
}

/**
 * CBC over the alpha*s generating polynomials of an interlaced polynomial lattice
 * rule with N = 2^m points, minimizing
 *   sum_{v != {}} gamma_v (1/N) sum_k prod_{j in v} [prod_{i<=alpha} (1 + omega(y_{k,j,i})) - 1]
 * for SPOD weights whose per-coordinate factors carry E = 2^{alpha(alpha-1)/2}.
 * Components not chosen yet contribute omega = 0. Candidates range over all nonzero
 * polynomials of degree < m; with a primitive modulus, k = x^a and q = x^b make the
 * scan a contiguous correlation. Ties go to the smallest polynomial.
 */
inline PolyLatticeRule cbc_interlaced(int m, int s, int alpha, const WeightSpec& weights) {
    if (alpha < 1 || alpha > 4) throw DomainError("cbc_interlaced: alpha must lie in 1..4");
    if (s < 1 || s > 64) throw DomainError("cbc_interlaced: s must lie in 1..64");
    if (weights.s() < s) throw DomainError("cbc_interlaced: weight sequence shorter than s");
    if ((alpha == 1) != (weights.kind == WeightKind::pod) || (alpha > 1 && weights.alpha != alpha)) {
        throw DomainError("cbc_interlaced: weights must be SPOD of matching alpha (POD when alpha = 1)");
    }
    weights.validate();
    const gf2::Poly p = modulus_for_degree(m);
    const std::size_t N = std::size_t{1} << m;
    const std::size_t L = N - 1;

    std::vector<gf2::Poly> expo(L);
    {
        gf2::Poly v = 1;
        for (std::size_t a = 0; a < L; ++a) { expo[a] = v; v = gf2::mulmod(v, 2, p); }
    }
    std::vector<double> kernel(N);
    for (std::size_t r = 0; r < N; ++r) kernel[r] = walsh_kernel(laurent_digits(r, p, m), m, alpha);
    std::vector<double> cyc(2 * L);
    for (std::size_t c = 0; c < cyc.size(); ++c) cyc[c] = kernel[expo[c % L]];
    const double omega0 = kernel[0];

    const int maxl = alpha * s;
    const double E = std::ldexp(1.0, alpha * (alpha - 1) / 2);
    // U[l][k] = (l+2)! * sum over chosen coordinates of order-l products
    std::vector<std::vector<double>> U(static_cast<std::size_t>(maxl) + 1);
    U[0].assign(N, 2.0);
    for (int l = 1; l <= maxl; ++l) U[static_cast<std::size_t>(l)].assign(N, 0.0);

    PolyLatticeRule rule;
    rule.m = m;
    rule.modulus = p;
    rule.alpha = alpha;
    rule.s = s;
    std::vector<double> V(N), P(N), wv(L);
    double base = 0.0;  // (1/N) sum_k sum_{l>=1} U[l][k] for coordinates already complete
    for (int d = 1; d <= s; ++d) {
        const double b = weights.bseq[static_cast<std::size_t>(d - 1)];
        const int top = alpha * (d - 1);
        // coef[nu][l] = E 2^{[nu=alpha]} b^nu (l+2)!/(l+2-nu)!
        auto coef = [&](int nu, int l) {
            double c = E * (nu == alpha ? 2.0 : 1.0) * std::pow(b, nu);
            for (int t = 0; t < nu; ++t) c *= static_cast<double>(l + 2 - t);
            return c;
        };
        std::vector<std::vector<double>> C(static_cast<std::size_t>(alpha) + 1);
        for (int nu = 1; nu <= alpha; ++nu) {
            C[static_cast<std::size_t>(nu)].resize(static_cast<std::size_t>(top + alpha) + 1);
            for (int l = nu; l <= top + alpha; ++l) C[static_cast<std::size_t>(nu)][static_cast<std::size_t>(l)] = coef(nu, l);
        }
        for (std::size_t k = 0; k < N; ++k) {
            double acc = 0.0;
            for (int nu = 1; nu <= alpha; ++nu)
                for (int l = nu; l <= top + nu; ++l)
                    acc += C[static_cast<std::size_t>(nu)][static_cast<std::size_t>(l)] * U[static_cast<std::size_t>(l - nu)][k];
            V[k] = acc;
            P[k] = 1.0;
        }
        for (int i = 0; i < alpha; ++i) {
            for (std::size_t a = 0; a < L; ++a) wv[a] = V[expo[a]] * P[expo[a]];
            const Eigen::Map<const Eigen::VectorXd> wmap(wv.data(), static_cast<Eigen::Index>(L));
            double best = std::numeric_limits<double>::infinity();
            gf2::Poly best_q = 0;
            for (std::size_t bexp = 0; bexp < L; ++bexp) {
                const double val = wmap.dot(Eigen::Map<const Eigen::VectorXd>(cyc.data() + bexp, static_cast<Eigen::Index>(L)));
                const gf2::Poly q = expo[bexp];
                const double tol = 1e-12 * std::abs(best);
                if (best_q == 0 || val < best - tol || (val <= best + tol && q < best_q)) {
                    best = best_q == 0 ? val : std::min(best, val);
                    best_q = q;
                }
            }
            rule.zpolys.push_back(best_q);
            // P(k) *= 1 + omega(y_k); k = 0 maps to the zero residue.
            double crit = V[0] * (P[0] * (1.0 + omega0) - 1.0);
            P[0] *= 1.0 + omega0;
            for (std::size_t k = 1; k < N; ++k) {
                P[k] *= 1.0 + kernel[gf2::mulmod(k, best_q, p)];
                crit += V[k] * (P[k] - 1.0);
            }
            rule.trace.push_back(base + crit / static_cast<double>(N));
        }
        // Fold coordinate d into the order sums, highest order first.
        double total = 0.0;
        for (std::size_t k = 0; k < N; ++k) {
            const double y = P[k] - 1.0;
            for (int l = top + alpha; l >= 1; --l) {
                double add = 0.0;
                for (int nu = 1; nu <= alpha && nu <= l; ++nu)
                    if (l - nu <= top) add += C[static_cast<std::size_t>(nu)][static_cast<std::size_t>(l)] * U[static_cast<std::size_t>(l - nu)][k];
                U[static_cast<std::size_t>(l)][k] += y * add;
                total += U[static_cast<std::size_t>(l)][k];
            }
        }
        base = total / static_cast<double>(N);
    }
    return rule;
}

/// Points in [0,1)^s of the interlaced rule; row k is the k-th point.
inline std::vector<double> interlaced_points(const PolyLatticeRule& rule) {
    const std::size_t N = static_cast<std::size_t>(rule.N());
    const auto s = static_cast<std::size_t>(rule.s);
    const auto alpha = static_cast<std::size_t>(rule.alpha);
    if (rule.zpolys.size() != s * alpha) throw ContractError("interlaced_points: generator count mismatch");
    std::vector<double> out(N * s);
    std::vector<double> streams(alpha);
    for (std::size_t k = 0; k < N; ++k) {
        for (std::size_t j = 0; j < s; ++j) {
            for (std::size_t i = 0; i < alpha; ++i) {
                const gf2::Poly r = gf2::mulmod(k, rule.zpolys[j * alpha + i], rule.modulus);
                streams[i] = std::ldexp(static_cast<double>(laurent_digits(r, rule.modulus, rule.m)), -rule.m);
            }
            out[k * s + j] = interlace_digits(streams, rule.alpha);
        }
    }
    return out;
}

}  // namespace qmcfb::qmc
