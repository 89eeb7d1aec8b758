#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "qmcfb/errors.hpp"

namespace qmcfb::qmc {

inline bool is_prime(std::int64_t n) {
    if (n < 2) return false;
    if (n % 2 == 0) return n == 2;
    for (std::int64_t d = 3; d * d <= n; d += 2)
        if (n % d == 0) return false;
    return true;
}

/// Distinct prime factors by trial division.
inline std::vector<std::int64_t> prime_factors(std::int64_t n) {
    std::vector<std::int64_t> out;
    for (std::int64_t d = 2; d * d <= n; ++d) {
        if (n % d == 0) {
            out.push_back(d);
            while (n % d == 0) n /= d;
        }
    }
    if (n > 1) out.push_back(n);
    return out;
}

inline std::int64_t euler_totient(std::int64_t n) {
    if (n < 1) throw DomainError("euler_totient: N must be >= 1");
    std::int64_t phi = n;
    for (std::int64_t p : prime_factors(n)) phi -= phi / p;
    return phi;
}

inline std::int64_t pow_mod(std::int64_t base, std::int64_t e, std::int64_t mod) {
    std::int64_t r = 1 % mod;
    base %= mod;
    while (e > 0) {
        if (e & 1) r = r * base % mod;
        base = base * base % mod;
        e >>= 1;
    }
    return r;
}

/// Smallest generator of the multiplicative group mod a prime.
inline std::int64_t primitive_root(std::int64_t p) {
    if (!is_prime(p)) throw DomainError("primitive_root: " + std::to_string(p) + " is not prime");
    if (p == 2) return 1;
    const auto factors = prime_factors(p - 1);
    for (std::int64_t g = 2; g < p; ++g) {
        bool ok = true;
        for (std::int64_t q : factors)
            if (pow_mod(g, (p - 1) / q, p) == 1) { ok = false; break; }
        if (ok) return g;
    }
    throw ConstructionError("primitive_root: none found");
}

/// Riemann zeta for real x > 1 by Euler-Maclaurin summation (about 1e-15 relative).
inline double riemann_zeta(double x) {
    if (!(x > 1.0)) throw DomainError("riemann_zeta: argument must exceed 1");
    constexpr int n0 = 12;
    constexpr std::array<double, 10> b2k{1.0 / 6.0,       -1.0 / 30.0,       1.0 / 42.0,   -1.0 / 30.0,
                                         5.0 / 66.0,      -691.0 / 2730.0,   7.0 / 6.0,    -3617.0 / 510.0,
                                         43867.0 / 798.0, -174611.0 / 330.0};
    double sum = 0.0;
    for (int n = n0 - 1; n >= 1; --n) sum += std::pow(static_cast<double>(n), -x);
    const double N = n0;
    sum += std::pow(N, 1.0 - x) / (x - 1.0) + 0.5 * std::pow(N, -x);
    // term_k = B_2k/(2k)! * x(x+1)...(x+2k-2) * N^{-x-2k+1}
    double rising = x;
    double fact = 2.0;
    double npow = std::pow(N, -x - 1.0);
    for (std::size_t k = 0; k < b2k.size(); ++k) {
        sum += b2k[k] / fact * rising * npow;
        const double a = 2.0 * static_cast<double>(k) + 2.0;
        rising *= (x + a - 1.0) * (x + a);
        fact *= (a + 1.0) * (a + 2.0);
        npow /= N * N;
    }
    return sum;
}

}  // namespace qmcfb::qmc
