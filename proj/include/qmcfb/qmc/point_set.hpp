#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "qmcfb/errors.hpp"
#include "qmcfb/qmc/lattice.hpp"
#include "qmcfb/qmc/polylattice.hpp"
#include "qmcfb/rng.hpp"

namespace qmcfb::qmc {

struct PointMeta {
    std::string kind;  // lattice | shifted | folded | interlaced | mc
    std::optional<std::uint64_t> seed;
    std::vector<std::int64_t> z;
    int alpha = 1;
    bool folded = false;
};

/// N x s points, row-major. `centered` marks the [-1/2,1/2]^s convention.
struct QmcPointSet {
    std::size_t N = 0;
    std::size_t s = 0;
    std::vector<double> data;
    bool centered = false;
    PointMeta meta;

    double operator()(std::size_t k, std::size_t j) const { return data[k * s + j]; }
    double& operator()(std::size_t k, std::size_t j) { return data[k * s + j]; }
    std::span<const double> row(std::size_t k) const { return {data.data() + k * s, s}; }

    std::string describe() const {
        std::ostringstream os;
        os << "kind=" << meta.kind << ",N=" << N << ",s=" << s;
        if (meta.seed) os << ",seed=" << *meta.seed;
        if (!meta.z.empty()) {
            os << ",z=";
            for (std::size_t j = 0; j < meta.z.size(); ++j) os << (j ? " " : "") << meta.z[j];
        }
        if (meta.alpha > 1) os << ",alpha=" << meta.alpha;
        if (meta.folded) os << ",folded=1";
        if (centered) os << ",centered=1";
        return os.str();
    }
};

/// x_k = {k z / N}, k = 0..N-1, in [0,1)^s.
inline QmcPointSet lattice_points(const LatticeRule& rule) {
    rule.validate();
    QmcPointSet ps;
    ps.N = static_cast<std::size_t>(rule.N);
    ps.s = static_cast<std::size_t>(rule.s());
    ps.data.resize(ps.N * ps.s);
    for (std::size_t k = 0; k < ps.N; ++k)
        for (std::size_t j = 0; j < ps.s; ++j)
            ps(k, j) = static_cast<double>((static_cast<std::int64_t>(k) * rule.z[j]) % rule.N) / static_cast<double>(rule.N);
    ps.meta.kind = "lattice";
    ps.meta.z = rule.z;
    return ps;
}

inline QmcPointSet interlaced_point_set(const PolyLatticeRule& rule) {
    QmcPointSet ps;
    ps.N = static_cast<std::size_t>(rule.N());
    ps.s = static_cast<std::size_t>(rule.s);
    ps.data = interlaced_points(rule);
    ps.meta.kind = "interlaced";
    ps.meta.alpha = rule.alpha;
    for (auto q : rule.zpolys) ps.meta.z.push_back(static_cast<std::int64_t>(q));
    return ps;
}

/// Uniform shift drawn from stream `seed`.
inline std::vector<double> draw_shift(std::size_t s, std::uint64_t seed) {
    CounterRng rng(seed);
    std::vector<double> delta(s);
    for (auto& d : delta) d = rng.next_unit();
    return delta;
}

/// {x_k + Delta} for an explicit shift.
inline QmcPointSet shift_points(const QmcPointSet& in, std::span<const double> delta) {
    if (in.centered) throw ContractError("shift_points: expects points in [0,1)^s");
    if (delta.size() != in.s) throw ContractError("shift_points: shift dimension mismatch");
    QmcPointSet out = in;
    for (std::size_t k = 0; k < in.N; ++k)
        for (std::size_t j = 0; j < in.s; ++j) {
            double v = in(k, j) + delta[j];
            if (v >= 1.0) v -= 1.0;
            out(k, j) = v;
        }
    out.meta.kind = "shifted";
    return out;
}

inline QmcPointSet random_shift(const LatticeRule& rule, std::uint64_t seed) {
    const QmcPointSet base = lattice_points(rule);
    QmcPointSet out = shift_points(base, draw_shift(base.s, seed));
    out.meta.seed = seed;
    return out;
}

/// phi(x) = 1 - |2x - 1| componentwise.
inline double tent(double x) { return 1.0 - std::abs(2.0 * x - 1.0); }

inline QmcPointSet tent_fold(const QmcPointSet& in) {
    if (in.centered) throw ContractError("tent_fold: expects points in [0,1]^s");
    QmcPointSet out = in;
    for (auto& v : out.data) v = tent(v);
    out.meta.folded = true;
    if (out.meta.kind == "lattice") out.meta.kind = "folded";
    return out;
}

/// x - 1/2 componentwise, mapping [0,1]^s to [-1/2,1/2]^s.
inline QmcPointSet to_symmetric(const QmcPointSet& in) {
    if (in.centered) return in;
    QmcPointSet out = in;
    for (auto& v : out.data) {
        if (!(v >= 0.0 && v <= 1.0)) throw DomainError("to_symmetric: coordinate outside [0,1]");
        v -= 0.5;
    }
    out.centered = true;
    return out;
}

/// i.i.d. uniform points on [-1/2,1/2]^s.
inline QmcPointSet mc_points(std::size_t N, std::size_t s, std::uint64_t seed) {
    if (N < 1) throw DomainError("mc_points: N must be >= 1");
    CounterRng rng(seed);
    QmcPointSet ps;
    ps.N = N;
    ps.s = s;
    ps.data.resize(N * s);
    for (auto& v : ps.data) v = rng.next_unit() - 0.5;
    ps.centered = true;
    ps.meta.kind = "mc";
    ps.meta.seed = seed;
    return ps;
}

}  // namespace qmcfb::qmc
