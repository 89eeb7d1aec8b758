#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "qmcfb/errors.hpp"
#include "qmcfb/linalg.hpp"
#include "qmcfb/rng.hpp"

namespace qmcfb {

/// Uniform interior grid on (0,1) with homogeneous Dirichlet boundary.
class SpatialGrid {
public:
    explicit SpatialGrid(int n) : n_(n) {
        if (n < 2) throw DomainError("SpatialGrid: need n >= 2 interior nodes, got " + std::to_string(n));
        hx_ = 1.0 / static_cast<double>(n + 1);
    }

    int n() const { return n_; }
    double hx() const { return hx_; }
    /// x_i = i*hx for i = 1..n.
    double node(int i) const { return i * hx_; }
    /// Midpoint x_{i+1/2} = (i + 1/2) hx for i = 0..n.
    double midpoint(int i) const { return (i + 0.5) * hx_; }

    Vector nodes() const {
        Vector x(n_);
        for (int i = 0; i < n_; ++i) x(i) = node(i + 1);
        return x;
    }

    /// Discrete H inner product hx * sum u_i v_i.
    double inner(const Vector& u, const Vector& v) const { return hx_ * u.dot(v); }
    double norm(const Vector& u) const { return std::sqrt(inner(u, u)); }

    Vector sample(const std::function<double(double)>& fn) const {
        Vector out(n_);
        for (int i = 0; i < n_; ++i) out(i) = fn(node(i + 1));
        return out;
    }

    friend bool operator==(const SpatialGrid&, const SpatialGrid&) = default;

private:
    int n_;
    double hx_;
};

/// a(x, sigma) = a0 + sum_j sigma_j cbar j^{-qdec} sin(j pi x).
struct DiffusionField {
    double a0 = 1.0;
    double cbar = 1.0;
    double qdec = 2.0;
    int smax = 1;

    double psi(int j, double x) const {
        return cbar * std::pow(static_cast<double>(j), -qdec) * std::sin(j * std::numbers::pi * x);
    }

    /// Coefficient decay b_j = cbar j^{-qdec}.
    double decay(int j) const { return cbar * std::pow(static_cast<double>(j), -qdec); }

    /// Lower bound of a over all sigma in [-1/2,1/2]^smax.
    double a_min() const {
        double tail = 0.0;
        for (int j = 1; j <= smax; ++j) tail += std::pow(static_cast<double>(j), -qdec);
        return a0 - 0.5 * cbar * tail;
    }

    void validate() const {
        if (!(a0 > 0.0)) throw ConstructionError("DiffusionField: a0 must be positive");
        if (!(cbar > 0.0)) throw ConstructionError("DiffusionField: cbar must be positive");
        if (!(qdec > 1.0)) throw ConstructionError("DiffusionField: qdec must exceed 1");
        if (smax < 1) throw ConstructionError("DiffusionField: smax must be >= 1");
        const double amin = a_min();
        if (!(amin > 0.0)) {
            std::ostringstream msg;
            msg << "DiffusionField: ellipticity violated, a_min = a0 - (cbar/2)*sum_{j<=" << smax
                << "} j^-qdec = " << amin << " <= 0";
            throw ConstructionError(msg.str());
        }
    }
};

struct Interval {
    double left = 0.0;
    double right = 0.0;
};

/**
 * Finite-difference discretization of the affine operator family
 * A(sigma) = A0 + sum_j sigma_j A_j together with control injection B and the
 * scalar observation weights Q = q_obs I, P = p_ter I.
 *
 * Immutable after construction; safe to share across threads.
 */
struct OperatorFamily {
    SpatialGrid grid{2};
    DiffusionField field;
    Matrix A0;
    std::vector<Matrix> Ajs;
    std::vector<double> bseq;
    Matrix Bmat;
    double q_obs = 0.0;
    double p_ter = 0.0;

    int n() const { return grid.n(); }
    int m() const { return static_cast<int>(Bmat.cols()); }
    int smax() const { return static_cast<int>(Ajs.size()); }
    double hx() const { return grid.hx(); }
};

namespace detail {

/// (A w)_i = [a_{i+1/2}(w_{i+1}-w_i) - a_{i-1/2}(w_i-w_{i-1})]/hx^2 with w_0 = w_{n+1} = 0.
inline Matrix diffusion_stencil(const SpatialGrid& grid, const std::function<double(double)>& coeff) {
    const int n = grid.n();
    const double inv_h2 = 1.0 / (grid.hx() * grid.hx());
    Matrix a = Matrix::Zero(n, n);
    for (int i = 0; i < n; ++i) {
        const double left = coeff(grid.midpoint(i));
        const double right = coeff(grid.midpoint(i + 1));
        a(i, i) = -(left + right) * inv_h2;
        if (i > 0) a(i, i - 1) = left * inv_h2;
        if (i + 1 < n) a(i, i + 1) = right * inv_h2;
    }
    return a;
}

}  // namespace detail

inline OperatorFamily assemble_family(const SpatialGrid& grid, const DiffusionField& field,
                                      std::span<const Interval> actuators, double q_obs, double p_ter) {
    field.validate();
    if (actuators.empty()) throw DomainError("assemble_family: at least one actuator interval required");
    if (!(q_obs >= 0.0) || !(p_ter >= 0.0)) throw DomainError("assemble_family: q_obs and p_ter must be nonnegative");
    for (const auto& iv : actuators) {
        if (!(iv.left < iv.right) || !(iv.left > 0.0) || !(iv.right < 1.0)) {
            std::ostringstream msg;
            msg << "assemble_family: actuator interval [" << iv.left << ", " << iv.right
                << "] must be nonempty and inside (0,1)";
            throw DomainError(msg.str());
        }
    }

    OperatorFamily fam;
    fam.grid = grid;
    fam.field = field;
    fam.q_obs = q_obs;
    fam.p_ter = p_ter;
    fam.A0 = detail::diffusion_stencil(grid, [&](double) { return field.a0; });
    fam.Ajs.reserve(field.smax);
    fam.bseq.reserve(field.smax);
    for (int j = 1; j <= field.smax; ++j) {
        fam.Ajs.push_back(detail::diffusion_stencil(grid, [&](double x) { return field.psi(j, x); }));
        fam.bseq.push_back(field.decay(j));
    }
    fam.Bmat = Matrix::Zero(grid.n(), static_cast<Eigen::Index>(actuators.size()));
    for (std::size_t c = 0; c < actuators.size(); ++c) {
        for (int i = 0; i < grid.n(); ++i) {
            const double x = grid.node(i + 1);
            if (x >= actuators[c].left && x <= actuators[c].right) fam.Bmat(i, static_cast<Eigen::Index>(c)) = 1.0;
        }
    }
    return fam;
}

/// A0 + sum_{j<=s} sigma_j A_j; coordinates beyond s are taken as zero.
inline Matrix evaluate_operator(const OperatorFamily& fam, std::span<const double> sigma) {
    if (static_cast<int>(sigma.size()) > fam.smax()) {
        throw DomainError("evaluate_operator: parameter dimension " + std::to_string(sigma.size()) +
                          " exceeds smax " + std::to_string(fam.smax()));
    }
    Matrix a = fam.A0;
    for (std::size_t j = 0; j < sigma.size(); ++j) {
        if (!(std::abs(sigma[j]) <= 0.5)) {
            std::ostringstream msg;
            msg << "evaluate_operator: |sigma_" << (j + 1) << "| = " << std::abs(sigma[j]) << " exceeds 1/2";
            throw DomainError(msg.str());
        }
        if (sigma[j] != 0.0) a.noalias() += sigma[j] * fam.Ajs[j];
    }
    return a;
}

inline Matrix evaluate_operator(const OperatorFamily& fam, const std::vector<double>& sigma) {
    return evaluate_operator(fam, std::span<const double>(sigma));
}

/// B^* = hx B^T, the adjoint of B: R^m -> H with respect to the weighted H product.
inline Matrix adjoint_control(const OperatorFamily& fam) { return fam.hx() * fam.Bmat.transpose(); }

enum class Scenario { homogeneous, tracking };

/// Time-dependent data of the tracking problem; all fields are closed-form callables.
struct ProblemData {
    double T = 1.0;
    Scenario scenario = Scenario::homogeneous;
    std::function<Vector(double)> f;
    std::function<Vector(double)> g;
    std::function<Vector(double)> gdot;
    Vector gT;
    Vector y0;
};

inline void check_time(const ProblemData& data, double t, const char* who) {
    const double slack = 1e-12 * data.T;
    if (t < -slack || t > data.T + slack) {
        std::ostringstream msg;
        msg << who << ": t = " << t << " outside [0, " << data.T << "]";
        throw DomainError(msg.str());
    }
}

/// r_sigma(t) = f(t) + A(sigma) g(t) - gdot(t).
inline Vector forcing_r(const OperatorFamily& fam, const ProblemData& data, std::span<const double> sigma,
                        double t) {
    check_time(data, t, "forcing_r");
    const Matrix a = evaluate_operator(fam, sigma);
    return data.f(t) + a * data.g(t) - data.gdot(t);
}

inline Vector forcing_r(const OperatorFamily& fam, const ProblemData& data, const Matrix& a, double t) {
    check_time(data, t, "forcing_r");
    return data.f(t) + a * data.g(t) - data.gdot(t);
}

/// f = g = g_T = 0, y0(x) = sin(pi x).
inline ProblemData homogeneous_data(const SpatialGrid& grid, double T) {
    ProblemData d;
    d.T = T;
    d.scenario = Scenario::homogeneous;
    const int n = grid.n();
    d.f = [n](double) { return Vector::Zero(n); };
    d.g = d.f;
    d.gdot = d.f;
    d.gT = Vector::Zero(n);
    d.y0 = grid.sample([](double x) { return std::sin(std::numbers::pi * x); });
    return d;
}

/**
 * Tracking scenario: target g(t,x) = (t/T) sin(pi x), g_T = g(T), forcing
 * f(t,x) = 1/2 sin(2 pi x), initial state y0(x) = sin(pi x).
 */
inline ProblemData tracking_data(const SpatialGrid& grid, double T) {
    ProblemData d;
    d.T = T;
    d.scenario = Scenario::tracking;
    const Vector shape = grid.sample([](double x) { return std::sin(std::numbers::pi * x); });
    const Vector force = grid.sample([](double x) { return 0.5 * std::sin(2.0 * std::numbers::pi * x); });
    d.f = [force](double) { return force; };
    d.g = [shape, T](double t) { return Vector(t / T * shape); };
    d.gdot = [shape, T](double) { return Vector(shape / T); };
    d.gT = shape;
    d.y0 = shape;
    return d;
}

/// Serializable description of a model instance.
struct ModelConfig {
    int n = 64;
    double T = 1.0;
    int nt = 64;
    double a0 = 0.02;
    double cbar = 0.01;
    double qdec = 2.0;
    int smax = 16;
    std::vector<Interval> actuators{{0.1, 0.3}, {0.6, 0.8}};
    double q_obs = 1.0;
    double p_ter = 0.1;
    Scenario scenario = Scenario::homogeneous;
};

struct Model {
    OperatorFamily fam;
    ProblemData data;
};

inline Model build_model(const ModelConfig& cfg) {
    SpatialGrid grid(cfg.n);
    DiffusionField field{cfg.a0, cfg.cbar, cfg.qdec, cfg.smax};
    Model model{assemble_family(grid, field, cfg.actuators, cfg.q_obs, cfg.p_ter),
                cfg.scenario == Scenario::tracking ? tracking_data(grid, cfg.T) : homogeneous_data(grid, cfg.T)};
    return model;
}

/**
 * Spot check of negative definiteness: evaluates A(sigma) at vertices of
 * [-1/2,1/2]^smax restricted to random coordinate subsets, returns the largest
 * eigenvalue encountered.
 */
inline double sampled_max_eigenvalue(const OperatorFamily& fam, int samples, std::uint64_t seed) {
    CounterRng rng(seed);
    double worst = -std::numeric_limits<double>::infinity();
    std::vector<double> sigma(fam.smax());
    for (int s = 0; s < samples; ++s) {
        for (auto& v : sigma) {
            const double u = rng.next_unit();
            v = u < 1.0 / 3.0 ? -0.5 : (u < 2.0 / 3.0 ? 0.0 : 0.5);
        }
        worst = std::max(worst, linalg::max_eigenvalue(evaluate_operator(fam, sigma)));
    }
    return worst;
}

}  // namespace qmcfb
