#pragma once

#include <algorithm>

#include "qmcfb/errors.hpp"
#include "qmcfb/linalg.hpp"
#include "qmcfb/riccati.hpp"

namespace qmcfb {

/**
 * max_k ( |K_a(t_k) - K_b(t_k)|_{H->U} + |kappa_a(t_k) - kappa_b(t_k)| ).
 * Since |v|_H = sqrt(hx) |v|_2, the H->U norm of a gain is its largest singular value over sqrt(hx).
 */
inline double feedback_distance(const FeedbackLaw& a, const FeedbackLaw& b) {
    if (!(a.grid == b.grid) || a.gains.size() != b.gains.size() || a.offsets.size() != b.offsets.size() ||
        a.hx != b.hx) {
        throw ContractError("feedback_distance: laws on different grids");
    }
    const double scale = 1.0 / std::sqrt(a.hx);
    double worst = 0.0;
    for (std::size_t k = 0; k < a.gains.size(); ++k) {
        if (a.gains[k].rows() != b.gains[k].rows() || a.gains[k].cols() != b.gains[k].cols() ||
            a.offsets[k].size() != b.offsets[k].size()) {
            throw ContractError("feedback_distance: shape mismatch at time node " + std::to_string(k));
        }
        const double dk = linalg::spectral_norm(a.gains[k] - b.gains[k]) * scale;
        const double dkap = (a.offsets[k] - b.offsets[k]).norm();
        worst = std::max(worst, dk + dkap);
    }
    return worst;
}

}  // namespace qmcfb
