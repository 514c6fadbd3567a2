#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <vector>

#include "nrr/rng.hpp"
#include "nrr/tensor.hpp"

namespace nrr {

struct GradCheckResult {
    double max_rel_error = 0.0;
    std::size_t coords_checked = 0;
};

/// Compares the gradients already stored in `params` against central
/// differences of `loss_fn`. When max_coords is nonzero and smaller than the
/// parameter count, that many coordinates are sampled with `rng`; otherwise
/// every coordinate is checked. Coordinates for which `frozen` returns true
/// are held constant by the model and skipped. Values are restored afterwards.
inline GradCheckResult finite_diff_check(const std::function<double()>& loss_fn,
                                         const std::vector<Param*>& params, double eps = 1e-5,
                                         std::size_t max_coords = 0, RngStream* rng = nullptr,
                                         const std::function<bool(const Param&, std::size_t)>& frozen = {}) {
    struct Coord {
        Param* p;
        std::size_t i;
    };
    std::vector<Coord> coords;
    for (Param* p : params) {
        for (std::size_t i = 0; i < p->size(); ++i) {
            if (!frozen || !frozen(*p, i)) coords.push_back({p, i});
        }
    }
    if (max_coords && max_coords < coords.size() && rng) {
        rng->shuffle(std::span<Coord>(coords));
        coords.resize(max_coords);
    }

    GradCheckResult res;
    for (const auto& [p, i] : coords) {
        double& theta = p->value.flat()[i];
        const double saved = theta;
        theta = saved + eps;
        const double up = loss_fn();
        theta = saved - eps;
        const double down = loss_fn();
        theta = saved;
        const double numeric = (up - down) / (2.0 * eps);
        const double analytic = p->grad.flat()[i];
        const double err = std::abs(analytic - numeric) / std::max(1e-8, std::abs(analytic) + std::abs(numeric));
        res.max_rel_error = std::max(res.max_rel_error, err);
        ++res.coords_checked;
    }
    return res;
}

}  // namespace nrr
