#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "bomlloc/common.hpp"
#include "bomlloc/prob.hpp"

namespace bomlloc {

// K prior particles approximating the hyper-posterior.
struct ParticleSet {
    std::vector<PriorParticle> particles;
    long step_count = 0;

    std::size_t size() const { return particles.size(); }
};

struct RbfKernel {
    std::vector<std::vector<double>> values;  // K x K, symmetric, unit diagonal
    double bandwidth_sq = 1.0;                // h^2

    // Gradient of k(a, b) with respect to a: -(a - b)/h^2 * k(a, b).
    std::vector<double> grad_wrt_first(const std::vector<std::vector<double>>& pts, std::size_t i,
                                       std::size_t j) const {
        std::vector<double> g(pts[i].size());
        const double c = -values[i][j] / bandwidth_sq;
        for (std::size_t d = 0; d < g.size(); ++d) g[d] = c * (pts[i][d] - pts[j][d]);
        return g;
    }
};

// RBF kernel k(a,b) = exp(-|a-b|^2 / (2 h^2)) with the median heuristic
// h^2 = median(pairwise sq. distances) / (2 ln(K+1)), floored at 1e-8.
inline RbfKernel rbf_kernel(const std::vector<std::vector<double>>& pts) {
    const std::size_t k = pts.size();
    RbfKernel out;
    out.values.assign(k, std::vector<double>(k, 1.0));
    if (k < 2) return out;

    std::vector<std::vector<double>> sq(k, std::vector<double>(k, 0.0));
    std::vector<double> dists;
    dists.reserve(k * (k - 1) / 2);
    for (std::size_t i = 0; i < k; ++i) {
        for (std::size_t j = i + 1; j < k; ++j) {
            double s = 0.0;
            for (std::size_t d = 0; d < pts[i].size(); ++d) {
                const double diff = pts[i][d] - pts[j][d];
                s += diff * diff;
            }
            sq[i][j] = sq[j][i] = s;
            dists.push_back(s);
        }
    }
    const std::size_t mid = dists.size() / 2;
    std::nth_element(dists.begin(), dists.begin() + mid, dists.end());
    out.bandwidth_sq =
        std::max(1e-8, dists[mid] / (2.0 * std::log(static_cast<double>(k) + 1.0)));
    for (std::size_t i = 0; i < k; ++i) {
        for (std::size_t j = 0; j < k; ++j) {
            out.values[i][j] = std::exp(-sq[i][j] / (2.0 * out.bandwidth_sq));
        }
    }
    return out;
}

// One SVGD transport step:
//   phi_k <- phi_k + (eta/K) sum_j [ k(phi_j, phi_k) * score_j + grad_{phi_j} k(phi_j, phi_k) ].
// The update is built against a snapshot of the input set; no in-place
// mutation mid-step.
inline ParticleSet svgd_step(const ParticleSet& set, const std::vector<std::vector<double>>& scores,
                             double eta) {
    const std::size_t k = set.size();
    if (scores.size() != k) throw InputError("svgd_step: score count != particle count");
    std::vector<std::vector<double>> pts(k);
    for (std::size_t i = 0; i < k; ++i) {
        pts[i] = stack_particle(set.particles[i]);
        if (scores[i].size() != pts[i].size()) {
            throw InputError("svgd_step: score length mismatch at particle " + std::to_string(i));
        }
    }
    const auto kernel = rbf_kernel(pts);
    const std::size_t dim = pts.empty() ? 0 : pts[0].size();

    ParticleSet next;
    next.step_count = set.step_count + 1;
    next.particles.reserve(k);
    for (std::size_t i = 0; i < k; ++i) {
        std::vector<double> update(dim, 0.0);
        for (std::size_t j = 0; j < k; ++j) {
            const double kv = kernel.values[j][i];
            const double gc = -kv / kernel.bandwidth_sq;
            for (std::size_t d = 0; d < dim; ++d) {
                update[d] += kv * scores[j][d] + gc * (pts[j][d] - pts[i][d]);
            }
        }
        std::vector<double> moved(dim);
        const double scale = eta / static_cast<double>(k);
        for (std::size_t d = 0; d < dim; ++d) {
            moved[d] = pts[i][d] + scale * update[d];
            if (!std::isfinite(moved[d])) {
                throw NumericError("svgd_step: non-finite update at particle " + std::to_string(i));
            }
        }
        next.particles.push_back(unstack_particle(moved));
    }
    return next;
}

}  // namespace bomlloc
