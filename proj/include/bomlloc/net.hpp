#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <string>
#include <vector>

#include "bomlloc/common.hpp"
#include "bomlloc/task.hpp"

namespace bomlloc {

// Fixed-topology feedforward regression network: ReLU hidden layers,
// identity output, two output coordinates (meters).
struct Architecture {
    int input_dim = 24;
    std::vector<int> hidden_dims{32, 32, 32, 32};
    int output_dim = 2;

    // Dimensions of every layer boundary: [input, hidden..., output].
    std::vector<int> layer_dims() const {
        std::vector<int> dims;
        dims.reserve(hidden_dims.size() + 2);
        dims.push_back(input_dim);
        dims.insert(dims.end(), hidden_dims.begin(), hidden_dims.end());
        dims.push_back(output_dim);
        return dims;
    }

    bool operator==(const Architecture&) const = default;
};

// Weights and biases as one flat vector. Canonical layout is layer-major:
// W1 row-major (rows = outputs of the layer), then b1, then W2, b2, ...
// This layout is frozen; checkpoints depend on it.
using FlatParams = std::vector<double>;

inline std::size_t param_count(const Architecture& arch) {
    const auto dims = arch.layer_dims();
    std::size_t n = 0;
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
        n += static_cast<std::size_t>(dims[l]) * dims[l + 1] + dims[l + 1];
    }
    return n;
}

namespace detail {

inline void check_theta(const Architecture& arch, const FlatParams& theta) {
    if (theta.size() != param_count(arch)) {
        throw InputError("parameter vector length " + std::to_string(theta.size()) +
                         " does not match architecture (" +
                         std::to_string(param_count(arch)) + ")");
    }
}

inline void check_input(const Architecture& arch, const std::vector<double>& x) {
    if (static_cast<int>(x.size()) != arch.input_dim) {
        throw InputError("input length " + std::to_string(x.size()) +
                         " does not match input_dim " + std::to_string(arch.input_dim));
    }
}

}  // namespace detail

inline std::array<double, 2> forward(const Architecture& arch, const FlatParams& theta,
                                     const std::vector<double>& x) {
    detail::check_input(arch, x);
    detail::check_theta(arch, theta);
    const auto dims = arch.layer_dims();
    std::vector<double> act = x;
    std::vector<double> next;
    std::size_t off = 0;
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
        const int fan_in = dims[l];
        const int fan_out = dims[l + 1];
        const bool last = (l + 2 == dims.size());
        next.assign(fan_out, 0.0);
        for (int o = 0; o < fan_out; ++o) {
            double z = theta[off + static_cast<std::size_t>(fan_in) * fan_out + o];  // bias
            const double* w = &theta[off + static_cast<std::size_t>(o) * fan_in];
            for (int i = 0; i < fan_in; ++i) z += w[i] * act[i];
            next[o] = (last || z > 0.0) ? z : 0.0;  // ReLU'(0) := 0
        }
        off += static_cast<std::size_t>(fan_in) * fan_out + fan_out;
        act.swap(next);
    }
    return {act[0], act[1]};
}

// Mean over samples of the squared Euclidean distance between prediction
// and target.
inline double loss(const Architecture& arch, const FlatParams& theta, const Task& task) {
    if (task.empty()) throw InputError("loss: empty task");
    double total = 0.0;
    for (const auto& s : task.samples) {
        const auto p = forward(arch, theta, s.x);
        const double dx = p[0] - s.y[0];
        const double dy = p[1] - s.y[1];
        total += dx * dx + dy * dy;
    }
    return total / static_cast<double>(task.size());
}

struct LossGrad {
    double value = 0.0;
    std::vector<double> grad;  // d loss / d theta, canonical layout
};

// Exact reverse-mode gradient of loss() with respect to theta.
inline LossGrad loss_grad(const Architecture& arch, const FlatParams& theta, const Task& task) {
    if (task.empty()) throw InputError("loss_grad: empty task");
    detail::check_theta(arch, theta);
    const auto dims = arch.layer_dims();
    const std::size_t n_layers = dims.size() - 1;

    // Per-layer parameter offsets.
    std::vector<std::size_t> offsets(n_layers);
    {
        std::size_t off = 0;
        for (std::size_t l = 0; l < n_layers; ++l) {
            offsets[l] = off;
            off += static_cast<std::size_t>(dims[l]) * dims[l + 1] + dims[l + 1];
        }
    }

    LossGrad out;
    out.grad.assign(theta.size(), 0.0);
    const double inv_m = 1.0 / static_cast<double>(task.size());
    double total = 0.0;

    std::vector<std::vector<double>> acts(n_layers + 1);  // post-activation per layer
    for (const auto& s : task.samples) {
        detail::check_input(arch, s.x);
        acts[0] = s.x;
        for (std::size_t l = 0; l < n_layers; ++l) {
            const int fan_in = dims[l];
            const int fan_out = dims[l + 1];
            const bool last = (l + 1 == n_layers);
            acts[l + 1].assign(fan_out, 0.0);
            for (int o = 0; o < fan_out; ++o) {
                double z = theta[offsets[l] + static_cast<std::size_t>(fan_in) * fan_out + o];
                const double* w = &theta[offsets[l] + static_cast<std::size_t>(o) * fan_in];
                for (int i = 0; i < fan_in; ++i) z += w[i] * acts[l][i];
                acts[l + 1][o] = (last || z > 0.0) ? z : 0.0;
            }
        }

        const double ex = acts[n_layers][0] - s.y[0];
        const double ey = acts[n_layers][1] - s.y[1];
        total += ex * ex + ey * ey;

        // delta = d loss / d (post-activation of current layer)
        std::vector<double> delta = {2.0 * ex * inv_m, 2.0 * ey * inv_m};
        std::vector<double> prev_delta;
        for (std::size_t li = n_layers; li-- > 0;) {
            const int fan_in = dims[li];
            const int fan_out = dims[li + 1];
            const bool last = (li + 1 == n_layers);
            // ReLU mask: post-activation is zero exactly where z <= 0.
            if (!last) {
                for (int o = 0; o < fan_out; ++o) {
                    if (acts[li + 1][o] <= 0.0) delta[o] = 0.0;
                }
            }
            prev_delta.assign(fan_in, 0.0);
            for (int o = 0; o < fan_out; ++o) {
                const double d = delta[o];
                if (d == 0.0) continue;
                double* gw = &out.grad[offsets[li] + static_cast<std::size_t>(o) * fan_in];
                const double* w = &theta[offsets[li] + static_cast<std::size_t>(o) * fan_in];
                for (int i = 0; i < fan_in; ++i) {
                    gw[i] += d * acts[li][i];
                    prev_delta[i] += d * w[i];
                }
                out.grad[offsets[li] + static_cast<std::size_t>(fan_in) * fan_out + o] += d;
            }
            delta.swap(prev_delta);
        }
    }
    // Same reduction order and final division as loss() so the scalar
    // outputs agree bit for bit.
    out.value = total / static_cast<double>(task.size());
    return out;
}

}  // namespace bomlloc
