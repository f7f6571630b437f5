#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <vector>

#include "bomlloc/common.hpp"
#include "bomlloc/net.hpp"
#include "bomlloc/pipeline.hpp"
#include "bomlloc/rng.hpp"
#include "bomlloc/task.hpp"

namespace bomlloc {

struct MamlConfig {
    double inner_lr = 0.01;
    int inner_steps = 5;
    double meta_lr = 0.002;
    int meta_iters = 500;
    int tasks_per_iter = 5;
    std::uint64_t seed = 0;
    double clip_grad = 100.0;
};

// Plain gradient descent on the task MSE from a point initialization.
// Shared by MAML inner adaptation and the baselines' fine-tuning protocol.
inline FlatParams finetune_point(const Architecture& arch, const FlatParams& theta0,
                                 const Task& s0, int steps, double lr, double clip = 0.0) {
    if (s0.empty()) throw InputError("finetune_point: empty dataset");
    if (steps < 0) throw InputError("finetune_point: negative step count");
    FlatParams theta = theta0;
    for (int s = 0; s < steps; ++s) {
        auto lg = loss_grad(arch, theta, s0);
        detail::clip_norm(lg.grad, clip);
        for (std::size_t i = 0; i < theta.size(); ++i) theta[i] -= lr * lg.grad[i];
    }
    return theta;
}

// First-order MAML: inner-adapt on each sampled task, take the adapted-point
// gradient as the outer gradient.
inline FlatParams maml_meta_train(const Architecture& arch, const MamlConfig& cfg,
                                  const TaskSource& task_source,
                                  const MetaCallback& callback = {}) {
    if (cfg.meta_iters < 0 || cfg.tasks_per_iter < 1) {
        throw InputError("maml_meta_train: invalid configuration");
    }
    Rng root(cfg.seed);
    Rng init_rng = root.split(1);
    Rng task_rng = root.split(2);

    const std::size_t p = param_count(arch);
    // Small random init, same scale family as a hyper-prior mu draw.
    FlatParams theta0(p);
    for (auto& w : theta0) w = 0.5 * init_rng.normal();

    for (int iter = 0; iter < cfg.meta_iters; ++iter) {
        std::vector<double> outer(p, 0.0);
        for (int t = 0; t < cfg.tasks_per_iter; ++t) {
            const Task task = task_source(task_rng);
            const FlatParams adapted =
                finetune_point(arch, theta0, task, cfg.inner_steps, cfg.inner_lr, cfg.clip_grad);
            const auto lg = loss_grad(arch, adapted, task);
            for (std::size_t i = 0; i < p; ++i) {
                outer[i] += lg.grad[i] / static_cast<double>(cfg.tasks_per_iter);
            }
        }
        if (cfg.clip_grad > 0.0) {
            double sq = 0.0;
            for (double g : outer) sq += g * g;
            const double n = std::sqrt(sq);
            if (n > cfg.clip_grad) {
                for (double& g : outer) g *= cfg.clip_grad / n;
            }
        }
        for (std::size_t i = 0; i < p; ++i) theta0[i] -= cfg.meta_lr * outer[i];
        if (callback) callback(iter, ParticleSet{});
    }
    return theta0;
}

// Mean of the k nearest training coordinates under Euclidean feature
// distance; ties broken by lower sample index.
inline std::array<double, 2> knn_predict(const Task& train, const std::vector<double>& x, int k) {
    if (k < 1) throw InputError("knn_predict: k must be >= 1");
    if (static_cast<std::size_t>(k) > train.size()) {
        throw InputError("knn_predict: k exceeds training set size");
    }
    std::vector<std::pair<double, std::size_t>> dist;
    dist.reserve(train.size());
    for (std::size_t i = 0; i < train.size(); ++i) {
        if (train.samples[i].x.size() != x.size()) {
            throw InputError("knn_predict: feature length mismatch");
        }
        double sq = 0.0;
        for (std::size_t d = 0; d < x.size(); ++d) {
            const double diff = train.samples[i].x[d] - x[d];
            sq += diff * diff;
        }
        dist.emplace_back(sq, i);
    }
    std::stable_sort(dist.begin(), dist.end(),
                     [](const auto& a, const auto& b) { return a.first < b.first; });
    std::array<double, 2> pred{0.0, 0.0};
    for (int i = 0; i < k; ++i) {
        pred[0] += train.samples[dist[static_cast<std::size_t>(i)].second].y[0] / k;
        pred[1] += train.samples[dist[static_cast<std::size_t>(i)].second].y[1] / k;
    }
    return pred;
}

// Point-estimate evaluation with the same per-point Euclidean error metric
// as pipeline::evaluate (K = N = 1 semantics, zero uncertainty).
inline EvalReport evaluate_point(const Architecture& arch, const FlatParams& theta,
                                 const Task& s_test) {
    if (s_test.empty()) throw InputError("evaluate_point: empty test set");
    EvalReport report;
    report.n_networks = 1;
    for (const auto& s : s_test.samples) {
        const auto p = forward(arch, theta, s.x);
        const double dx = p[0] - s.y[0];
        const double dy = p[1] - s.y[1];
        report.per_point_error.push_back(std::sqrt(dx * dx + dy * dy));
        report.per_point_uncertainty.push_back(0.0);
    }
    const double m = static_cast<double>(report.per_point_error.size());
    for (double e : report.per_point_error) report.mean_error += e / m;
    double var = 0.0;
    for (double e : report.per_point_error) {
        var += (e - report.mean_error) * (e - report.mean_error) / m;
    }
    report.std_error = std::sqrt(var);
    return report;
}

inline EvalReport evaluate_knn(const Task& train, const Task& s_test, int k) {
    if (s_test.empty()) throw InputError("evaluate_knn: empty test set");
    EvalReport report;
    report.n_networks = 1;
    for (const auto& s : s_test.samples) {
        const auto p = knn_predict(train, s.x, k);
        const double dx = p[0] - s.y[0];
        const double dy = p[1] - s.y[1];
        report.per_point_error.push_back(std::sqrt(dx * dx + dy * dy));
        report.per_point_uncertainty.push_back(0.0);
    }
    const double m = static_cast<double>(report.per_point_error.size());
    for (double e : report.per_point_error) report.mean_error += e / m;
    double var = 0.0;
    for (double e : report.per_point_error) {
        var += (e - report.mean_error) * (e - report.mean_error) / m;
    }
    report.std_error = std::sqrt(var);
    return report;
}

}  // namespace bomlloc
