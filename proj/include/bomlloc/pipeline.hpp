#pragma once

#include <cmath>
#include <cstdint>
#include <deque>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "bomlloc/common.hpp"
#include "bomlloc/net.hpp"
#include "bomlloc/pacoh.hpp"
#include "bomlloc/prob.hpp"
#include "bomlloc/rng.hpp"
#include "bomlloc/svgd.hpp"
#include "bomlloc/task.hpp"

namespace bomlloc {

struct MetaConfig {
    int n_tasks_per_iter = 5;  // n tasks entering each score evaluation
    int max_iters = 500;
    double eta = 0.002;  // SVGD step size
    int particles = 5;   // K
    int mc_samples = 5;  // L
    double beta = 50.0;
    double lambda = 100.0;
    std::uint64_t seed = 0;
    int early_stop_window = 0;  // 0 disables early stopping
    int probe_every = 25;       // iterations between early-stop probes
    // Per-particle score norms are clipped to keep the constant-step update
    // stable when beta*loss is large early in training. 0 disables.
    double clip_score = 100.0;
    int finetune_steps = 200;
    double eta_decay = 1.0;  // multiplicative step-size decay per iteration
    // Fine-tuning runs far fewer steps on a single small task; it gets its
    // own (gentler) step size and clip, independent of the meta-phase ones.
    double finetune_eta = 0.002;
    double finetune_clip = 100.0;
};

struct EvalReport {
    std::vector<double> per_point_error;        // epsilon_m, meters
    double mean_error = 0.0;                    // meters
    double std_error = 0.0;                     // std of per-point errors
    std::vector<double> per_point_uncertainty;  // u_m, meters
    double mean_uncertainty = 0.0;
    int n_networks = 0;  // K*N
};

using TaskSource = std::function<Task(Rng&)>;
// Optional per-iteration observer: (iteration just completed, current set).
using MetaCallback = std::function<void(int, const ParticleSet&)>;
// Optional held-out probe returning an adaptation error used for early
// stopping (lower is better).
using MetaProbe = std::function<double(const ParticleSet&)>;

namespace detail {

inline void clip_norm(std::vector<double>& v, double max_norm) {
    if (max_norm <= 0.0) return;
    double sq = 0.0;
    for (double x : v) sq += x * x;
    const double n = std::sqrt(sq);
    if (n > max_norm) {
        const double s = max_norm / n;
        for (double& x : v) x *= s;
    }
}

inline std::vector<std::vector<double>> particle_scores(const Architecture& arch,
                                                        const ParticleSet& set,
                                                        const std::vector<Task>& tasks,
                                                        const TemperatureConfig& temp,
                                                        const HyperPrior& hyper, Rng& rng,
                                                        double clip) {
    std::vector<std::vector<double>> scores;
    scores.reserve(set.size());
    for (const auto& phi : set.particles) {
        auto s = hyperposterior_score(arch, phi, tasks, temp, hyper, rng);
        clip_norm(s, clip);
        scores.push_back(std::move(s));
    }
    return scores;
}

}  // namespace detail

// Meta-training over historical environments: initialize K particles from
// the hyper-prior, then per iteration sample n tasks and apply one SVGD
// step with the multi-task hyper-posterior score.
inline ParticleSet meta_train(const Architecture& arch, const MetaConfig& cfg,
                              const TaskSource& task_source, const HyperPrior& hyper = {},
                              const MetaCallback& callback = {}, const MetaProbe& probe = {}) {
    if (cfg.particles < 1 || cfg.max_iters < 0 || cfg.n_tasks_per_iter < 1 || cfg.eta <= 0.0) {
        throw InputError("meta_train: invalid configuration");
    }
    Rng root(cfg.seed);
    Rng init_rng = root.split(1);
    Rng task_rng = root.split(2);
    Rng mc_rng = root.split(3);

    const std::size_t p = param_count(arch);
    ParticleSet set;
    for (int k = 0; k < cfg.particles; ++k) {
        set.particles.push_back(sample_particle(p, hyper, init_rng));
    }

    TemperatureConfig temp{cfg.beta, cfg.lambda, cfg.mc_samples, false};
    double eta = cfg.eta;
    double best_avg = std::numeric_limits<double>::infinity();
    int stale = 0;
    std::deque<double> window;

    for (int iter = 0; iter < cfg.max_iters; ++iter) {
        std::vector<Task> tasks;
        tasks.reserve(static_cast<std::size_t>(cfg.n_tasks_per_iter));
        for (int i = 0; i < cfg.n_tasks_per_iter; ++i) tasks.push_back(task_source(task_rng));
        if (iter == 0 && tasks.empty()) throw InputError("meta_train: task source is empty");

        const auto scores =
            detail::particle_scores(arch, set, tasks, temp, hyper, mc_rng, cfg.clip_score);
        set = svgd_step(set, scores, eta);
        eta *= cfg.eta_decay;
        if (callback) callback(iter, set);

        if (probe && cfg.early_stop_window > 0 && (iter + 1) % cfg.probe_every == 0) {
            window.push_back(probe(set));
            while (static_cast<int>(window.size()) > cfg.early_stop_window) window.pop_front();
            double avg = 0.0;
            for (double v : window) avg += v / static_cast<double>(window.size());
            if (avg < best_avg - 1e-12) {
                best_avg = avg;
                stale = 0;
            } else if (static_cast<int>(window.size()) >= cfg.early_stop_window &&
                       ++stale >= cfg.early_stop_window) {
                break;
            }
        }
    }
    return set;
}

// Fine-tuning in the new environment: SVGD with the single-task adaptation
// score (weight lambda/(lambda+beta)) on S0. At meta-test time the learned
// hyper-posterior plays the role of the hyper-prior, so the prior pull is
// re-centered on anchor particles (by default the input set) instead of on
// zero; pulling toward the zero-centered hyper-prior would steadily erase
// the meta-learned solution. The input set is not modified.
inline ParticleSet fine_tune(const Architecture& arch, const ParticleSet& set, const Task& s0,
                             const MetaConfig& cfg, int steps, Rng& rng,
                             const HyperPrior& hyper = {},
                             const std::vector<PriorParticle>* anchors = nullptr) {
    if (s0.empty()) throw InputError("fine_tune: empty adaptation set");
    if (steps < 0) throw InputError("fine_tune: negative step count");
    TemperatureConfig temp{cfg.beta, cfg.lambda, cfg.mc_samples, true};
    const std::vector<Task> tasks{s0};
    const std::vector<PriorParticle>& anchor_ref = anchors ? *anchors : set.particles;
    if (anchor_ref.size() != set.particles.size()) {
        throw InputError("fine_tune: anchor count does not match particle count");
    }
    // Precompute (anchor - hyper-prior center) / sigma_p^2: adding it to the
    // score replaces the pull toward the hyper-prior center with a pull
    // toward the anchor.
    const double inv_var = 1.0 / (hyper.sigma_p * hyper.sigma_p);
    std::vector<std::vector<double>> anchor_flat;
    anchor_flat.reserve(anchor_ref.size());
    for (const auto& a : anchor_ref) {
        auto flat = stack_particle(a);
        const auto center = hyperprior_center(a.dim(), hyper);
        for (std::size_t i = 0; i < flat.size(); ++i) flat[i] = (flat[i] - center[i]) * inv_var;
        anchor_flat.push_back(std::move(flat));
    }

    ParticleSet out = set;
    for (int step = 0; step < steps; ++step) {
        std::vector<std::vector<double>> scores;
        scores.reserve(out.size());
        for (std::size_t k = 0; k < out.size(); ++k) {
            auto s = hyperposterior_score(arch, out.particles[k], tasks, temp, hyper, rng);
            for (std::size_t i = 0; i < s.size(); ++i) s[i] += anchor_flat[k][i];
            detail::clip_norm(s, cfg.finetune_clip);
            scores.push_back(std::move(s));
        }
        out = svgd_step(out, scores, cfg.finetune_eta);
    }
    return out;
}

inline ParticleSet fine_tune(const Architecture& arch, const ParticleSet& set, const Task& s0,
                             const MetaConfig& cfg) {
    Rng rng = Rng(cfg.seed).split(4);
    return fine_tune(arch, set, s0, cfg, cfg.finetune_steps, rng);
}

// Two-level average of Euclidean errors over a K x N prediction table laid
// out particle-major: mean over particles of the per-particle mean error.
inline double two_level_error(const std::vector<std::array<double, 2>>& preds, std::size_t k,
                              int n, const std::array<double, 2>& y) {
    if (preds.size() != k * static_cast<std::size_t>(n)) {
        throw InputError("two_level_error: prediction table size mismatch");
    }
    double err = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
        double err_i = 0.0;
        for (int j = 0; j < n; ++j) {
            const auto& p = preds[i * static_cast<std::size_t>(n) + static_cast<std::size_t>(j)];
            const double dx = p[0] - y[0];
            const double dy = p[1] - y[1];
            err_i += std::sqrt(dx * dx + dy * dy) / static_cast<double>(n);
        }
        err += err_i / static_cast<double>(k);
    }
    return err;
}

// RMS Euclidean deviation of the predictions from their ensemble mean.
inline double ensemble_uncertainty(const std::vector<std::array<double, 2>>& preds) {
    if (preds.empty()) throw InputError("ensemble_uncertainty: empty prediction table");
    // Deviations are shift-invariant; working relative to the first prediction
    // keeps the result exactly zero when every network predicts the same point.
    const std::array<double, 2> ref = preds.front();
    std::array<double, 2> mean{0.0, 0.0};
    for (const auto& q : preds) {
        mean[0] += (q[0] - ref[0]) / static_cast<double>(preds.size());
        mean[1] += (q[1] - ref[1]) / static_cast<double>(preds.size());
    }
    double dev_sq = 0.0;
    for (const auto& q : preds) {
        const double dx = (q[0] - ref[0]) - mean[0];
        const double dy = (q[1] - ref[1]) - mean[1];
        dev_sq += (dx * dx + dy * dy) / static_cast<double>(preds.size());
    }
    return std::sqrt(dev_sq);
}

// Ensemble localization test: N networks sampled per particle, per-point
// error is the two-level average of Euclidean errors over all K*N networks,
// and per-point uncertainty the RMS deviation of the K*N predictions from
// their ensemble mean.
inline EvalReport evaluate(const Architecture& arch, const ParticleSet& set, const Task& s_test,
                           int n_networks, std::uint64_t seed) {
    if (n_networks < 1) throw InputError("evaluate: n_networks must be >= 1");
    if (s_test.empty()) throw InputError("evaluate: empty test set");
    const std::size_t k = set.size();
    if (k == 0) throw InputError("evaluate: empty particle set");

    const std::size_t p = param_count(arch);
    Rng root(seed);
    std::vector<std::vector<FlatParams>> thetas(k);
    for (std::size_t i = 0; i < k; ++i) {
        Rng stream = root.split(i);
        thetas[i].reserve(static_cast<std::size_t>(n_networks));
        for (int j = 0; j < n_networks; ++j) {
            thetas[i].push_back(sample_theta(set.particles[i], stream.normal_vec(p)));
        }
    }

    EvalReport report;
    report.n_networks = static_cast<int>(k) * n_networks;
    report.per_point_error.reserve(s_test.size());
    report.per_point_uncertainty.reserve(s_test.size());
    std::vector<std::array<double, 2>> preds(static_cast<std::size_t>(report.n_networks));

    for (const auto& sample : s_test.samples) {
        std::size_t idx = 0;
        for (std::size_t i = 0; i < k; ++i) {
            for (int j = 0; j < n_networks; ++j) {
                preds[idx++] = forward(arch, thetas[i][static_cast<std::size_t>(j)], sample.x);
            }
        }
        report.per_point_error.push_back(two_level_error(preds, k, n_networks, sample.y));
        report.per_point_uncertainty.push_back(ensemble_uncertainty(preds));
    }

    const double m = static_cast<double>(report.per_point_error.size());
    for (double e : report.per_point_error) report.mean_error += e / m;
    double var = 0.0;
    for (double e : report.per_point_error) {
        var += (e - report.mean_error) * (e - report.mean_error) / m;
    }
    report.std_error = std::sqrt(var);
    for (double u : report.per_point_uncertainty) report.mean_uncertainty += u / m;
    return report;
}

}  // namespace bomlloc
