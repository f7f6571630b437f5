#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "bomlloc/common.hpp"
#include "bomlloc/rng.hpp"
#include "bomlloc/task.hpp"

namespace bomlloc {

// Synthetic indoor-RF environment: log-distance path loss per anchor,
// frequency-selective multipath ripple across bins, and per-call Gaussian
// shadowing. Environments ("days") share geometry and path-loss exponent
// but differ in their domain_seed-driven noise realizations.
struct EnvironmentSpec {
    double room_w = 10.0;  // meters
    double room_h = 8.0;
    std::vector<std::array<double, 2>> anchors{{1.0, 1.0}, {9.0, 1.0}, {1.0, 7.0}, {9.0, 7.0}};
    double path_loss_exponent = 2.5;
    double shadowing_sigma_db = 1.5;
    int n_multipath = 3;
    double multipath_amp_db = 1.0;
    int bins_per_anchor = 6;
    std::uint64_t domain_seed = 0;
    bool los = true;

    int feature_dim() const { return static_cast<int>(anchors.size()) * bins_per_anchor; }
};

namespace detail {
constexpr double kRefDistance = 0.1;  // d0, meters
constexpr double kRefLoss = 40.0;     // PL0, dB
constexpr double kTwoPi = 6.283185307179586476925286766559;

struct Ripple {
    double amp, freq, phase, spatial;
};

// Multipath realization is a fixed function of (domain_seed, anchor).
inline std::vector<Ripple> multipath_for(const EnvironmentSpec& env, std::size_t anchor) {
    Rng rng = Rng(env.domain_seed).split(0xA0 + anchor);
    std::vector<Ripple> paths(static_cast<std::size_t>(env.n_multipath));
    for (auto& p : paths) {
        p.amp = env.multipath_amp_db * rng.uniform(0.5, 1.5);
        p.freq = rng.uniform(0.5, 3.0);
        p.phase = rng.uniform(0.0, kTwoPi);
        p.spatial = rng.uniform(1.0, 6.0);
    }
    return paths;
}
}  // namespace detail

inline std::vector<double> gen_fingerprint(const EnvironmentSpec& env,
                                           const std::array<double, 2>& pos, Rng& rng) {
    if (pos[0] < 0.0 || pos[0] > env.room_w || pos[1] < 0.0 || pos[1] > env.room_h) {
        throw InputError("gen_fingerprint: position outside room");
    }
    const int bins = env.bins_per_anchor;
    std::vector<double> f(static_cast<std::size_t>(env.feature_dim()));
    for (std::size_t a = 0; a < env.anchors.size(); ++a) {
        const double dx = pos[0] - env.anchors[a][0];
        const double dy = pos[1] - env.anchors[a][1];
        const double d = std::max(std::sqrt(dx * dx + dy * dy), detail::kRefDistance);
        const double rss = -(detail::kRefLoss +
                             10.0 * env.path_loss_exponent * std::log10(d / detail::kRefDistance));
        const auto paths = detail::multipath_for(env, a);
        const double shadow = env.shadowing_sigma_db * rng.normal();
        for (int b = 0; b < bins; ++b) {
            double ripple = 0.0;
            for (const auto& p : paths) {
                ripple += p.amp * std::sin(detail::kTwoPi * p.freq * (b + 0.5) / bins + p.phase +
                                           p.spatial * d);
            }
            f[a * bins + b] = rss + ripple + shadow;
        }
    }
    return f;
}

inline Task sample_task(const EnvironmentSpec& env, int m, Rng& rng) {
    if (m < 1) throw InputError("sample_task: m must be >= 1");
    Task task;
    task.domain_id = static_cast<int>(env.domain_seed & 0x7fffffff);
    task.samples.reserve(static_cast<std::size_t>(m));
    for (int i = 0; i < m; ++i) {
        Sample s;
        s.y = {rng.uniform(0.0, env.room_w), rng.uniform(0.0, env.room_h)};
        s.x = gen_fingerprint(env, s.y, rng);
        task.samples.push_back(std::move(s));
    }
    return task;
}

struct Normalization {
    std::vector<double> mean;
    std::vector<double> std;
};

struct EnvironmentSuite {
    std::vector<EnvironmentSpec> environments;
    Normalization normalization;
};

inline void apply_normalization(const Normalization& norm, Task& task) {
    for (auto& s : task.samples) {
        if (s.x.size() != norm.mean.size()) {
            throw InputError("apply_normalization: feature length mismatch");
        }
        for (std::size_t i = 0; i < s.x.size(); ++i) {
            s.x[i] = (s.x[i] - norm.mean[i]) / norm.std[i];
        }
    }
}

// Build a suite of environments sharing room/anchors/exponent, differing in
// domain_seed. NLOS selects heavier multipath and larger shadowing.
// Feature normalization statistics are estimated once over the suite and
// stored alongside it.
inline EnvironmentSuite make_suite(int n_envs, std::uint64_t base_seed, bool los) {
    if (n_envs < 1) throw InputError("make_suite: need at least one environment");
    EnvironmentSuite suite;
    for (int i = 0; i < n_envs; ++i) {
        EnvironmentSpec env;
        env.los = los;
        if (!los) {
            env.n_multipath = 8;
            env.multipath_amp_db = 2.0;
            env.shadowing_sigma_db = 3.0;
        }
        env.domain_seed = Rng(base_seed).split(static_cast<std::uint64_t>(i)).next_u64();
        suite.environments.push_back(env);
    }

    const std::size_t d = static_cast<std::size_t>(suite.environments.front().feature_dim());
    std::vector<double> sum(d, 0.0), sum_sq(d, 0.0);
    std::size_t count = 0;
    for (std::size_t e = 0; e < suite.environments.size(); ++e) {
        Rng rng = Rng(base_seed).split(0x5000 + e);
        const Task probe = sample_task(suite.environments[e], 200, rng);
        for (const auto& s : probe.samples) {
            for (std::size_t i = 0; i < d; ++i) {
                sum[i] += s.x[i];
                sum_sq[i] += s.x[i] * s.x[i];
            }
            ++count;
        }
    }
    suite.normalization.mean.resize(d);
    suite.normalization.std.resize(d);
    for (std::size_t i = 0; i < d; ++i) {
        const double mean = sum[i] / static_cast<double>(count);
        const double var = sum_sq[i] / static_cast<double>(count) - mean * mean;
        suite.normalization.mean[i] = mean;
        suite.normalization.std[i] = std::sqrt(std::max(var, 1e-16));
    }
    return suite;
}

// Sample a task from one suite environment with normalization applied.
inline Task sample_task(const EnvironmentSuite& suite, std::size_t env_index, int m, Rng& rng) {
    if (env_index >= suite.environments.size()) {
        throw InputError("sample_task: environment index out of range");
    }
    Task task = sample_task(suite.environments[env_index], m, rng);
    apply_normalization(suite.normalization, task);
    task.domain_id = static_cast<int>(env_index);
    return task;
}

}  // namespace bomlloc
