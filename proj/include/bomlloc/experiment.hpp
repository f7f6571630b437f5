#pragma once

#include <chrono>
#include <filesystem>
#include <string>
#include <vector>

#include "bomlloc/baselines.hpp"
#include "bomlloc/common.hpp"
#include "bomlloc/envsim.hpp"
#include "bomlloc/io.hpp"
#include "bomlloc/pipeline.hpp"

namespace bomlloc {

struct ExperimentConfig {
    MetaConfig meta;
    MamlConfig maml;
    int n_envs = 5;
    bool los = true;
    int n_tasks_total = 100;  // meta-training task pool size
    int train_task_size = 50;
    int finetune_size = 30;  // |S0|
    int test_size = 50;      // |S_test|
    int n_networks = 10;     // N posterior samples per particle
    int checkpoint_every = 10;
    int meta_record_every = 50;
    std::uint64_t suite_seed = 7;
    int knn_k = 3;
    std::vector<std::string> methods{"boml", "maml", "randinit", "knn"};
    // wall_ms is written as 0 unless enabled, so that identical config+seed
    // reruns produce byte-identical CSV output.
    bool record_wall_time = false;
};

// Data for one leave-one-environment-out rotation: training task pool from
// the remaining environments plus S0/S_test from the held-out one.
struct RotationData {
    std::vector<Task> pool;
    Task s0;
    Task s_test;
};

inline RotationData make_rotation_data(const EnvironmentSuite& suite, std::size_t holdout,
                                       const ExperimentConfig& cfg, std::uint64_t seed) {
    if (suite.environments.size() < 2) {
        throw InputError("make_rotation_data: need at least 2 environments");
    }
    if (holdout >= suite.environments.size()) {
        throw InputError("make_rotation_data: holdout index out of range");
    }
    std::vector<std::size_t> train_envs;
    for (std::size_t e = 0; e < suite.environments.size(); ++e) {
        if (e != holdout) train_envs.push_back(e);
    }
    Rng rng = Rng(seed).split(0xD0 + holdout);
    RotationData data;
    data.pool.reserve(static_cast<std::size_t>(cfg.n_tasks_total));
    for (int t = 0; t < cfg.n_tasks_total; ++t) {
        const std::size_t env = train_envs[static_cast<std::size_t>(t) % train_envs.size()];
        data.pool.push_back(sample_task(suite, env, cfg.train_task_size, rng));
    }
    data.s0 = sample_task(suite, holdout, cfg.finetune_size, rng);
    data.s_test = sample_task(suite, holdout, cfg.test_size, rng);
    return data;
}

// Uniform sampling (with replacement) from a fixed task pool.
inline TaskSource pool_source(const std::vector<Task>& pool) {
    if (pool.empty()) throw InputError("pool_source: empty task pool");
    return [&pool](Rng& rng) -> Task {
        return pool[static_cast<std::size_t>(rng.next_u64() % pool.size())];
    };
}

// Held-out test error recorded at each fine-tuning checkpoint.
struct FinetuneCurve {
    std::vector<int> steps;
    std::vector<EvalReport> reports;
    std::vector<BoundTerms> bounds;
    ParticleSet final_set;      // BOML/randinit
    FlatParams final_theta;     // MAML
};

inline FinetuneCurve run_boml_rotation(const Architecture& arch, const ExperimentConfig& cfg,
                                       const RotationData& data, std::uint64_t seed,
                                       bool meta = true, const MetaCallback& meta_cb = {}) {
    MetaConfig mc = cfg.meta;
    mc.seed = seed;
    const HyperPrior hyper;
    ParticleSet set;
    if (meta) {
        set = meta_train(arch, mc, pool_source(data.pool), hyper, meta_cb);
    } else {
        Rng init = Rng(seed).split(1);
        for (int k = 0; k < mc.particles; ++k) {
            set.particles.push_back(sample_particle(param_count(arch), hyper, init));
        }
    }

    TemperatureConfig temp{mc.beta, mc.lambda, mc.mc_samples, true};
    FinetuneCurve curve;
    Rng ft_rng = Rng(seed).split(4);
    Rng bt_rng = Rng(seed).split(7);
    const std::uint64_t eval_seed = Rng(seed).split(5).next_u64();
    const auto record = [&](int step) {
        curve.steps.push_back(step);
        curve.reports.push_back(evaluate(arch, set, data.s_test, cfg.n_networks, eval_seed));
        curve.bounds.push_back(bound_terms(arch, set.particles, {data.s0}, temp, hyper, bt_rng));
    };
    // The adaptation prior stays centered on the meta solution for the whole
    // fine-tuning run, not on each checkpoint chunk's starting point.
    const std::vector<PriorParticle> anchors = set.particles;
    record(0);
    for (int step = cfg.checkpoint_every; step <= cfg.meta.finetune_steps;
         step += cfg.checkpoint_every) {
        set = fine_tune(arch, set, data.s0, mc, cfg.checkpoint_every, ft_rng, hyper, &anchors);
        record(step);
    }
    curve.final_set = set;
    return curve;
}

inline FinetuneCurve run_maml_rotation(const Architecture& arch, const ExperimentConfig& cfg,
                                       const RotationData& data, std::uint64_t seed) {
    MamlConfig mc = cfg.maml;
    mc.seed = seed;
    FlatParams theta = maml_meta_train(arch, mc, pool_source(data.pool));
    FinetuneCurve curve;
    curve.steps.push_back(0);
    curve.reports.push_back(evaluate_point(arch, theta, data.s_test));
    for (int step = cfg.checkpoint_every; step <= cfg.meta.finetune_steps;
         step += cfg.checkpoint_every) {
        theta = finetune_point(arch, theta, data.s0, cfg.checkpoint_every, mc.inner_lr,
                               mc.clip_grad);
        curve.steps.push_back(step);
        curve.reports.push_back(evaluate_point(arch, theta, data.s_test));
    }
    curve.final_theta = theta;
    return curve;
}

// Full leave-one-environment-out experiment. Writes one metrics CSV and one
// checkpoint per rotation into out_dir.
inline void run_experiment(const Architecture& arch, const ExperimentConfig& cfg,
                           const EnvironmentSuite& suite, const std::string& out_dir) {
    if (suite.environments.size() < 2) {
        throw InputError("run_experiment: need at least 2 environments");
    }
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);
    MetricsWriter metrics(out_dir + "/metrics.csv");
    const auto t0 = std::chrono::steady_clock::now();
    const auto wall = [&t0, &cfg]() -> long {
        if (!cfg.record_wall_time) return 0;
        return std::chrono::duration_cast<std::chrono::milliseconds>(
                   std::chrono::steady_clock::now() - t0)
            .count();
    };
    const HyperPrior hyper;
    TemperatureConfig temp{cfg.meta.beta, cfg.meta.lambda, cfg.meta.mc_samples, false};

    for (std::size_t rot = 0; rot < suite.environments.size(); ++rot) {
        const RotationData data = make_rotation_data(suite, rot, cfg, cfg.meta.seed);
        const std::uint64_t rot_seed = Rng(cfg.meta.seed).split(0xE0 + rot).next_u64();

        for (const auto& method : cfg.methods) {
            if (method == "boml" || method == "randinit") {
                MetaCallback meta_cb;
                Rng bound_rng = Rng(rot_seed).split(6);
                if (method == "boml") {
                    meta_cb = [&](int iter, const ParticleSet& set) {
                        if ((iter + 1) % cfg.meta_record_every != 0) return;
                        const auto bt = bound_terms(arch, set.particles, {data.s0}, temp, hyper,
                                                    bound_rng);
                        const auto rep = evaluate(arch, set, data.s_test, cfg.n_networks,
                                                  rot_seed);
                        metrics.row(method, static_cast<int>(rot), "meta", iter + 1,
                                    rep.mean_error, rep.std_error, rep.mean_uncertainty,
                                    bt.empirical_term, bt.kl_term, wall());
                    };
                }
                const auto curve = run_boml_rotation(arch, cfg, data, rot_seed,
                                                     method == "boml", meta_cb);
                for (std::size_t i = 0; i < curve.steps.size(); ++i) {
                    metrics.row(method, static_cast<int>(rot), "finetune", curve.steps[i],
                                curve.reports[i].mean_error, curve.reports[i].std_error,
                                curve.reports[i].mean_uncertainty, curve.bounds[i].empirical_term,
                                curve.bounds[i].kl_term, wall());
                }
                if (method == "boml") {
                    Checkpoint ckpt;
                    ckpt.arch = arch;
                    ckpt.particles = curve.final_set.particles;
                    ckpt.temperature = temp;
                    ckpt.seed = rot_seed;
                    ckpt.step_count = curve.final_set.step_count;
                    save_checkpoint(out_dir + "/checkpoint_rot" + std::to_string(rot) + ".json",
                                    ckpt);
                }
            } else if (method == "maml") {
                const auto curve = run_maml_rotation(arch, cfg, data, rot_seed);
                for (std::size_t i = 0; i < curve.steps.size(); ++i) {
                    metrics.row(method, static_cast<int>(rot), "finetune", curve.steps[i],
                                curve.reports[i].mean_error, curve.reports[i].std_error,
                                curve.reports[i].mean_uncertainty, 0.0, 0.0, wall());
                }
            } else if (method == "knn") {
                const auto rep = evaluate_knn(data.s0, data.s_test,
                                              std::min(cfg.knn_k,
                                                       static_cast<int>(data.s0.size())));
                metrics.row(method, static_cast<int>(rot), "finetune", 0, rep.mean_error,
                            rep.std_error, rep.mean_uncertainty, 0.0, 0.0, wall());
            } else {
                throw InputError("run_experiment: unknown method " + method);
            }
        }
        metrics.flush();
    }
}

}  // namespace bomlloc
