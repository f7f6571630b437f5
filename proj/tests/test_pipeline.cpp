#include <catch_amalgamated.hpp>

#include <cmath>

#include "bomlloc/pipeline.hpp"
#include "test_util.hpp"

using namespace bomlloc;

namespace {

Architecture tiny_arch() {
    Architecture arch;
    arch.input_dim = 2;
    arch.hidden_dims = {3, 3, 3, 3};
    return arch;
}

MetaConfig tiny_cfg() {
    MetaConfig cfg;
    cfg.particles = 3;
    cfg.mc_samples = 2;
    cfg.n_tasks_per_iter = 2;
    cfg.max_iters = 5;
    cfg.beta = 1.0;
    cfg.lambda = 1.0;
    cfg.seed = 42;
    return cfg;
}

TaskSource random_source(const Architecture& arch) {
    return [arch](Rng& rng) { return test_util::random_task(arch, 5, rng); };
}

}  // namespace

TEST_CASE("defaults follow the published hyperparameters") {
    MetaConfig cfg;
    CHECK(cfg.eta == 0.002);
    CHECK(cfg.particles == 5);
}

TEST_CASE("meta_train with zero iterations returns the hyper-prior draw unchanged") {
    Architecture arch = tiny_arch();
    MetaConfig cfg = tiny_cfg();
    cfg.max_iters = 0;
    const auto set = meta_train(arch, cfg, random_source(arch));
    REQUIRE(set.size() == 3);
    CHECK(set.step_count == 0);

    // Particle initialization uses the documented stream split(1) of the seed.
    HyperPrior hyper;
    Rng init = Rng(cfg.seed).split(1);
    for (int k = 0; k < cfg.particles; ++k) {
        const auto expected = sample_particle(param_count(arch), hyper, init);
        CHECK(set.particles[static_cast<std::size_t>(k)] == expected);
    }
}

TEST_CASE("meta_train is deterministic and advances particles") {
    Architecture arch = tiny_arch();
    MetaConfig cfg = tiny_cfg();
    const auto a = meta_train(arch, cfg, random_source(arch));
    const auto b = meta_train(arch, cfg, random_source(arch));
    CHECK(a.particles == b.particles);
    CHECK(a.step_count == cfg.max_iters);

    cfg.max_iters = 0;
    const auto init = meta_train(arch, cfg, random_source(arch));
    CHECK(a.particles != init.particles);
}

TEST_CASE("fine_tune with zero steps is the identity and does not mutate its input") {
    Architecture arch = tiny_arch();
    MetaConfig cfg = tiny_cfg();
    cfg.max_iters = 0;
    const auto set = meta_train(arch, cfg, random_source(arch));
    Rng task_rng(3);
    const Task s0 = test_util::random_task(arch, 5, task_rng);

    Rng ft(1);
    const auto same = fine_tune(arch, set, s0, cfg, 0, ft);
    CHECK(same.particles == set.particles);

    const auto before = set.particles;
    Rng ft2(1);
    const auto moved = fine_tune(arch, set, s0, cfg, 3, ft2);
    CHECK(set.particles == before);
    CHECK(moved.particles != before);
    CHECK_THROWS_AS(fine_tune(arch, set, Task{}, cfg, 1, ft2), InputError);
}

TEST_CASE("two_level_error hand case: distances 1 and 3 average to 2") {
    const std::vector<std::array<double, 2>> preds = {{1.0, 0.0}, {3.0, 0.0}};
    CHECK(two_level_error(preds, 1, 2, {0.0, 0.0}) == 2.0);
}

TEST_CASE("evaluate matches a brute-force recomputation of the prediction table") {
    Architecture arch = tiny_arch();
    MetaConfig cfg = tiny_cfg();
    const auto set = meta_train(arch, cfg, random_source(arch));
    Rng task_rng(5);
    const Task s_test = test_util::random_task(arch, 8, task_rng);
    const int n = 4;
    const std::uint64_t seed = 909;
    const auto report = evaluate(arch, set, s_test, n, seed);
    REQUIRE(report.per_point_error.size() == s_test.size());
    CHECK(report.n_networks == static_cast<int>(set.size()) * n);

    // Independent recomputation: resample every network via the documented
    // per-particle stream split and average with plain loops.
    const std::size_t p = param_count(arch);
    std::vector<FlatParams> nets;
    for (std::size_t i = 0; i < set.size(); ++i) {
        Rng stream = Rng(seed).split(i);
        for (int j = 0; j < n; ++j) {
            nets.push_back(sample_theta(set.particles[i], stream.normal_vec(p)));
        }
    }
    for (std::size_t m = 0; m < s_test.size(); ++m) {
        double eps_m = 0.0;
        for (std::size_t i = 0; i < set.size(); ++i) {
            double eps_mi = 0.0;
            for (int j = 0; j < n; ++j) {
                const auto pred = test_util::forward_oracle(
                    arch, nets[i * static_cast<std::size_t>(n) + static_cast<std::size_t>(j)],
                    s_test.samples[m].x);
                const double dx = pred[0] - s_test.samples[m].y[0];
                const double dy = pred[1] - s_test.samples[m].y[1];
                eps_mi += std::sqrt(dx * dx + dy * dy);
            }
            eps_m += eps_mi / n;
        }
        eps_m /= static_cast<double>(set.size());
        CHECK(report.per_point_error[m] == Catch::Approx(eps_m).epsilon(1e-12));
    }

    // mean_error is the arithmetic mean of the per-point errors.
    double mean = 0.0;
    for (double e : report.per_point_error) mean += e;
    mean /= static_cast<double>(report.per_point_error.size());
    CHECK(report.mean_error == Catch::Approx(mean).epsilon(1e-14));
    for (double e : report.per_point_error) CHECK(e >= 0.0);
    for (double u : report.per_point_uncertainty) CHECK(u >= 0.0);
}

TEST_CASE("evaluate input validation") {
    Architecture arch = tiny_arch();
    MetaConfig cfg = tiny_cfg();
    cfg.max_iters = 0;
    const auto set = meta_train(arch, cfg, random_source(arch));
    Rng rng(1);
    const Task s_test = test_util::random_task(arch, 3, rng);
    CHECK_THROWS_AS(evaluate(arch, set, s_test, 0, 1), InputError);
    CHECK_THROWS_AS(evaluate(arch, set, Task{}, 1, 1), InputError);
}

TEST_CASE("error scales linearly with coordinate scale") {
    // Doubling the output layer (mu and sigma) and the targets doubles every
    // prediction and error.
    Architecture arch = tiny_arch();
    MetaConfig cfg = tiny_cfg();
    const auto set = meta_train(arch, cfg, random_source(arch));
    Rng rng(9);
    Task s_test = test_util::random_task(arch, 6, rng);

    ParticleSet scaled = set;
    const std::size_t p = param_count(arch);
    const auto dims = arch.layer_dims();
    std::size_t last_layer_params =
        static_cast<std::size_t>(dims[dims.size() - 2]) * dims.back() + dims.back();
    for (auto& phi : scaled.particles) {
        for (std::size_t i = p - last_layer_params; i < p; ++i) {
            phi.mu[i] *= 2.0;
            phi.log_sigma[i] += std::log(2.0);
        }
    }
    Task s_scaled = s_test;
    for (auto& s : s_scaled.samples) {
        s.y[0] *= 2.0;
        s.y[1] *= 2.0;
    }
    const auto base = evaluate(arch, set, s_test, 3, 77);
    const auto doubled = evaluate(arch, scaled, s_scaled, 3, 77);
    CHECK(doubled.mean_error == Catch::Approx(2.0 * base.mean_error).epsilon(1e-9));
    CHECK(doubled.mean_uncertainty == Catch::Approx(2.0 * base.mean_uncertainty).epsilon(1e-9));
}

TEST_CASE("meta-training moves the mean networks toward the family mean") {
    // Linear family: input fixed at 1, targets (w_i, 0) with w_i ~ N(1.5, 0.1).
    // After meta-training, the particle-mean networks' prediction at x=1
    // should be closer to the analytic family mean (1.5, 0) than at init.
    Architecture arch;
    arch.input_dim = 1;
    arch.hidden_dims = {4, 4, 4, 4};
    TaskSource family = [](Rng& rng) {
        Task t;
        const double w = 1.5 + 0.1 * rng.normal();
        for (int i = 0; i < 5; ++i) t.samples.push_back({{1.0}, {w, 0.0}});
        return t;
    };
    MetaConfig cfg;
    cfg.particles = 3;
    cfg.mc_samples = 3;
    cfg.n_tasks_per_iter = 4;
    cfg.max_iters = 400;
    cfg.eta = 0.01;
    cfg.beta = 5.0;
    cfg.lambda = 20.0;
    cfg.seed = 11;

    auto mean_distance = [&](const ParticleSet& set) {
        double total = 0.0;
        for (const auto& phi : set.particles) {
            const auto pred = forward(arch, phi.mu, {1.0});
            total += std::hypot(pred[0] - 1.5, pred[1]) / static_cast<double>(set.size());
        }
        return total;
    };

    MetaConfig init_cfg = cfg;
    init_cfg.max_iters = 0;
    const double before = mean_distance(meta_train(arch, init_cfg, family));
    const double after = mean_distance(meta_train(arch, cfg, family));
    CHECK(after < before);
}

TEST_CASE("fine-tuning a prior-generated task improves held-out loss (median over seeds)") {
    Architecture arch = tiny_arch();
    HyperPrior hyper;
    const std::size_t p = param_count(arch);
    int improved = 0;
    const int n_seeds = 20;
    for (int seed = 0; seed < n_seeds; ++seed) {
        Rng rng(1000 + seed);
        // Generator network drawn from a hyper-prior particle's prior.
        const auto gen_phi = sample_particle(p, hyper, rng);
        const auto theta_star = sample_theta(gen_phi, rng.normal_vec(p));
        auto make_task = [&](int m) {
            Task t;
            for (int i = 0; i < m; ++i) {
                Sample s;
                s.x = rng.normal_vec(static_cast<std::size_t>(arch.input_dim));
                const auto y = forward(arch, theta_star, s.x);
                s.y = {y[0], y[1]};
                t.samples.push_back(std::move(s));
            }
            return t;
        };
        const Task s0 = make_task(20);
        const Task held_out = make_task(20);

        MetaConfig cfg = tiny_cfg();
        cfg.seed = static_cast<std::uint64_t>(seed);
        cfg.max_iters = 0;
        cfg.finetune_eta = 0.005;
        const auto init = meta_train(arch, cfg, random_source(arch));
        Rng ft(static_cast<std::uint64_t>(seed) + 5000);
        const auto tuned = fine_tune(arch, init, s0, cfg, 150, ft);
        const double before = evaluate(arch, init, held_out, 3, 7).mean_error;
        const double after = evaluate(arch, tuned, held_out, 3, 7).mean_error;
        if (after <= before) ++improved;
    }
    CHECK(improved > n_seeds / 2);
}

TEST_CASE("deterministic ensembles report zero uncertainty") {
    Architecture arch = tiny_arch();
    const std::size_t p = param_count(arch);
    ParticleSet set;
    Rng rng(3);
    // Both particles share a mean: with the prior variance clamped to zero
    // every sampled network collapses onto the same deterministic predictor,
    // so the ensemble spread must vanish exactly.
    const auto mu = rng.normal_vec(p);
    for (int k = 0; k < 2; ++k) {
        PriorParticle phi;
        phi.mu = mu;
        phi.log_sigma.assign(p, -745.0);  // exp underflows below double spacing
        set.particles.push_back(std::move(phi));
    }
    Rng task_rng(4);
    const Task s_test = test_util::random_task(arch, 5, task_rng);
    const auto report = evaluate(arch, set, s_test, 4, 123);
    CHECK(report.mean_uncertainty == 0.0);
    for (double u : report.per_point_uncertainty) CHECK(u == 0.0);
}

TEST_CASE("larger prior sigma increases reported uncertainty") {
    Architecture arch = tiny_arch();
    const std::size_t p = param_count(arch);
    Rng rng(8);
    const auto mu = rng.normal_vec(p);
    Rng task_rng(9);
    const Task s_test = test_util::random_task(arch, 5, task_rng);

    double prev = -1.0;
    for (double ls : {-3.0, -1.0, 0.0}) {
        ParticleSet set;
        PriorParticle phi;
        phi.mu = mu;
        phi.log_sigma.assign(p, ls);
        set.particles.push_back(std::move(phi));
        const auto report = evaluate(arch, set, s_test, 8, 55);
        CHECK(report.mean_uncertainty > prev);
        prev = report.mean_uncertainty;
    }
}
