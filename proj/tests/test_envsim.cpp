#include <catch_amalgamated.hpp>

#include <cmath>
#include <fstream>

#include <json.hpp>

#include "bomlloc/envsim.hpp"
#include "test_util.hpp"

using namespace bomlloc;

namespace {
EnvironmentSpec clean_env() {
    EnvironmentSpec env;
    env.shadowing_sigma_db = 0.0;
    env.n_multipath = 0;
    env.domain_seed = 1;
    return env;
}
}  // namespace

TEST_CASE("path-loss features decrease with distance along a ray") {
    EnvironmentSpec env = clean_env();
    env.anchors = {{0.0, 0.0}};
    Rng rng(1);
    double prev = 1e9;
    for (double d = 0.5; d < 8.0; d += 0.5) {
        const auto f = gen_fingerprint(env, {d, 0.0}, rng);
        for (double v : f) {
            CHECK(v < prev);
        }
        prev = f[0];
    }
}

TEST_CASE("radially symmetric positions give identical fingerprints when noise is off") {
    EnvironmentSpec env = clean_env();
    env.anchors = {{5.0, 4.0}};  // centered
    Rng rng1(1), rng2(1);
    const auto a = gen_fingerprint(env, {3.0, 4.0}, rng1);
    const auto b = gen_fingerprint(env, {7.0, 4.0}, rng2);
    CHECK(a == b);
}

TEST_CASE("positions outside the room are rejected") {
    EnvironmentSpec env = clean_env();
    Rng rng(1);
    CHECK_THROWS_AS(gen_fingerprint(env, {-0.1, 1.0}, rng), InputError);
    CHECK_THROWS_AS(gen_fingerprint(env, {1.0, 8.5}, rng), InputError);
}

TEST_CASE("fingerprints are finite and deterministic given the stream state") {
    EnvironmentSpec env;
    env.domain_seed = 99;
    Rng rng1(5), rng2(5);
    const auto a = gen_fingerprint(env, {2.0, 3.0}, rng1);
    const auto b = gen_fingerprint(env, {2.0, 3.0}, rng2);
    CHECK(a == b);
    for (double v : a) CHECK(std::isfinite(v));
    CHECK(a.size() == static_cast<std::size_t>(env.feature_dim()));
}

TEST_CASE("fingerprint golden snapshot regenerates bit-identically") {
    std::ifstream in(std::string(BOMLLOC_TEST_DATA_DIR) + "/fingerprint_golden.json");
    REQUIRE(in.good());
    nlohmann::json j;
    in >> j;
    EnvironmentSpec env;
    env.domain_seed = j.at("domain_seed").get<std::uint64_t>();
    Rng rng(j.at("rng_seed").get<std::uint64_t>());
    const std::array<double, 2> pos = {j.at("pos")[0].get<double>(), j.at("pos")[1].get<double>()};
    const auto f = gen_fingerprint(env, pos, rng);
    const auto want = j.at("fingerprint").get<std::vector<double>>();
    REQUIRE(f.size() == want.size());
    for (std::size_t i = 0; i < f.size(); ++i) CHECK(f[i] == want[i]);
}

TEST_CASE("sample_task basics") {
    EnvironmentSpec env;
    env.domain_seed = 3;
    SECTION("determinism at fixed seed") {
        Rng a(10), b(10);
        const Task ta = sample_task(env, 50, a);
        const Task tb = sample_task(env, 50, b);
        REQUIRE(ta.size() == 50);
        for (std::size_t i = 0; i < 50; ++i) {
            CHECK(ta.samples[i].x == tb.samples[i].x);
            CHECK(ta.samples[i].y == tb.samples[i].y);
        }
    }
    SECTION("m < 1 rejected") {
        Rng rng(1);
        CHECK_THROWS_AS(sample_task(env, 0, rng), InputError);
    }
    SECTION("coordinates stay inside the room") {
        Rng rng(2);
        const Task t = sample_task(env, 200, rng);
        for (const auto& s : t.samples) {
            CHECK(s.y[0] >= 0.0);
            CHECK(s.y[0] <= env.room_w);
            CHECK(s.y[1] >= 0.0);
            CHECK(s.y[1] <= env.room_h);
        }
    }
}

TEST_CASE("sampled positions are uniform over the room") {
    EnvironmentSpec env = clean_env();
    Rng rng(77);
    const int m = 10000;
    const Task t = sample_task(env, m, rng);
    // Chi-square over a 4x4 grid; 15 dof, reject only below p = 0.001
    // (critical value 37.70).
    std::array<int, 16> counts{};
    for (const auto& s : t.samples) {
        const int gx = std::min(3, static_cast<int>(s.y[0] / (env.room_w / 4.0)));
        const int gy = std::min(3, static_cast<int>(s.y[1] / (env.room_h / 4.0)));
        counts[static_cast<std::size_t>(gy * 4 + gx)]++;
    }
    const double expected = m / 16.0;
    double chi_sq = 0.0;
    for (int c : counts) chi_sq += (c - expected) * (c - expected) / expected;
    CHECK(chi_sq < 37.70);
}

TEST_CASE("make_suite structure") {
    SECTION("two suites from the same seeds are identical") {
        const auto a = make_suite(5, 42, true);
        const auto b = make_suite(5, 42, true);
        REQUIRE(a.environments.size() == 5);
        for (std::size_t i = 0; i < 5; ++i) {
            CHECK(a.environments[i].domain_seed == b.environments[i].domain_seed);
        }
        CHECK(a.normalization.mean == b.normalization.mean);
        CHECK(a.normalization.std == b.normalization.std);
    }
    SECTION("environments share geometry but differ in domain seeds") {
        const auto suite = make_suite(5, 42, true);
        for (std::size_t i = 1; i < 5; ++i) {
            CHECK(suite.environments[i].anchors == suite.environments[0].anchors);
            CHECK(suite.environments[i].path_loss_exponent ==
                  suite.environments[0].path_loss_exponent);
            CHECK(suite.environments[i].domain_seed != suite.environments[0].domain_seed);
        }
    }
    SECTION("cross-domain fingerprints differ, within-domain repeats are identical") {
        const auto suite = make_suite(3, 9, true);
        const std::array<double, 2> pos = {4.0, 3.0};
        Rng r1(1), r2(1), r3(1);
        const auto a = gen_fingerprint(suite.environments[0], pos, r1);
        const auto a_again = gen_fingerprint(suite.environments[0], pos, r2);
        const auto b = gen_fingerprint(suite.environments[1], pos, r3);
        CHECK(a == a_again);
        CHECK(a != b);
    }
}

TEST_CASE("NLOS fingerprints are noisier than LOS at a fixed position") {
    const auto los = make_suite(1, 4, true);
    const auto nlos = make_suite(1, 4, false);
    auto avg_variance = [](const EnvironmentSpec& env) {
        Rng rng(123);
        double total_var = 0.0;
        const int positions = 100;
        const int reps = 10;
        Rng pos_rng(9);
        for (int p = 0; p < positions; ++p) {
            const std::array<double, 2> pos = {pos_rng.uniform(0.0, env.room_w),
                                               pos_rng.uniform(0.0, env.room_h)};
            std::vector<std::vector<double>> draws;
            for (int r = 0; r < reps; ++r) draws.push_back(gen_fingerprint(env, pos, rng));
            double var = 0.0;
            const std::size_t d = draws[0].size();
            for (std::size_t i = 0; i < d; ++i) {
                double mean = 0.0, sq = 0.0;
                for (const auto& dr : draws) {
                    mean += dr[i] / reps;
                    sq += dr[i] * dr[i] / reps;
                }
                var += (sq - mean * mean) / static_cast<double>(d);
            }
            total_var += var / positions;
        }
        return total_var;
    };
    CHECK(avg_variance(nlos.environments[0]) > avg_variance(los.environments[0]));
}

TEST_CASE("suite-level task sampling applies normalization") {
    const auto suite = make_suite(3, 21, true);
    Rng rng(2);
    const Task t = sample_task(suite, 0, 500, rng);
    // Standardized features should be roughly zero-mean unit-variance.
    const std::size_t d = t.samples[0].x.size();
    for (std::size_t i = 0; i < d; i += 7) {
        double mean = 0.0, sq = 0.0;
        for (const auto& s : t.samples) {
            mean += s.x[i] / static_cast<double>(t.size());
            sq += s.x[i] * s.x[i] / static_cast<double>(t.size());
        }
        CHECK(std::abs(mean) < 0.5);
        const double sd = std::sqrt(sq - mean * mean);
        CHECK(sd > 0.3);
        CHECK(sd < 3.0);
    }
    CHECK_THROWS_AS(sample_task(suite, 7, 10, rng), InputError);
}
