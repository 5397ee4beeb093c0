#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "rrx/golden.hpp"
#include "rrx/montecarlo.hpp"
#include "rrx/rng.hpp"
#include "test_support.hpp"

using namespace rrx;

namespace {

ExperimentConfig a2_config() {
    ExperimentConfig config;
    config.grid = golden::counterexample_grid();
    config.functions = {golden::counterexample_function()};
    config.schedule = {0, 1};
    config.n = 1000;
    config.reps = 2000;
    config.threads = 2;
    config.seed = 1234;
    return config;
}

bool reports_identical(const ExperimentReport& a, const ExperimentReport& b) {
    return (a.mean - b.mean).cwiseAbs().maxCoeff() == 0.0 &&
           (a.nvar - b.nvar).cwiseAbs().maxCoeff() == 0.0 &&
           (a.bias_scaled - b.bias_scaled).cwiseAbs().maxCoeff() == 0.0 &&
           (a.ks - b.ks).cwiseAbs().maxCoeff() == 0.0 && a.dropped == b.dropped;
}

}  // namespace

TEST_CASE("experiment validation") {
    ExperimentConfig config = a2_config();
    SUBCASE("wrong generator") {
        config.generator = ExperimentConfig::Generator::BivariateNormal;
        CHECK_THROWS_AS(run_raking_experiment(config), ValidationError);
    }
    SUBCASE("degenerate sizes") {
        config.n = 1;
        CHECK_THROWS_AS(run_raking_experiment(config), ValidationError);
    }
    SUBCASE("no functions") {
        config.functions.clear();
        CHECK_THROWS_AS(run_raking_experiment(config), ValidationError);
    }
    SUBCASE("schedule out of range") {
        config.schedule = {0, 2};
        CHECK_THROWS_AS(run_raking_experiment(config), ValidationError);
    }
    SUBCASE("schedule repeats a partition consecutively") {
        config.schedule = {0, 0};
        CHECK_THROWS_AS(run_raking_experiment(config), ValidationError);
    }
}

TEST_CASE("experiments are deterministic and thread-count invariant") {
    ExperimentConfig config = a2_config();
    config.n = 200;
    config.reps = 300;
    config.threads = 1;
    const ExperimentReport one = run_raking_experiment(config);
    config.threads = 4;
    const ExperimentReport four = run_raking_experiment(config);
    CHECK(reports_identical(one, four));
    const ExperimentReport again = run_raking_experiment(config);
    CHECK(reports_identical(four, again));
    config.seed += 1;
    const ExperimentReport other = run_raking_experiment(config);
    CHECK_FALSE(reports_identical(four, other));
}

TEST_CASE("replication variance tracks the limit variance") {
    const ExperimentReport r = run_raking_experiment(a2_config());
    REQUIRE(r.nvar.rows() == 3);  // unraked + 2 steps
    REQUIRE(r.nvar.cols() == 1);
    for (int s = 0; s < 3; ++s) {
        CAPTURE(s);
        CHECK(r.theory(s, 0) > 0.0);
        CHECK(r.nvar(s, 0) == doctest::Approx(r.theory(s, 0)).epsilon(0.15));
        // scaled bias compatible with zero at a few standard errors
        CHECK(std::abs(r.bias_scaled(s, 0)) <= 5.0 * r.bias_se(s, 0));
        // replication means look normal
        CHECK(r.ks(s, 0) < 0.05);
    }
    CHECK(r.dropped == 0);
    // raking toward known margins shrinks the variance here
    CHECK(r.nvar(2, 0) < r.nvar(0, 0));
}

TEST_CASE("replications that hit an empty margin cell are dropped, not poisoned") {
    Partition a{"A", {"a1", "a2"}};
    Partition b{"B", {"b1", "b2"}};
    IntMatrix labels(4, 2);
    labels << 0, 0, 0, 1, 1, 0, 1, 1;
    Vector p(4);
    p << 0.005, 0.005, 0.495, 0.495;  // margin cell a1 is nearly empty
    ExperimentConfig config;
    config.grid = CellGrid({a, b}, labels, p);
    config.functions = {make_piecewise_function("f", Vector::LinSpaced(4, -1.0, 1.0),
                                                Vector::Constant(4, 0.1), 1.0)};
    config.schedule = {0, 1};
    config.n = 30;
    config.reps = 100;
    config.threads = 2;
    config.seed = 88;
    const ExperimentReport r = run_raking_experiment(config);
    CHECK(r.dropped > 0);
    CHECK(r.dropped < r.reps);
    CHECK(std::isfinite(r.nvar(2, 0)));
    CHECK(r.nvar(2, 0) > 0.0);
}

TEST_CASE("distance to the normal distribution function") {
    RngStream rng(424, 0);
    std::vector<double> normals(4000), uniforms(4000);
    for (auto& v : normals) v = rng.normal();
    for (auto& v : uniforms) v = rng.uniform() * 2.0 - 1.0;
    CHECK(ks_to_normal(normals) < 0.03);
    CHECK(ks_to_normal(uniforms) > 0.05);
}

TEST_CASE("distribution-function study: smoke and thread invariance") {
    const EcdfReport one = ecdf_experiment(100, 50, 4, 5, 1);
    const EcdfReport two = ecdf_experiment(100, 50, 4, 5, 2);
    for (int c = 0; c < 2; ++c) {
        for (int s = 0; s < 3; ++s) {
            CHECK(one.distance[c][s] == two.distance[c][s]);
            CHECK(one.distance[c][s] > 0.0);
            CHECK(one.distance[c][s] < 1.0);
        }
        for (int s = 0; s < 2; ++s) {
            CHECK(one.closer[c][s] == two.closer[c][s]);
            CHECK(one.closer[c][s] >= 0.0);
            CHECK(one.closer[c][s] <= 1.0);
        }
        // raking the margins pulls the empirical curve toward the truth
        CHECK(one.distance[c][1] < one.distance[c][0]);
        CHECK(one.distance[c][2] < one.distance[c][0]);
    }
    CHECK(one.dropped >= 0);
    CHECK(one.dropped < 50);
    CHECK(one.mid_steps == 4);
}

TEST_CASE("sampling routes agree with the closed-form covariance") {
    ExperimentConfig config = a2_config();
    config.n = 400;
    config.reps = 1500;
    const SampleVsTheory r = sample_vs_theory(config, 2, 20000);
    CHECK(r.sample_gn_rel_frobenius < 0.1);
    CHECK(r.replication_rel_frobenius < 0.25);
}
