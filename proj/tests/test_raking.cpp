#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <array>
#include <cmath>

#include "rrx/golden.hpp"
#include "rrx/raking.hpp"
#include "test_support.hpp"

using namespace rrx;

namespace {

// Independent fixed-size reimplementation of ratio fitting for the 2x3 table,
// used as an oracle against the general-purpose code path.
struct Tiny23 {
    std::array<double, 6> w;  // row-major
    void rake_rows(double t0, double t1) {
        const double m0 = w[0] + w[1] + w[2];
        const double m1 = w[3] + w[4] + w[5];
        for (int j = 0; j < 3; ++j) w[j] *= t0 / m0;
        for (int j = 3; j < 6; ++j) w[j] *= t1 / m1;
    }
    void rake_cols(double t0, double t1, double t2) {
        const double t[3] = {t0, t1, t2};
        for (int j = 0; j < 3; ++j) {
            const double m = w[j] + w[j + 3];
            w[j] *= t[j] / m;
            w[j + 3] *= t[j] / m;
        }
    }
};

RakingState raked_small_table(int steps) {
    RakingState state = RakingState::from_grid(golden::small_table_grid());
    const auto targets = golden::small_table_targets();
    for (int s = 0; s < steps; ++s)
        rake_step(state, targets[state.iteration() % 2]);
    return state;
}

}  // namespace

TEST_CASE("schedule validation") {
    Vector r(2), c(3);
    r << 0.52, 0.48;
    c << 0.31, 0.40, 0.29;
    const MarginalTarget rows = make_marginal_target(0, r);
    const MarginalTarget cols = make_marginal_target(1, c);
    CHECK_NOTHROW(make_schedule({rows, cols}));
    CHECK_THROWS_AS(make_schedule({}), ValidationError);
    CHECK_THROWS_AS(make_schedule({rows}), ValidationError);  // wraps onto itself
    CHECK_THROWS_AS(make_schedule({rows, rows}), ValidationError);
    CHECK_THROWS_AS(make_schedule({rows, cols, cols}), ValidationError);
    CHECK_THROWS_AS(make_schedule({rows, cols, rows}), ValidationError);  // wrap repeat
}

TEST_CASE("one ratio step hits its margin exactly, on fuzzed tables") {
    RngStream rng(8101, 0);
    for (int t = 0; t < 100; ++t) {
        const CellGrid grid = test::random_grid(rng, {4, 5});
        RakingState state = RakingState::from_grid(grid);
        const int k = static_cast<int>(rng.next_u64() % 2);
        Vector target(grid.partition(k).size());
        for (int j = 0; j < target.size(); ++j) target[j] = 0.1 + rng.uniform();
        target /= target.sum();
        rake_step(state, make_marginal_target(k, target));
        CHECK((state.marginal(k) - target).cwiseAbs().maxCoeff() <= 1e-12);
        CHECK(std::abs(state.weights().sum() - 1.0) <= 1e-10);
        CHECK(state.weights().minCoeff() >= 0.0);
    }
}

TEST_CASE("the 2x3 reference table: first iterates against an independent oracle") {
    Tiny23 oracle{{0.20, 0.25, 0.10, 0.10, 0.20, 0.15}};
    oracle.rake_rows(0.52, 0.48);
    const RakingState s1 = raked_small_table(1);
    for (int c = 0; c < 6; ++c)
        CHECK(s1.weights()[c] == doctest::Approx(oracle.w[c]).epsilon(1e-14));

    oracle.rake_cols(0.31, 0.40, 0.29);
    const RakingState s2 = raked_small_table(2);
    for (int c = 0; c < 6; ++c)
        CHECK(s2.weights()[c] == doctest::Approx(oracle.w[c]).epsilon(1e-14));
}

TEST_CASE("the 2x3 reference table: step-7 weights against frozen digits") {
    // frozen from an independent high-precision run of the same recursion
    const double pinned[6] = {0.1993458089, 0.2118479220, 0.1088062691,
                              0.1106552935, 0.1881521892, 0.1811925173};
    const RakingState s7 = raked_small_table(7);
    for (int c = 0; c < 6; ++c) CHECK(std::abs(s7.weights()[c] - pinned[c]) <= 1e-9);
}

TEST_CASE("an already-consistent table is a fixed point, bitwise") {
    // dyadic cells make every margin exact, so the ratio factors are exactly 1
    Partition rows{"rows", {"r1", "r2"}};
    Partition cols{"cols", {"c1", "c2", "c3"}};
    IntMatrix labels(6, 2);
    labels << 0, 0, 0, 1, 0, 2, 1, 0, 1, 1, 1, 2;
    Vector p(6);
    p << 0.125, 0.125, 0.25, 0.125, 0.125, 0.25;
    const CellGrid grid({rows, cols}, labels, p);
    Vector r(2), c(3);
    r << 0.5, 0.5;
    c << 0.25, 0.25, 0.5;
    RakingState state = RakingState::from_grid(grid);
    rake_step(state, make_marginal_target(0, r));
    rake_step(state, make_marginal_target(1, c));
    for (int i = 0; i < 6; ++i) CHECK(state.weights()[i] == p[i]);
    CHECK(state.kl_history()[0] == 0.0);
}

TEST_CASE("empty margin cells are reported by name") {
    Partition rows{"rows", {"r1", "r2"}};
    Partition cols{"cols", {"c1", "c2", "c3"}};
    IntMatrix labels(6, 2);
    labels << 0, 0, 0, 1, 0, 2, 1, 0, 1, 1, 1, 2;
    Vector p(6);
    p << 0.3, 0.3, 0.0, 0.2, 0.2, 0.0;  // column c3 carries no mass
    const CellGrid grid({rows, cols}, labels, p);
    Vector c(3);
    c << 0.31, 0.40, 0.29;
    RakingState state = RakingState::from_grid(grid);
    try {
        rake_step(state, make_marginal_target(1, c));
        FAIL("expected EmptyMarginError");
    } catch (const EmptyMarginError& e) {
        CHECK(e.partition() == "cols");
        CHECK(e.cell() == "c3");
    }
    // the failed step must leave the state untouched
    CHECK(state.iteration() == 0);
    CHECK((state.weights() - p).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("accumulated per-step ratios equal direct iteration") {
    const RakingSchedule schedule = make_schedule(golden::small_table_targets());
    const RakingState start = RakingState::from_grid(golden::small_table_grid());
    for (int steps : {0, 1, 3, 7}) {
        const Vector accumulated = exact_weights(start, schedule, steps);
        const RakingState direct = raked_small_table(steps);
        CHECK((accumulated - direct.weights()).cwiseAbs().maxCoeff() <= 1e-12);
    }

    RngStream rng(8102, 0);
    for (int t = 0; t < 10; ++t) {
        const CellGrid grid = test::random_grid(rng, {3, 4});
        Vector ta(3), tb(4);
        for (int j = 0; j < 3; ++j) ta[j] = 0.1 + rng.uniform();
        for (int j = 0; j < 4; ++j) tb[j] = 0.1 + rng.uniform();
        ta /= ta.sum();
        tb /= tb.sum();
        const RakingSchedule sched =
            make_schedule({make_marginal_target(0, ta), make_marginal_target(1, tb)});
        const RakingState st = RakingState::from_grid(grid);
        RakingState it = RakingState::from_grid(grid);
        for (int s = 0; s < 5; ++s) rake_step(it, sched.targets[s % 2]);
        CHECK((exact_weights(st, sched, 5) - it.weights()).cwiseAbs().maxCoeff() <= 1e-12);
    }
}

TEST_CASE("convergence loop on the 2x3 reference table") {
    const RakingSchedule schedule = make_schedule(golden::small_table_targets());

    SUBCASE("tight tolerance") {
        RakingState state = RakingState::from_grid(golden::small_table_grid());
        const RakeReport report = rake_until_converged(state, schedule, 1e-9, 1000);
        CHECK(report.converged);
        CHECK(report.iterations == 12);
        CHECK(report.final_residual <= 1e-9);
        CHECK(state.iteration() == 12);
    }
    SUBCASE("loose tolerance stops early") {
        RakingState state = RakingState::from_grid(golden::small_table_grid());
        const RakeReport report = rake_until_converged(state, schedule, 5e-4, 1000);
        CHECK(report.converged);
        CHECK(report.iterations == 4);
    }
    SUBCASE("iteration cap") {
        RakingState state = RakingState::from_grid(golden::small_table_grid());
        const RakeReport report = rake_until_converged(state, schedule, 1e-15, 5);
        CHECK_FALSE(report.converged);
        CHECK(report.iterations == 5);
    }
}

TEST_CASE("divergence increment of the first step, frozen") {
    const RakingState s1 = raked_small_table(1);
    REQUIRE(s1.kl_history().size() == 1);
    const double direct =
        0.55 * std::log(0.55 / 0.52) + 0.45 * std::log(0.45 / 0.48);
    CHECK(s1.kl_history()[0] == doctest::Approx(direct).epsilon(1e-15));
    CHECK(s1.kl_history()[0] == doctest::Approx(0.0018068721461670482).epsilon(1e-13));
}

TEST_CASE("margin formula equals the weight-level divergence") {
    RngStream rng(8103, 0);
    for (int t = 0; t < 25; ++t) {
        const CellGrid grid = test::random_grid(rng, {3, 4});
        const int k = static_cast<int>(rng.next_u64() % 2);
        Vector target(grid.partition(k).size());
        for (int j = 0; j < target.size(); ++j) target[j] = 0.1 + rng.uniform();
        target /= target.sum();

        RakingState state = RakingState::from_grid(grid);
        const Vector before = state.weights();
        const Vector margin = state.marginal(k);
        rake_step(state, make_marginal_target(k, target));
        // d(old, new) telescopes to the margin-level sum: the per-cell log
        // ratios are constant inside each margin cell
        CHECK(kl_divergence(before, state.weights()) ==
              doctest::Approx(kl_margin_increment(margin, target)).epsilon(1e-12));
    }
}

TEST_CASE("divergence requires domination") {
    Vector from(2), to(2);
    from << 0.5, 0.5;
    to << 1.0, 0.0;
    CHECK_THROWS_AS(kl_divergence(from, to), ValidationError);
    // zero mass in `from` is fine wherever `to` vanishes
    Vector from2(2), to2(2);
    from2 << 1.0, 0.0;
    to2 << 0.5, 0.5;
    CHECK(kl_divergence(from2, to2) == doctest::Approx(std::log(2.0)).epsilon(1e-15));
    CHECK_THROWS_AS(kl_divergence(Vector::Ones(2), Vector::Ones(3)), ValidationError);
}

TEST_CASE("a ratio step minimizes divergence over its margin constraint") {
    const RakingState before = RakingState::from_grid(golden::small_table_grid());
    const MarginalTarget rows = golden::small_table_targets()[0];
    RakingState after = before;
    rake_step(after, rows);

    RngStream rng(8104, 0);
    CHECK(verify_projection(before, after, rows, 200, rng));

    // negative control: same margin, but mass shuffled inside a margin cell
    RakingState shuffled = after;
    {
        Vector w = shuffled.weights();
        const double delta = 0.3 * w[0];
        w[0] -= delta;
        w[1] += delta;  // both are r1 cells, so the row margin is unchanged
        RakingState rebuilt = RakingState::from_grid(
            CellGrid(golden::small_table_grid().partitions(),
                     golden::small_table_grid().labels(), w));
        CHECK_FALSE(verify_projection(before, rebuilt, rows, 200, rng));
    }
}

TEST_CASE("raking a weighted sample") {
    WeightedSample sample;
    sample.partitions = {Partition{"A", {"a1", "a2"}}, Partition{"B", {"b1", "b2"}}};
    sample.labels = IntMatrix(8, 2);
    sample.labels << 0, 0, 0, 1, 1, 0, 1, 1, 0, 0, 1, 1, 0, 1, 1, 0;
    sample.values = Matrix::Zero(8, 0);
    sample.function_names = {};
    Vector w(8);
    w << 0.05, 0.10, 0.15, 0.20, 0.10, 0.15, 0.10, 0.15;
    sample.weights = w;
    RakingState state = RakingState::from_sample(sample);

    Vector ta(2), tb(2);
    ta << 0.5, 0.5;
    tb << 0.6, 0.4;
    const RakingSchedule sched =
        make_schedule({make_marginal_target(0, ta), make_marginal_target(1, tb)});
    const RakeReport report = rake_until_converged(state, sched, 1e-12, 200);
    CHECK(report.converged);
    CHECK((state.marginal(0) - ta).cwiseAbs().maxCoeff() <= 1e-12);
    CHECK((state.marginal(1) - tb).cwiseAbs().maxCoeff() <= 1e-12);
    CHECK(std::abs(state.weights().sum() - 1.0) <= 1e-10);
}

TEST_CASE("mixture identity: the raked mean averages conditional means by target") {
    RngStream rng(8105, 0);
    for (int t = 0; t < 25; ++t) {
        const CellGrid grid = test::random_grid(rng, {3, 4});
        const PiecewiseFunction f = test::random_function(rng, grid.num_cells());
        const int k = static_cast<int>(rng.next_u64() % 2);
        Vector target(grid.partition(k).size());
        for (int j = 0; j < target.size(); ++j) target[j] = 0.1 + rng.uniform();
        target /= target.sum();

        RakingState state = RakingState::from_grid(grid);
        const Vector before = state.weights();
        rake_step(state, make_marginal_target(k, target));
        const double raked_mean = state.weights().dot(f.mean);

        const Vector margin = marginalize(before, grid.labels(), k, target.size());
        double mixture = 0.0;
        for (int c = 0; c < grid.num_cells(); ++c) {
            const int j = grid.labels()(c, k);
            mixture += target[j] * before[c] * f.mean[c] / margin[j];
        }
        CHECK(raked_mean == doctest::Approx(mixture).epsilon(1e-12));
    }
}
