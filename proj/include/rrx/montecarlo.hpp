#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "rrx/gaussian_limit.hpp"
#include "rrx/measures.hpp"

namespace rrx {

// Replicated raking experiment. DiscreteJoint draws points from a cell grid,
// with function values Gaussian around the declared per-cell mean/variance;
// BivariateNormal is the fixed two-dimensional Gaussian study handled by
// ecdf_experiment.
struct ExperimentConfig {
    enum class Generator { DiscreteJoint, BivariateNormal };

    Generator generator = Generator::DiscreteJoint;
    CellGrid grid;
    std::vector<PiecewiseFunction> functions;
    std::vector<int> schedule;  // partition index per raking step
    int n = 2000;
    int reps = 10000;
    int threads = 1;
    std::uint64_t seed = 0;
};

// Everything is indexed (step, function) with step 0 = unraked. Replications
// whose raking hits an empty positive-target margin cell are dropped and
// counted; surviving replications feed all statistics.
struct ExperimentReport {
    int n = 0;
    int reps = 0;
    int dropped = 0;
    std::vector<int> schedule;
    std::vector<std::string> function_names;
    Matrix mean;          // replication average of the raked mean
    Matrix bias_scaled;   // sqrt(n) * (mean - P(f))
    Matrix bias_se;       // MC standard error of bias_scaled
    Matrix nvar;          // n * across-replication variance
    Matrix theory;        // V of the raked limit, from the covariance recursion
    Matrix ks;            // KS distance of standardized replicates to the normal CDF
};

ExperimentReport run_raking_experiment(const ExperimentConfig& config);

// KS distance between sorted standardized values and the standard normal CDF.
double ks_to_normal(std::vector<double> values);

// Distribution-function study on the correlated Gaussian pair (X, Y) with
// Var X = 3, Var Y = 1, Cov = -1, margins known at -2:0.5:2 (10 cells each).
// Odd steps rake the X margin, even steps the Y margin. X is read at the last
// odd iterate <= N, Y at the last even one; "limit" rakes until the residual
// falls under 1e-8. Distances are scale-free: spacings are divided by the
// coordinate's standard deviation.
struct EcdfReport {
    int n = 0;
    int reps = 0;
    int dropped = 0;
    int mid_steps = 0;
    // [coordinate][stage]: stages 0 = unraked, 1 = mid (N = mid_steps), 2 = limit
    double distance[2][3] = {};
    // [coordinate][stage-1]: share of sample points where the raked curve beats
    // the unraked one, for mid and limit
    double closer[2][2] = {};
};

EcdfReport ecdf_experiment(int n, int reps, int mid_steps, std::uint64_t seed,
                           int threads);

// Pits the closed-form covariance matrix against both sampling routes:
// empirical covariance of limit draws, and n * covariance of raked replication
// means. Reports the largest relative Frobenius deviation.
struct SampleVsTheory {
    double sample_gn_rel_frobenius = 0.0;
    double replication_rel_frobenius = 0.0;
};

SampleVsTheory sample_vs_theory(const ExperimentConfig& config, int steps, int draws);

}  // namespace rrx
