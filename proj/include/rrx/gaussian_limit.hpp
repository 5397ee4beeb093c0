#pragma once

#include <cstdint>
#include <vector>

#include "rrx/measures.hpp"

namespace rrx {

// Raking schedule seen through the limit theory: step k rakes partition
// schedule[k-1] toward its true margin. Precomputes the per-step margins and
// the covariance blocks V_k = diag(P(cells)) - P(cells) P(cells)^t of the
// partition-indicator Gaussian vectors.
struct GaussianLimitModel {
    CellGrid grid;
    std::vector<int> schedule;        // partition index per step
    std::vector<Vector> step_margins; // P over the step's partition cells
    std::vector<Matrix> vblocks;      // V_k, one per step
};

GaussianLimitModel make_limit_model(CellGrid grid, std::vector<int> schedule);

// Coefficient vectors through which the step-k margin fluctuations enter the
// N-step limit: phi[k-1] solves the backward recursion
//   phi_N = E[f | step-N partition]
//   phi_k = E[f | step-k partition] - sum_{l>k} T_{k,l} phi_l
// with T_{k,l} the transition matrix from step k's partition to step l's.
std::vector<Vector> phi_vectors(const GaussianLimitModel& model,
                                const PiecewiseFunction& f, int steps);

// Same vectors by the expanded alternating-sign sum over ordered chains
// k < l_1 < ... < l_L <= N. Exponential in N; allowed only for steps <= 4.
// Kept as an independent oracle for the recursion.
std::vector<Vector> phi_vectors_direct(const GaussianLimitModel& model,
                                       const PiecewiseFunction& f, int steps);

// Cov(limit(f), limit(g)) after `steps` raking steps:
//   Cov(G(f), G(g)) - sum_k phi_k(f)^t V_k phi_k(g).
double covariance_gn(const GaussianLimitModel& model, const PiecewiseFunction& f,
                     const PiecewiseFunction& g, int steps);

Matrix covariance_matrix(const GaussianLimitModel& model,
                         const std::vector<PiecewiseFunction>& functions, int steps);

// V(limit(f)) / V(G(f)); errors when the unraked variance is zero.
double risk_ratio(const GaussianLimitModel& model, const PiecewiseFunction& f, int steps);

// True when Sigma^(n0) - Sigma^(n1) is positive semidefinite (eigenvalues
// >= -1e-10). Only callable in the guaranteed regime: n1 >= 2 n0 and the last
// n0 steps of both prefixes rake the same partitions; anything else raises
// PreconditionError. In particular consecutive steps (n1 = n0 + 1) are outside
// the regime, and the guarantee genuinely fails there.
bool check_cycle_monotonicity(const GaussianLimitModel& model,
                              const std::vector<PiecewiseFunction>& functions,
                              int n0, int n1);

// Joint draws of the raked limit evaluated on all functions (count x functions).
// The underlying bridge is sampled over grid cells with covariance
// diag(p) - p p^t plus an independent within-cell remainder per function.
Matrix sample_gn(const GaussianLimitModel& model,
                 const std::vector<PiecewiseFunction>& functions, int steps,
                 int count, std::uint64_t seed);

// Schedule-wide constants used by the finite-n error bounds: over the first
// `steps` targets, the product of (1 + bound * cells), the product of smallest
// target probabilities, the product of cell counts, and the sum of cell counts.
struct ProductConstants {
    double kappa = 1.0;
    double min_prob_product = 1.0;
    double cell_product = 1.0;
    double cell_sum = 0.0;
};

ProductConstants product_constants(const std::vector<MarginalTarget>& targets,
                                   double bound, int steps);

}  // namespace rrx
