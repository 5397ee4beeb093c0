#pragma once

#include <vector>

#include "rrx/gaussian_limit.hpp"
#include "rrx/measures.hpp"

namespace rrx {

// Alternating two-partition scheme: odd steps rake partition 0 ("A", m1 cells),
// even steps rake partition 1 ("B", m2 cells). The composed one-cycle
// transition matrices drive everything:
//   ma = pba * pab   (m1 x m1),   mb = pab * pba   (m2 x m2),
// where pab(i, j) = P(A_j | B_i) and pba(i, j) = P(B_j | A_i).
struct TwoMarginalModel {
    Vector pa, pb;
    Matrix pab;  // m2 x m1
    Matrix pba;  // m1 x m2
    Matrix ma;   // m1 x m1
    Matrix mb;   // m2 x m2
};

TwoMarginalModel make_two_marginal(const CellGrid& grid);

// Partial geometric sums entering the even/odd-step limit representation:
//   s1_even(n) = sum_{k=0}^n ma^k v1,  v1 = E[f|A] - pba E[f|B]
//   s2_odd(n)  = sum_{k=0}^n mb^k v2,  v2 = E[f|B] - pab E[f|A]
//   s1_odd(n)  = s1_even(n) + ma^{n+1} E[f|A]
//   s2_even(n) = s2_odd(n)  + mb^{n+1} E[f|B]
// A negative n makes the sum empty; the power term survives while its exponent
// is >= 0 (so s1_odd(-1) = E[f|A]) and dies once it turns negative. With that,
// the representation below also covers the first few steps.
struct SMatrices {
    Vector s1_even, s2_odd, s1_odd, s2_even;
};

SMatrices s_matrices_finite(const TwoMarginalModel& model, const Vector& ef_a,
                            const Vector& ef_b, int n);

// Cov of the raked limit after `steps` raking steps, evaluated through the
// closed-form coefficients on (G(f), G[A], G[B]):
//   steps = 2m:   a = s1_even(m-1), b = s2_even(m-2)
//   steps = 2m+1: a = s1_odd(m-1),  b = s2_odd(m-1)
// Must agree with covariance_gn on the alternating schedule.
double gn_two_marginal_covariance(const TwoMarginalModel& model, const CellGrid& grid,
                                  const PiecewiseFunction& f, const PiecewiseFunction& g,
                                  int steps);

// Moduli of the eigenvalues of ma/mb sorted descending; lambda is the second
// largest (the two matrices share their nonzero spectrum). Ergodic when the
// dominant eigenvalue 1 is isolated: lambda < 1 - 1e-9.
struct SpectralGap {
    Vector moduli_a, moduli_b;
    double lambda1 = 0.0, lambda2 = 0.0;
    bool ergodic = false;
};

SpectralGap spectral_gap(const TwoMarginalModel& model);

// Limits of the partial sums, from the deflated systems
//   (I - ma + 1 pa^t) s1 = v1,   (I - mb + 1 pb^t) s2 = v2;
// the rank-one row restores invertibility and forces pa . s1 = 0.
// Raises ErgodicityError when the gap condition fails.
struct LimitS {
    Vector s1_even, s2_odd, s1_odd, s2_even;  // *_odd/_even differ by P(f) per entry
    double lambda = 0.0;
};

LimitS limit_s(const TwoMarginalModel& model, const CellGrid& grid,
               const PiecewiseFunction& f);

// Cov of the fully raked limit, plus a certificate that the finite-step
// covariances approach it geometrically: a least-squares rate fitted on the
// even-step errors, reported alongside the spectral gap it must not exceed.
struct DecayFit {
    double fitted_rate = 0.0;
    double gap = 0.0;
    int points = 0;  // number of error terms above the fitting floor
};

struct InfinityCovariance {
    double value = 0.0;
    DecayFit fit;
};

InfinityCovariance g_infinity_covariance(const TwoMarginalModel& model,
                                         const CellGrid& grid,
                                         const PiecewiseFunction& f,
                                         const PiecewiseFunction& g);

}  // namespace rrx
