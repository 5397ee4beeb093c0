#include "rrx/two_marginal.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <sstream>

namespace rrx {

namespace {

struct Coefficients {
    Vector a;  // on G[A]
    Vector b;  // on G[B]
};

// coefficients of the raked functional G(f) - a^t G[A] - b^t G[B] after `steps`
Coefficients coefficients_at(const TwoMarginalModel& model, const Vector& ef_a,
                             const Vector& ef_b, int steps) {
    if (steps % 2 == 0) {
        const int m = steps / 2;
        SMatrices first = s_matrices_finite(model, ef_a, ef_b, m - 1);
        SMatrices second = s_matrices_finite(model, ef_a, ef_b, m - 2);
        return {first.s1_even, second.s2_even};
    }
    const int m = (steps - 1) / 2;
    SMatrices sm = s_matrices_finite(model, ef_a, ef_b, m - 1);
    return {sm.s1_odd, sm.s2_odd};
}

// Cov(G(f) - af^t G[A] - bf^t G[B], G(g) - ag^t G[A] - bg^t G[B]) expanded with
// Cov(G[A], G(h)) = VA E[h|A] and Cov(G[A], G[B]) = VA pba.
double bilinear_cov(const TwoMarginalModel& model, double base,
                    const Vector& ef_a_f, const Vector& ef_b_f, const Coefficients& cf,
                    const Vector& ef_a_g, const Vector& ef_b_g, const Coefficients& cg) {
    const Matrix va = Matrix(model.pa.asDiagonal()) - model.pa * model.pa.transpose();
    const Matrix vb = Matrix(model.pb.asDiagonal()) - model.pb * model.pb.transpose();
    const Matrix vab = va * model.pba;  // Cov(G[A], G[B])
    double cov = base;
    cov -= cf.a.dot(va * ef_a_g) + cg.a.dot(va * ef_a_f);
    cov -= cf.b.dot(vb * ef_b_g) + cg.b.dot(vb * ef_b_f);
    cov += cf.a.dot(va * cg.a) + cf.b.dot(vb * cg.b);
    cov += cf.a.dot(vab * cg.b) + cg.a.dot(vab * cf.b);
    return cov;
}

}  // namespace

TwoMarginalModel make_two_marginal(const CellGrid& grid) {
    if (grid.num_partitions() != 2)
        throw ValidationError("two-marginal model: grid must declare exactly 2 partitions");
    TwoMarginalModel model;
    model.pa = marginalize(grid, 0);
    model.pb = marginalize(grid, 1);
    model.pab = transition_matrix(grid, 1, 0);
    model.pba = transition_matrix(grid, 0, 1);
    model.ma = model.pba * model.pab;
    model.mb = model.pab * model.pba;
    return model;
}

SMatrices s_matrices_finite(const TwoMarginalModel& model, const Vector& ef_a,
                            const Vector& ef_b, int n) {
    SMatrices out;
    out.s1_even = Vector::Zero(ef_a.size());
    out.s2_odd = Vector::Zero(ef_b.size());
    Vector v1 = ef_a - model.pba * ef_b;
    Vector v2 = ef_b - model.pab * ef_a;
    for (int k = 0; k <= n; ++k) {
        out.s1_even += v1;
        out.s2_odd += v2;
        if (k < n) {
            v1 = model.ma * v1;
            v2 = model.mb * v2;
        }
    }
    out.s1_odd = out.s1_even;
    out.s2_even = out.s2_odd;
    if (n + 1 >= 0) {
        Vector pow_a = ef_a;
        Vector pow_b = ef_b;
        for (int k = 0; k < n + 1; ++k) {
            pow_a = model.ma * pow_a;
            pow_b = model.mb * pow_b;
        }
        out.s1_odd += pow_a;
        out.s2_even += pow_b;
    }
    return out;
}

double gn_two_marginal_covariance(const TwoMarginalModel& model, const CellGrid& grid,
                                  const PiecewiseFunction& f, const PiecewiseFunction& g,
                                  int steps) {
    if (steps < 0) throw ValidationError("two-marginal covariance: negative step count");
    const Vector ef_a_f = conditional_expectation(grid, f, 0);
    const Vector ef_b_f = conditional_expectation(grid, f, 1);
    const Vector ef_a_g = conditional_expectation(grid, g, 0);
    const Vector ef_b_g = conditional_expectation(grid, g, 1);
    const double base =
        product_mean(grid, f, g) - mean_of(grid, f) * mean_of(grid, g);
    const Coefficients cf = coefficients_at(model, ef_a_f, ef_b_f, steps);
    const Coefficients cg = coefficients_at(model, ef_a_g, ef_b_g, steps);
    return bilinear_cov(model, base, ef_a_f, ef_b_f, cf, ef_a_g, ef_b_g, cg);
}

SpectralGap spectral_gap(const TwoMarginalModel& model) {
    auto moduli_of = [](const Matrix& m) {
        Eigen::EigenSolver<Matrix> es(m);
        Vector mods = es.eigenvalues().array().abs();
        std::sort(mods.data(), mods.data() + mods.size(), std::greater<double>());
        return mods;
    };
    SpectralGap out;
    out.moduli_a = moduli_of(model.ma);
    out.moduli_b = moduli_of(model.mb);
    out.lambda1 = out.moduli_a[0];
    out.lambda2 = out.moduli_a.size() > 1 ? out.moduli_a[1] : 0.0;
    out.ergodic = out.lambda2 < 1.0 - 1e-9;
    return out;
}

LimitS limit_s(const TwoMarginalModel& model, const CellGrid& grid,
               const PiecewiseFunction& f) {
    const SpectralGap gap = spectral_gap(model);
    if (!gap.ergodic) {
        std::ostringstream os;
        os << "alternating scheme is not ergodic: second eigenvalue modulus "
           << gap.lambda2 << " is too close to 1";
        throw ErgodicityError(os.str());
    }
    const Vector ef_a = conditional_expectation(grid, f, 0);
    const Vector ef_b = conditional_expectation(grid, f, 1);
    const Vector v1 = ef_a - model.pba * ef_b;
    const Vector v2 = ef_b - model.pab * ef_a;
    const int m1 = static_cast<int>(model.pa.size());
    const int m2 = static_cast<int>(model.pb.size());

    const Matrix sys1 = Matrix::Identity(m1, m1) - model.ma +
                        Vector::Ones(m1) * model.pa.transpose();
    const Matrix sys2 = Matrix::Identity(m2, m2) - model.mb +
                        Vector::Ones(m2) * model.pb.transpose();
    LimitS out;
    out.s1_even = sys1.colPivHouseholderQr().solve(v1);
    out.s2_odd = sys2.colPivHouseholderQr().solve(v2);
    const double pf = mean_of(grid, f);
    out.s1_odd = out.s1_even + Vector::Constant(m1, pf);
    out.s2_even = out.s2_odd + Vector::Constant(m2, pf);
    out.lambda = gap.lambda2;
    return out;
}

InfinityCovariance g_infinity_covariance(const TwoMarginalModel& model,
                                         const CellGrid& grid,
                                         const PiecewiseFunction& f,
                                         const PiecewiseFunction& g) {
    const LimitS lf = limit_s(model, grid, f);
    const LimitS lg = limit_s(model, grid, g);
    const Vector ef_a_f = conditional_expectation(grid, f, 0);
    const Vector ef_b_f = conditional_expectation(grid, f, 1);
    const Vector ef_a_g = conditional_expectation(grid, g, 0);
    const Vector ef_b_g = conditional_expectation(grid, g, 1);
    const double base =
        product_mean(grid, f, g) - mean_of(grid, f) * mean_of(grid, g);

    InfinityCovariance out;
    out.value = bilinear_cov(model, base, ef_a_f, ef_b_f, {lf.s1_even, lf.s2_even},
                             ef_a_g, ef_b_g, {lg.s1_even, lg.s2_even});

    // geometric-decay certificate from the even-step errors
    std::vector<double> xs, ys;
    for (int m = 1; m <= 16; ++m) {
        const double err =
            std::abs(gn_two_marginal_covariance(model, grid, f, g, 2 * m) - out.value);
        if (err > 1e-13) {
            xs.push_back(static_cast<double>(m));
            ys.push_back(std::log(err));
        }
    }
    out.fit.gap = lf.lambda;
    out.fit.points = static_cast<int>(xs.size());
    if (xs.size() >= 2) {
        const double n = static_cast<double>(xs.size());
        double sx = 0, sy = 0, sxx = 0, sxy = 0;
        for (std::size_t i = 0; i < xs.size(); ++i) {
            sx += xs[i]; sy += ys[i]; sxx += xs[i] * xs[i]; sxy += xs[i] * ys[i];
        }
        const double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
        out.fit.fitted_rate = std::exp(slope);
    }
    return out;
}

}  // namespace rrx
