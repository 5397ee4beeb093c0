#include "rrx/gaussian_limit.hpp"

#include <bit>
#include <cmath>

#include "rrx/rng.hpp"

namespace rrx {

namespace {

int part_at(const GaussianLimitModel& model, int step) {
    return model.schedule[(step - 1) % model.schedule.size()];
}

const Matrix& vblock_at(const GaussianLimitModel& model, int step) {
    return model.vblocks[(step - 1) % model.vblocks.size()];
}

// conditional expectations and transitions for every partition the schedule uses
struct StepTables {
    std::vector<Vector> ef;                   // E[f | partition a]
    std::vector<std::vector<Matrix>> trans;   // [from][to]

    StepTables(const GaussianLimitModel& model, const PiecewiseFunction& f) {
        const int K = model.grid.num_partitions();
        std::vector<char> used(K, 0);
        for (int a : model.schedule) used[a] = 1;
        ef.resize(K);
        trans.assign(K, std::vector<Matrix>(K));
        for (int a = 0; a < K; ++a) {
            if (!used[a]) continue;
            ef[a] = conditional_expectation(model.grid, f, a);
            for (int b = 0; b < K; ++b) {
                if (!used[b]) continue;
                trans[a][b] = a == b
                    ? Matrix(Matrix::Identity(model.grid.partition(a).size(),
                                              model.grid.partition(a).size()))
                    : transition_matrix(model.grid, a, b);
            }
        }
    }
};

}  // namespace

GaussianLimitModel make_limit_model(CellGrid grid, std::vector<int> schedule) {
    if (schedule.empty())
        throw ValidationError("limit model: schedule needs at least one step");
    const int n = static_cast<int>(schedule.size());
    for (int i = 0; i < n; ++i) {
        if (schedule[i] < 0 || schedule[i] >= grid.num_partitions())
            throw ValidationError("limit model: schedule step " + std::to_string(i) +
                                  " names no grid partition");
        if (i + 1 < n && schedule[i] == schedule[i + 1])
            throw ValidationError("limit model: consecutive steps rake the same partition");
    }
    GaussianLimitModel model{std::move(grid), std::move(schedule), {}, {}};
    for (int a : model.schedule) {
        Vector margin = marginalize(model.grid, a);
        model.vblocks.push_back(Matrix(margin.asDiagonal()) - margin * margin.transpose());
        model.step_margins.push_back(std::move(margin));
    }
    return model;
}

std::vector<Vector> phi_vectors(const GaussianLimitModel& model,
                                const PiecewiseFunction& f, int steps) {
    validate_function(model.grid, f);
    if (steps < 0) throw ValidationError("coefficient vectors: negative step count");
    StepTables tables(model, f);
    std::vector<Vector> phi(steps);
    for (int k = steps; k >= 1; --k) {
        Vector v = tables.ef[part_at(model, k)];
        for (int l = k + 1; l <= steps; ++l)
            v -= tables.trans[part_at(model, k)][part_at(model, l)] * phi[l - 1];
        phi[k - 1] = std::move(v);
    }
    return phi;
}

std::vector<Vector> phi_vectors_direct(const GaussianLimitModel& model,
                                       const PiecewiseFunction& f, int steps) {
    validate_function(model.grid, f);
    if (steps < 0) throw ValidationError("coefficient vectors: negative step count");
    if (steps > 4)
        throw PreconditionError("expanded coefficient sum grows as 2^steps; steps <= 4 only");
    StepTables tables(model, f);
    std::vector<Vector> phi(steps);
    for (int k = 1; k <= steps; ++k) {
        Vector sum = Vector::Zero(model.grid.partition(part_at(model, k)).size());
        const int tail = steps - k;
        for (std::uint32_t mask = 0; mask < (1u << tail); ++mask) {
            std::vector<int> chain{k};
            for (int j = 0; j < tail; ++j)
                if (mask & (1u << j)) chain.push_back(k + 1 + j);
            Vector v = tables.ef[part_at(model, chain.back())];
            for (int idx = static_cast<int>(chain.size()) - 2; idx >= 0; --idx)
                v = tables.trans[part_at(model, chain[idx])][part_at(model, chain[idx + 1])] * v;
            sum += (std::popcount(mask) % 2 ? -1.0 : 1.0) * v;
        }
        phi[k - 1] = std::move(sum);
    }
    return phi;
}

double covariance_gn(const GaussianLimitModel& model, const PiecewiseFunction& f,
                     const PiecewiseFunction& g, int steps) {
    double cov = product_mean(model.grid, f, g) -
                 mean_of(model.grid, f) * mean_of(model.grid, g);
    if (steps == 0) return cov;
    const auto pf = phi_vectors(model, f, steps);
    const auto pg = &f == &g ? pf : phi_vectors(model, g, steps);
    for (int k = 1; k <= steps; ++k)
        cov -= pf[k - 1].dot(vblock_at(model, k) * pg[k - 1]);
    return cov;
}

Matrix covariance_matrix(const GaussianLimitModel& model,
                         const std::vector<PiecewiseFunction>& functions, int steps) {
    const int nf = static_cast<int>(functions.size());
    std::vector<std::vector<Vector>> phis(nf);
    for (int i = 0; i < nf; ++i) phis[i] = phi_vectors(model, functions[i], steps);
    Matrix out(nf, nf);
    for (int i = 0; i < nf; ++i) {
        for (int j = i; j < nf; ++j) {
            double cov = product_mean(model.grid, functions[i], functions[j]) -
                         mean_of(model.grid, functions[i]) * mean_of(model.grid, functions[j]);
            for (int k = 1; k <= steps; ++k)
                cov -= phis[i][k - 1].dot(vblock_at(model, k) * phis[j][k - 1]);
            out(i, j) = cov;
            out(j, i) = cov;
        }
    }
    return out;
}

double risk_ratio(const GaussianLimitModel& model, const PiecewiseFunction& f, int steps) {
    const double v0 = variance_of(model.grid, f);
    if (v0 <= 0.0)
        throw PreconditionError("risk ratio: '" + f.name + "' has zero variance unraked");
    return covariance_gn(model, f, f, steps) / v0;
}

bool check_cycle_monotonicity(const GaussianLimitModel& model,
                              const std::vector<PiecewiseFunction>& functions,
                              int n0, int n1) {
    if (n0 < 0 || n1 < 2 * n0)
        throw PreconditionError("cycle comparison holds only for n1 >= 2*n0");
    for (int j = 0; j < n0; ++j)
        if (part_at(model, n0 - j) != part_at(model, n1 - j))
            throw PreconditionError(
                "cycle comparison holds only when both prefixes end in the same steps");
    const Matrix diff = covariance_matrix(model, functions, n0) -
                        covariance_matrix(model, functions, n1);
    Eigen::SelfAdjointEigenSolver<Matrix> es(diff);
    return es.eigenvalues().minCoeff() >= -1e-10;
}

Matrix sample_gn(const GaussianLimitModel& model,
                 const std::vector<PiecewiseFunction>& functions, int steps,
                 int count, std::uint64_t seed) {
    const int cells = model.grid.num_cells();
    const int nf = static_cast<int>(functions.size());
    const Vector& p = model.grid.probabilities();

    // cell-space coefficients of each raked functional, plus the within-cell
    // remainder scale that is orthogonal to every cell indicator
    Matrix coef(cells, nf);
    Vector tau(nf);
    for (int j = 0; j < nf; ++j) {
        validate_function(model.grid, functions[j]);
        coef.col(j) = functions[j].mean;
        const auto phis = phi_vectors(model, functions[j], steps);
        for (int k = 1; k <= steps; ++k) {
            const int a = part_at(model, k);
            for (int c = 0; c < cells; ++c)
                coef(c, j) -= phis[k - 1][model.grid.labels()(c, a)];
        }
        tau[j] = std::sqrt(p.dot(functions[j].var));
    }
    const Vector sqrtp = p.cwiseSqrt();
    const Vector coef_p = coef.transpose() * p;

    RngStream rng(seed, 0);
    Matrix out(count, nf);
    Vector w(cells);
    for (int d = 0; d < count; ++d) {
        for (int c = 0; c < cells; ++c) w[c] = sqrtp[c] * rng.normal();
        const double total = w.sum();
        for (int j = 0; j < nf; ++j)
            out(d, j) = coef.col(j).dot(w) - coef_p[j] * total + tau[j] * rng.normal();
    }
    return out;
}

ProductConstants product_constants(const std::vector<MarginalTarget>& targets,
                                   double bound, int steps) {
    if (steps < 0) throw ValidationError("schedule constants: negative step count");
    if (bound <= 0.0) throw ValidationError("schedule constants: bound must be positive");
    if (steps > 0 && targets.empty())
        throw ValidationError("schedule constants: no targets");
    ProductConstants out;
    for (int s = 0; s < steps; ++s) {
        const auto& t = targets[s % targets.size()];
        const double m = static_cast<double>(t.probs.size());
        out.kappa *= 1.0 + bound * m;
        out.min_prob_product *= t.probs.minCoeff();
        out.cell_product *= m;
        out.cell_sum += m;
    }
    return out;
}

}  // namespace rrx
