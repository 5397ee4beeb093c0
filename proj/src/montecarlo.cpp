#include "rrx/montecarlo.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <functional>
#include <mutex>
#include <numeric>
#include <thread>

#include "rrx/raking.hpp"
#include "rrx/rng.hpp"

namespace rrx {

namespace {

// Replications are independent and each one's draws depend only on (seed, rep),
// so a shared counter hands them out to workers without affecting results.
void parallel_reps(int reps, int threads, const std::function<void(int)>& body) {
    threads = std::clamp(threads, 1, reps);
    if (threads == 1) {
        for (int r = 0; r < reps; ++r) body(r);
        return;
    }
    std::atomic<int> next{0};
    std::mutex guard;
    std::exception_ptr failure;
    std::vector<std::thread> pool;
    pool.reserve(threads);
    for (int t = 0; t < threads; ++t) {
        pool.emplace_back([&] {
            try {
                for (int r = next.fetch_add(1); r < reps; r = next.fetch_add(1)) body(r);
            } catch (...) {
                std::lock_guard<std::mutex> lock(guard);
                if (!failure) failure = std::current_exception();
            }
        });
    }
    for (auto& th : pool) th.join();
    if (failure) std::rethrow_exception(failure);
}

struct RepMeans {
    int stages = 0;
    int funcs = 0;
    int survivors = 0;
    std::vector<char> ok;
    std::vector<double> means;  // rep * stages * funcs + stage * funcs + fn

    double at(int rep, int stage, int fn) const {
        return means[(static_cast<std::size_t>(rep) * stages + stage) * funcs + fn];
    }
};

RepMeans replicate(const ExperimentConfig& config) {
    if (config.generator != ExperimentConfig::Generator::DiscreteJoint)
        throw ValidationError(
            "replication experiment: only the discrete joint generator runs here");
    if (config.n < 2) throw ValidationError("replication experiment: n must be at least 2");
    if (config.reps < 2)
        throw ValidationError("replication experiment: need at least 2 replications");
    if (config.functions.empty())
        throw ValidationError("replication experiment: no functions");
    for (const auto& f : config.functions) validate_function(config.grid, f);
    for (std::size_t s = 0; s < config.schedule.size(); ++s) {
        const int k = config.schedule[s];
        if (k < 0 || k >= config.grid.num_partitions())
            throw ValidationError("replication experiment: schedule step " +
                                  std::to_string(s) + " names no grid partition");
        if (s > 0 && config.schedule[s - 1] == k)
            throw ValidationError(
                "replication experiment: consecutive steps rake the same partition");
    }

    const CellGrid& grid = config.grid;
    const int n = config.n;
    const int nf = static_cast<int>(config.functions.size());
    const int num_steps = static_cast<int>(config.schedule.size());

    Vector cumulative(grid.num_cells());
    std::partial_sum(grid.probabilities().data(),
                     grid.probabilities().data() + grid.num_cells(), cumulative.data());
    Matrix cell_sd(grid.num_cells(), nf);
    for (int j = 0; j < nf; ++j)
        cell_sd.col(j) = config.functions[j].var.cwiseSqrt();
    std::vector<Vector> margins(grid.num_partitions());
    for (int k = 0; k < grid.num_partitions(); ++k) margins[k] = marginalize(grid, k);

    RepMeans out;
    out.stages = num_steps + 1;
    out.funcs = nf;
    out.ok.assign(config.reps, 0);
    out.means.assign(static_cast<std::size_t>(config.reps) * out.stages * nf, 0.0);

    parallel_reps(config.reps, config.threads, [&](int rep) {
        RngStream rng(config.seed, static_cast<std::uint64_t>(rep));
        IntMatrix labels(n, grid.num_partitions());
        Matrix values(n, nf);
        for (int i = 0; i < n; ++i) {
            const int cell = rng.categorical(cumulative);
            labels.row(i) = grid.labels().row(cell);
            for (int j = 0; j < nf; ++j)
                values(i, j) =
                    config.functions[j].mean[cell] + cell_sd(cell, j) * rng.normal();
        }
        Vector w = Vector::Constant(n, 1.0 / n);
        double* slot = &out.means[static_cast<std::size_t>(rep) * out.stages * nf];
        for (int j = 0; j < nf; ++j) slot[j] = w.dot(values.col(j));
        for (int s = 0; s < num_steps; ++s) {
            const int k = config.schedule[s];
            if (!rake_step_weights(w, labels, k, margins[k])) return;  // dropped
            for (int j = 0; j < nf; ++j) slot[(s + 1) * nf + j] = w.dot(values.col(j));
        }
        out.ok[rep] = 1;
    });
    out.survivors =
        static_cast<int>(std::count(out.ok.begin(), out.ok.end(), char(1)));
    if (out.survivors < 2)
        throw PreconditionError(
            "replication experiment: fewer than 2 replications survived raking");
    return out;
}

}  // namespace

double ks_to_normal(std::vector<double> values) {
    if (values.empty()) throw ValidationError("distribution distance of an empty sample");
    std::sort(values.begin(), values.end());
    const double n = static_cast<double>(values.size());
    double d = 0.0;
    for (std::size_t i = 0; i < values.size(); ++i) {
        const double cdf = normal_cdf(values[i]);
        d = std::max(d, std::max(cdf - i / n, (i + 1) / n - cdf));
    }
    return d;
}

ExperimentReport run_raking_experiment(const ExperimentConfig& config) {
    const RepMeans runs = replicate(config);
    const int stages = runs.stages;
    const int nf = runs.funcs;

    ExperimentReport report;
    report.n = config.n;
    report.reps = config.reps;
    report.dropped = config.reps - runs.survivors;
    report.schedule = config.schedule;
    for (const auto& f : config.functions) report.function_names.push_back(f.name);
    report.mean.resize(stages, nf);
    report.bias_scaled.resize(stages, nf);
    report.bias_se.resize(stages, nf);
    report.nvar.resize(stages, nf);
    report.theory.resize(stages, nf);
    report.ks.resize(stages, nf);

    GaussianLimitModel model = stages > 1
        ? make_limit_model(config.grid, config.schedule)
        : make_limit_model(config.grid, std::vector<int>{0});
    const double root_n = std::sqrt(static_cast<double>(config.n));
    std::vector<double> vals(runs.survivors);
    for (int s = 0; s < stages; ++s) {
        for (int j = 0; j < nf; ++j) {
            int idx = 0;
            for (int r = 0; r < config.reps; ++r)
                if (runs.ok[r]) vals[idx++] = runs.at(r, s, j);
            const double mean =
                std::accumulate(vals.begin(), vals.end(), 0.0) / runs.survivors;
            double ss = 0.0;
            for (double v : vals) ss += (v - mean) * (v - mean);
            const double var = ss / (runs.survivors - 1);
            const double sd = std::sqrt(var);
            report.mean(s, j) = mean;
            report.bias_scaled(s, j) =
                root_n * (mean - mean_of(config.grid, config.functions[j]));
            report.bias_se(s, j) = root_n * sd / std::sqrt(double(runs.survivors));
            report.nvar(s, j) = config.n * var;
            report.theory(s, j) =
                s == 0 ? variance_of(config.grid, config.functions[j])
                       : covariance_gn(model, config.functions[j], config.functions[j], s);
            std::vector<double> standardized(vals);
            if (sd > 0.0)
                for (double& v : standardized) v = (v - mean) / sd;
            report.ks(s, j) = ks_to_normal(std::move(standardized));
        }
    }
    return report;
}

EcdfReport ecdf_experiment(int n, int reps, int mid_steps, std::uint64_t seed,
                           int threads) {
    if (n < 2) throw ValidationError("distribution-function study: n must be at least 2");
    if (reps < 1) throw ValidationError("distribution-function study: no replications");
    if (mid_steps < 2)
        throw ValidationError("distribution-function study: need at least 2 raking steps");

    constexpr int kCells = 10;
    const double thresholds[kCells - 1] = {-2.0, -1.5, -1.0, -0.5, 0.0,
                                           0.5,  1.0,  1.5,  2.0};
    const double sigma[2] = {std::sqrt(3.0), 1.0};
    Vector target[2];
    for (int c = 0; c < 2; ++c) {
        target[c].resize(kCells);
        double prev = 0.0;
        for (int j = 0; j < kCells - 1; ++j) {
            const double cdf = normal_cdf(thresholds[j] / sigma[c]);
            target[c][j] = cdf - prev;
            prev = cdf;
        }
        target[c][kCells - 1] = 1.0 - prev;
    }
    const int odd_mid = mid_steps % 2 ? mid_steps : mid_steps - 1;
    const int even_mid = mid_steps % 2 ? mid_steps - 1 : mid_steps;

    std::vector<double> dist(static_cast<std::size_t>(reps) * 6, 0.0);
    std::vector<double> closer(static_cast<std::size_t>(reps) * 4, 0.0);
    std::vector<char> ok(reps, 0);

    parallel_reps(reps, threads, [&](int rep) {
        RngStream rng(seed, static_cast<std::uint64_t>(rep));
        Matrix coord(n, 2);
        for (int i = 0; i < n; ++i) {
            const double z1 = rng.normal();
            const double z2 = rng.normal();
            coord(i, 0) = std::sqrt(3.0) * z1;
            coord(i, 1) = -z1 / std::sqrt(3.0) + std::sqrt(2.0 / 3.0) * z2;
        }
        IntMatrix labels(n, 2);
        int counts[2][kCells] = {};
        for (int i = 0; i < n; ++i) {
            for (int c = 0; c < 2; ++c) {
                int j = 0;
                while (j < kCells - 1 && coord(i, c) > thresholds[j]) ++j;
                labels(i, c) = j;
                counts[c][j] += 1;
            }
        }
        for (int c = 0; c < 2; ++c)
            for (int j = 0; j < kCells; ++j)
                if (counts[c][j] == 0) return;  // dropped

        std::vector<std::vector<int>> order(2, std::vector<int>(n));
        for (int c = 0; c < 2; ++c) {
            std::iota(order[c].begin(), order[c].end(), 0);
            std::sort(order[c].begin(), order[c].end(),
                      [&](int a, int b) { return coord(a, c) < coord(b, c); });
        }

        // deviations |F_w - F_true| at the sorted points of one coordinate
        auto deviations = [&](const Vector& w, int c, std::vector<double>& dev) {
            double cum = 0.0;
            for (int i = 0; i < n; ++i) {
                cum += w[order[c][i]];
                dev[i] = std::abs(cum - normal_cdf(coord(order[c][i], c) / sigma[c]));
            }
        };
        auto distance = [&](const std::vector<double>& dev, int c) {
            double d = 0.0;
            for (int i = 1; i < n; ++i)
                d += (coord(order[c][i], c) - coord(order[c][i - 1], c)) / sigma[c] *
                     dev[i];
            return d;
        };

        Vector w = Vector::Constant(n, 1.0 / n);
        std::vector<double> dev0[2], dev_mid[2], dev_lim[2];
        for (int c = 0; c < 2; ++c) {
            dev0[c].resize(n);
            dev_mid[c].resize(n);
            dev_lim[c].resize(n);
            deviations(w, c, dev0[c]);
        }

        for (int iter = 1; iter <= 100000; ++iter) {
            const int c = iter % 2 ? 0 : 1;
            rake_step_weights(w, labels, c, target[c]);  // margins checked nonempty
            if (iter == odd_mid) deviations(w, 0, dev_mid[0]);
            if (iter == even_mid) deviations(w, 1, dev_mid[1]);
            if (iter >= mid_steps) {
                double residual = 0.0;
                for (int m = 0; m < 2; ++m)
                    residual = std::max(
                        residual,
                        (marginalize(w, labels, m, kCells) - target[m]).cwiseAbs().maxCoeff());
                if (residual < 1e-8) break;
            }
        }
        for (int c = 0; c < 2; ++c) deviations(w, c, dev_lim[c]);

        double* d = &dist[static_cast<std::size_t>(rep) * 6];
        double* cl = &closer[static_cast<std::size_t>(rep) * 4];
        for (int c = 0; c < 2; ++c) {
            d[c * 3 + 0] = distance(dev0[c], c);
            d[c * 3 + 1] = distance(dev_mid[c], c);
            d[c * 3 + 2] = distance(dev_lim[c], c);
            int better_mid = 0, better_lim = 0;
            for (int i = 0; i < n; ++i) {
                better_mid += dev_mid[c][i] < dev0[c][i];
                better_lim += dev_lim[c][i] < dev0[c][i];
            }
            cl[c * 2 + 0] = static_cast<double>(better_mid) / n;
            cl[c * 2 + 1] = static_cast<double>(better_lim) / n;
        }
        ok[rep] = 1;
    });

    EcdfReport report;
    report.n = n;
    report.reps = reps;
    report.mid_steps = mid_steps;
    int survivors = 0;
    for (int r = 0; r < reps; ++r) {
        if (!ok[r]) continue;
        survivors += 1;
        for (int c = 0; c < 2; ++c) {
            for (int s = 0; s < 3; ++s)
                report.distance[c][s] += dist[static_cast<std::size_t>(r) * 6 + c * 3 + s];
            for (int s = 0; s < 2; ++s)
                report.closer[c][s] += closer[static_cast<std::size_t>(r) * 4 + c * 2 + s];
        }
    }
    report.dropped = reps - survivors;
    if (survivors == 0)
        throw PreconditionError("distribution-function study: every replication was dropped");
    for (int c = 0; c < 2; ++c) {
        for (int s = 0; s < 3; ++s) report.distance[c][s] /= survivors;
        for (int s = 0; s < 2; ++s) report.closer[c][s] /= survivors;
    }
    return report;
}

SampleVsTheory sample_vs_theory(const ExperimentConfig& config, int steps, int draws) {
    if (config.schedule.empty())
        throw ValidationError("sampling check: the experiment schedule is empty");
    if (steps < 0 || steps > static_cast<int>(config.schedule.size()))
        throw ValidationError("sampling check: steps outside the schedule");
    if (draws < 2) throw ValidationError("sampling check: need at least 2 draws");

    const GaussianLimitModel model = make_limit_model(config.grid, config.schedule);
    const Matrix theory = covariance_matrix(model, config.functions, steps);
    const double theory_norm = theory.norm();
    if (theory_norm <= 0.0)
        throw PreconditionError("sampling check: the reference covariance is zero");

    auto empirical_cov = [](const Matrix& rows) {
        const Vector mean = rows.colwise().mean();
        Matrix centered = rows.rowwise() - mean.transpose();
        return Matrix(centered.transpose() * centered / (rows.rows() - 1.0));
    };

    SampleVsTheory out;
    const Matrix g = sample_gn(model, config.functions, steps, draws, config.seed);
    out.sample_gn_rel_frobenius = (empirical_cov(g) - theory).norm() / theory_norm;

    const RepMeans runs = replicate(config);
    Matrix rep_means(runs.survivors, runs.funcs);
    int idx = 0;
    for (int r = 0; r < config.reps; ++r) {
        if (!runs.ok[r]) continue;
        for (int j = 0; j < runs.funcs; ++j) rep_means(idx, j) = runs.at(r, steps, j);
        idx += 1;
    }
    out.replication_rel_frobenius =
        (config.n * empirical_cov(rep_means) - theory).norm() / theory_norm;
    return out;
}

}  // namespace rrx
