#include "rrx/raking.hpp"

#include <cmath>

namespace rrx {

RakingSchedule make_schedule(std::vector<MarginalTarget> targets) {
    if (targets.empty()) throw ValidationError("schedule: no targets");
    const int n = static_cast<int>(targets.size());
    for (int i = 0; i < n; ++i) {
        if (targets[i].partition < 0)
            throw ValidationError("schedule: target " + std::to_string(i) +
                                  " names no partition");
        // Consecutive duplicates (and i == next for n == 1) make a step a no-op.
        const int next = (i + 1) % n;
        if (targets[i].partition == targets[next].partition)
            throw ValidationError("schedule: steps " + std::to_string(i) + " and " +
                                  std::to_string(next) + " rake the same partition");
    }
    return RakingSchedule{std::move(targets)};
}

RakingState RakingState::from_grid(const CellGrid& grid) {
    RakingState state;
    state.partitions_ = grid.partitions();
    state.labels_ = grid.labels();
    state.weights_ = grid.probabilities();
    return state;
}

RakingState RakingState::from_sample(const WeightedSample& sample) {
    validate_sample(sample);
    RakingState state;
    state.partitions_ = sample.partitions;
    state.labels_ = sample.labels;
    state.weights_ = sample.weights;
    return state;
}

Vector RakingState::marginal(int k) const {
    return marginalize(weights_, labels_, k, partitions_[k].size());
}

double RakingState::margin_residual(const std::vector<MarginalTarget>& targets) const {
    double worst = 0.0;
    for (const auto& t : targets)
        worst = std::max(worst, (marginal(t.partition) - t.probs).cwiseAbs().maxCoeff());
    return worst;
}

bool rake_step_weights(Vector& weights, const IntMatrix& labels, int k,
                       const Vector& target, int* empty_cell) {
    Vector margin = marginalize(weights, labels, k, static_cast<int>(target.size()));
    for (int j = 0; j < margin.size(); ++j) {
        if (margin[j] <= 0.0 && target[j] > 0.0) {
            if (empty_cell) *empty_cell = j;
            return false;
        }
    }
    Vector factor(margin.size());
    for (int j = 0; j < margin.size(); ++j)
        factor[j] = margin[j] > 0.0 ? target[j] / margin[j] : 0.0;
    for (int i = 0; i < weights.size(); ++i) weights[i] *= factor[labels(i, k)];
    return true;
}

void rake_step(RakingState& state, const MarginalTarget& target) {
    const int k = target.partition;
    if (k < 0 || k >= static_cast<int>(state.partitions_.size()))
        throw ValidationError("rake step: partition index out of range");
    if (target.probs.size() != state.partitions_[k].size())
        throw ValidationError("rake step: target length does not match partition '" +
                              state.partitions_[k].name + "'");
    const Vector margin = state.marginal(k);
    int empty = -1;
    if (!rake_step_weights(state.weights_, state.labels_, k, target.probs, &empty))
        throw EmptyMarginError(state.partitions_[k].name, state.partitions_[k].labels[empty]);
    state.iteration_ += 1;
    state.kl_history_.push_back(kl_margin_increment(margin, target.probs));
}

RakeReport rake_until_converged(RakingState& state, const RakingSchedule& schedule,
                                double tol, int max_iterations) {
    RakeReport report;
    report.final_residual = state.margin_residual(schedule.targets);
    const int period = static_cast<int>(schedule.targets.size());
    while (report.final_residual > tol && report.iterations < max_iterations) {
        rake_step(state, schedule.targets[state.iteration() % period]);
        report.iterations += 1;
        report.final_residual = state.margin_residual(schedule.targets);
    }
    report.converged = report.final_residual <= tol;
    return report;
}

Vector exact_weights(const RakingState& start, const RakingSchedule& schedule, int steps) {
    if (steps < 0) throw ValidationError("exact weights: negative step count");
    const int period = static_cast<int>(schedule.targets.size());
    Vector ratio = Vector::Ones(start.weights().size());
    for (int s = 0; s < steps; ++s) {
        const auto& target = schedule.targets[s % period];
        const int k = target.partition;
        const Vector current = start.weights().cwiseProduct(ratio);
        const auto& labels = start.labels();
        Vector margin = marginalize(current, labels, k, static_cast<int>(target.probs.size()));
        for (int j = 0; j < margin.size(); ++j)
            if (margin[j] <= 0.0 && target.probs[j] > 0.0)
                throw EmptyMarginError(start.partitions()[k].name,
                                       start.partitions()[k].labels[j]);
        for (int i = 0; i < ratio.size(); ++i) {
            const double m = margin[labels(i, k)];
            ratio[i] *= m > 0.0 ? target.probs[labels(i, k)] / m : 0.0;
        }
    }
    return start.weights().cwiseProduct(ratio);
}

double kl_divergence(const Vector& from, const Vector& to) {
    if (from.size() != to.size())
        throw ValidationError("divergence: weight vectors of different length");
    double out = 0.0;
    for (int i = 0; i < from.size(); ++i) {
        if (from[i] <= 0.0) continue;
        if (to[i] <= 0.0)
            throw ValidationError("divergence: mass outside the support of the second vector");
        out += from[i] * std::log(from[i] / to[i]);
    }
    return out;
}

double kl_margin_increment(const Vector& margin, const Vector& target) {
    double out = 0.0;
    for (int j = 0; j < margin.size(); ++j)
        if (margin[j] > 0.0) out += margin[j] * std::log(margin[j] / target[j]);
    return out;
}

bool verify_projection(const RakingState& before, const RakingState& after,
                       const MarginalTarget& target, int candidates, RngStream& rng,
                       double slack) {
    const Vector& base = before.weights();
    const double raked_div = kl_divergence(base, after.weights());
    const int k = target.partition;
    const int m = static_cast<int>(target.probs.size());

    // rows of each margin cell that can donate or absorb mass
    std::vector<std::vector<int>> rows(m);
    for (int i = 0; i < base.size(); ++i)
        if (base[i] > 0.0) rows[after.labels()(i, k)].push_back(i);
    std::vector<int> usable;
    for (int j = 0; j < m; ++j)
        if (rows[j].size() >= 2) usable.push_back(j);
    if (usable.empty()) return true;  // constraint set is a single point

    for (int c = 0; c < candidates; ++c) {
        Vector w = after.weights();
        // a couple of within-cell transfers keep the raked margin intact
        const int moves = 1 + static_cast<int>(rng.next_u64() % 3);
        for (int t = 0; t < moves; ++t) {
            const auto& cell = usable[rng.next_u64() % usable.size()];
            const auto& idx = rows[cell];
            const int a = idx[rng.next_u64() % idx.size()];
            int b = idx[rng.next_u64() % idx.size()];
            while (b == a) b = idx[rng.next_u64() % idx.size()];
            const double delta = rng.uniform() * 0.9 * w[a];
            w[a] -= delta;
            w[b] += delta;
        }
        if (kl_divergence(base, w) + slack < raked_div) return false;
    }
    return true;
}

}  // namespace rrx
