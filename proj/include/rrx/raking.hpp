#pragma once

#include <optional>
#include <string>
#include <vector>

#include "rrx/measures.hpp"
#include "rrx/rng.hpp"

namespace rrx {

// Cyclic order in which targets are raked. Consecutive steps (including the
// wrap-around) must address distinct partitions.
struct RakingSchedule {
    std::vector<MarginalTarget> targets;
};

RakingSchedule make_schedule(std::vector<MarginalTarget> targets);

// Weights being raked, over either grid cells or sample points; both carry a
// label matrix, so one implementation serves both.
class RakingState {
public:
    static RakingState from_grid(const CellGrid& grid);
    static RakingState from_sample(const WeightedSample& sample);

    const Vector& weights() const { return weights_; }
    const IntMatrix& labels() const { return labels_; }
    int iteration() const { return iteration_; }
    const std::vector<double>& kl_history() const { return kl_history_; }
    const std::vector<Partition>& partitions() const { return partitions_; }

    Vector marginal(int k) const;
    // largest |margin - target| over the given targets
    double margin_residual(const std::vector<MarginalTarget>& targets) const;

    friend void rake_step(RakingState& state, const MarginalTarget& target);

private:
    RakingState() = default;

    std::vector<Partition> partitions_;
    IntMatrix labels_;
    Vector weights_;
    int iteration_ = 0;
    std::vector<double> kl_history_;
};

// One ratio step: rescale weights so the margin over `target.partition` matches
// target.probs exactly. Zero-weight rows in a positive-target margin cell stay
// zero; an entirely empty margin cell raises EmptyMarginError. Appends the
// divergence increment d(before, after) to kl_history.
void rake_step(RakingState& state, const MarginalTarget& target);

// Low-level kernel shared by RakingState and the Monte Carlo loops.
// Returns false (leaving `weights` untouched) when some margin cell of the raked
// partition is empty while its target is positive; `empty_cell` then names it.
bool rake_step_weights(Vector& weights, const IntMatrix& labels, int k,
                       const Vector& target, int* empty_cell = nullptr);

struct RakeReport {
    int iterations = 0;
    bool converged = false;
    double final_residual = 0.0;
};

// Cycle through the schedule until every margin matches its target within tol.
RakeReport rake_until_converged(RakingState& state, const RakingSchedule& schedule,
                                double tol = 1e-9, int max_iterations = 1000);

// Weight that N raking steps assign to each row, accumulated as the product of
// per-step target/current ratios; equals the directly raked weights.
Vector exact_weights(const RakingState& start, const RakingSchedule& schedule, int steps);

// Shannon-Kullback-Leibler divergence between weight vectors on the same rows.
// Requires `to` to dominate `from`; terms with from == 0 contribute zero.
double kl_divergence(const Vector& from, const Vector& to);

// Divergence between consecutive raking iterates, evaluated from the raked
// margin alone: sum over cells of margin * log(margin / target).
double kl_margin_increment(const Vector& margin, const Vector& target);

// Empirical check that one ratio step is the divergence projection onto its
// margin constraint: `after` must beat `candidates` random margin-preserving
// perturbations of itself in divergence from `before`, within slack.
bool verify_projection(const RakingState& before, const RakingState& after,
                       const MarginalTarget& target, int candidates, RngStream& rng,
                       double slack = 1e-10);

}  // namespace rrx
