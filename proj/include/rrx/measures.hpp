#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "rrx/errors.hpp"

namespace rrx {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using IntMatrix = Eigen::MatrixXi;

inline constexpr double kSimplexTol = 1e-12;
inline constexpr double kSampleWeightTol = 1e-10;

// One declared margin: a named partition with its cell labels.
struct Partition {
    std::string name;
    std::vector<std::string> labels;

    int size() const { return static_cast<int>(labels.size()); }
};

// Known cell probabilities for one partition; the raking targets.
// Entries must be strictly positive and sum to 1 within kSimplexTol.
struct MarginalTarget {
    int partition = -1;
    Vector probs;
};

MarginalTarget make_marginal_target(int partition, Vector probs);

// Discrete model on the refinement grid: the partition generated by crossing all
// declared partitions. Each row of `labels` gives one grid cell's label index in
// every partition; `p` holds the cell probabilities.
class CellGrid {
public:
    // empty placeholder so config structs can carry a grid by value
    CellGrid() = default;
    CellGrid(std::vector<Partition> partitions, IntMatrix labels, Vector p);

    int num_partitions() const { return static_cast<int>(partitions_.size()); }
    int num_cells() const { return static_cast<int>(p_.size()); }
    const Partition& partition(int k) const { return partitions_[k]; }
    const std::vector<Partition>& partitions() const { return partitions_; }
    int partition_index(const std::string& name) const;  // -1 when absent
    const IntMatrix& labels() const { return labels_; }
    const Vector& probabilities() const { return p_; }

    // human-readable cell name, e.g. "r1|c2"
    std::string cell_name(int cell) const;

private:
    std::vector<Partition> partitions_;
    IntMatrix labels_;
    Vector p_;
};

// A function known through its conditional mean and variance on every grid cell.
// |mean| is capped by `bound`; variances are nonnegative.
struct PiecewiseFunction {
    std::string name;
    Vector mean;
    Vector var;
    double bound = 1.0;
};

PiecewiseFunction make_piecewise_function(std::string name, Vector mean, Vector var,
                                          double bound);
void validate_function(const CellGrid& grid, const PiecewiseFunction& f);

// Point data: per-point labels in every partition, raw function values, and
// weights summing to 1 within kSampleWeightTol.
struct WeightedSample {
    std::vector<Partition> partitions;
    IntMatrix labels;                         // points x partitions
    Matrix values;                            // points x functions
    std::vector<std::string> function_names;
    Vector weights;
};

void validate_sample(const WeightedSample& sample);

// ---- measure operations -----------------------------------------------------

// margin of one partition: sums of cell (or point) weights per label
Vector marginalize(const CellGrid& grid, int k);
Vector marginalize(const Vector& weights, const IntMatrix& labels, int k, int num_labels);

// E[f | partition k cells]; requires every margin cell to carry positive mass
Vector conditional_expectation(const CellGrid& grid, const PiecewiseFunction& f, int k);

// rows condition on partition `from`: entry (i, j) = P(cell j of `to` | cell i of `from`)
Matrix transition_matrix(const CellGrid& grid, int from, int to);

// P(f), P(fg) and the limiting variance P(f^2) - P(f)^2.
// Within-cell covariance between distinct functions is taken as zero; a function
// paired with itself contributes its declared per-cell variance.
double mean_of(const CellGrid& grid, const PiecewiseFunction& f);
double product_mean(const CellGrid& grid, const PiecewiseFunction& f,
                    const PiecewiseFunction& g);
double variance_of(const CellGrid& grid, const PiecewiseFunction& f);

}  // namespace rrx
