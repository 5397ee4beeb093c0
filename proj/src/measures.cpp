#include "rrx/measures.hpp"

#include <cmath>
#include <set>
#include <sstream>
#include <unordered_set>

namespace rrx {

namespace {

void check_simplex(const Vector& p, double tol, const std::string& what) {
    if (p.size() == 0) throw ValidationError(what + ": empty probability vector");
    if ((p.array() < 0.0).any()) throw ValidationError(what + ": negative entry");
    const double sum = p.sum();
    if (!(std::abs(sum - 1.0) <= tol)) {  // also rejects NaN
        std::ostringstream os;
        os << what << ": probabilities sum to " << sum << ", expected 1 within " << tol;
        throw ValidationError(os.str());
    }
}

void check_partition(const Partition& part) {
    if (part.size() < 2)
        throw ValidationError("partition '" + part.name + "' needs at least 2 cells");
    std::unordered_set<std::string> seen;
    for (const auto& label : part.labels)
        if (!seen.insert(label).second)
            throw ValidationError("partition '" + part.name + "' repeats label '" + label + "'");
}

}  // namespace

MarginalTarget make_marginal_target(int partition, Vector probs) {
    check_simplex(probs, kSimplexTol, "marginal target");
    if (probs.minCoeff() <= 0.0)
        throw ValidationError("marginal target: every cell probability must be positive");
    return MarginalTarget{partition, std::move(probs)};
}

CellGrid::CellGrid(std::vector<Partition> partitions, IntMatrix labels, Vector p)
    : partitions_(std::move(partitions)), labels_(std::move(labels)), p_(std::move(p)) {
    if (partitions_.empty()) throw ValidationError("grid: no partitions");
    for (const auto& part : partitions_) check_partition(part);
    if (labels_.rows() != p_.size())
        throw ValidationError("grid: label rows and probability entries disagree");
    if (labels_.cols() != static_cast<Eigen::Index>(partitions_.size()))
        throw ValidationError("grid: label columns and partition count disagree");
    check_simplex(p_, kSimplexTol, "grid");
    std::set<std::vector<int>> seen;
    for (int c = 0; c < num_cells(); ++c) {
        std::vector<int> key(num_partitions());
        for (int k = 0; k < num_partitions(); ++k) {
            const int j = labels_(c, k);
            if (j < 0 || j >= partitions_[k].size())
                throw ValidationError("grid: cell " + std::to_string(c) +
                                      " has an out-of-range label in partition '" +
                                      partitions_[k].name + "'");
            key[k] = j;
        }
        if (!seen.insert(key).second)
            throw ValidationError("grid: duplicate cell " + cell_name(c));
    }
}

int CellGrid::partition_index(const std::string& name) const {
    for (int k = 0; k < num_partitions(); ++k)
        if (partitions_[k].name == name) return k;
    return -1;
}

std::string CellGrid::cell_name(int cell) const {
    std::string out;
    for (int k = 0; k < num_partitions(); ++k) {
        if (k) out += '|';
        out += partitions_[k].labels[labels_(cell, k)];
    }
    return out;
}

PiecewiseFunction make_piecewise_function(std::string name, Vector mean, Vector var,
                                          double bound) {
    if (mean.size() != var.size())
        throw ValidationError("function '" + name + "': mean and var lengths disagree");
    if (bound <= 0.0) throw ValidationError("function '" + name + "': bound must be positive");
    if ((var.array() < 0.0).any())
        throw ValidationError("function '" + name + "': negative variance");
    if ((mean.array().abs() > bound).any())
        throw ValidationError("function '" + name + "': a cell mean exceeds the bound");
    return PiecewiseFunction{std::move(name), std::move(mean), std::move(var), bound};
}

void validate_function(const CellGrid& grid, const PiecewiseFunction& f) {
    if (f.mean.size() != grid.num_cells())
        throw ValidationError("function '" + f.name + "' does not cover every grid cell");
}

void validate_sample(const WeightedSample& sample) {
    for (const auto& part : sample.partitions) check_partition(part);
    if (sample.labels.cols() != static_cast<Eigen::Index>(sample.partitions.size()))
        throw ValidationError("sample: label columns and partition count disagree");
    if (sample.labels.rows() != sample.weights.size())
        throw ValidationError("sample: label rows and weights disagree");
    if (sample.values.rows() > 0 && sample.values.rows() != sample.labels.rows())
        throw ValidationError("sample: value rows and label rows disagree");
    if (sample.values.cols() != static_cast<Eigen::Index>(sample.function_names.size()))
        throw ValidationError("sample: value columns and function names disagree");
    if ((sample.weights.array() < 0.0).any())
        throw ValidationError("sample: negative weight");
    if (std::abs(sample.weights.sum() - 1.0) > kSampleWeightTol)
        throw ValidationError("sample: weights must sum to 1");
    for (int i = 0; i < sample.labels.rows(); ++i)
        for (int k = 0; k < sample.labels.cols(); ++k) {
            const int j = sample.labels(i, k);
            if (j < 0 || j >= sample.partitions[k].size())
                throw ValidationError("sample: point " + std::to_string(i) +
                                      " has an out-of-range label");
        }
}

Vector marginalize(const Vector& weights, const IntMatrix& labels, int k, int num_labels) {
    Vector out = Vector::Zero(num_labels);
    for (int i = 0; i < weights.size(); ++i) out[labels(i, k)] += weights[i];
    return out;
}

Vector marginalize(const CellGrid& grid, int k) {
    return marginalize(grid.probabilities(), grid.labels(), k, grid.partition(k).size());
}

Vector conditional_expectation(const CellGrid& grid, const PiecewiseFunction& f, int k) {
    validate_function(grid, f);
    const int m = grid.partition(k).size();
    Vector num = Vector::Zero(m);
    Vector den = Vector::Zero(m);
    for (int c = 0; c < grid.num_cells(); ++c) {
        const int j = grid.labels()(c, k);
        num[j] += grid.probabilities()[c] * f.mean[c];
        den[j] += grid.probabilities()[c];
    }
    for (int j = 0; j < m; ++j)
        if (den[j] <= 0.0)
            throw ValidationError("conditional expectation over partition '" +
                                  grid.partition(k).name + "': cell '" +
                                  grid.partition(k).labels[j] + "' has zero probability");
    return num.cwiseQuotient(den);
}

Matrix transition_matrix(const CellGrid& grid, int from, int to) {
    const int mf = grid.partition(from).size();
    const int mt = grid.partition(to).size();
    Matrix joint = Matrix::Zero(mf, mt);
    Vector den = Vector::Zero(mf);
    for (int c = 0; c < grid.num_cells(); ++c) {
        const int i = grid.labels()(c, from);
        joint(i, grid.labels()(c, to)) += grid.probabilities()[c];
        den[i] += grid.probabilities()[c];
    }
    for (int i = 0; i < mf; ++i) {
        if (den[i] <= 0.0)
            throw ValidationError("transition matrix: conditioning cell '" +
                                  grid.partition(from).labels[i] + "' of partition '" +
                                  grid.partition(from).name + "' has zero probability");
        joint.row(i) /= den[i];
    }
    return joint;
}

double mean_of(const CellGrid& grid, const PiecewiseFunction& f) {
    validate_function(grid, f);
    return grid.probabilities().dot(f.mean);
}

double product_mean(const CellGrid& grid, const PiecewiseFunction& f,
                    const PiecewiseFunction& g) {
    validate_function(grid, f);
    validate_function(grid, g);
    const bool same = f.name == g.name;
    double out = 0.0;
    for (int c = 0; c < grid.num_cells(); ++c) {
        double within = same ? f.var[c] : 0.0;
        out += grid.probabilities()[c] * (f.mean[c] * g.mean[c] + within);
    }
    return out;
}

double variance_of(const CellGrid& grid, const PiecewiseFunction& f) {
    const double m = mean_of(grid, f);
    return product_mean(grid, f, f) - m * m;
}

}  // namespace rrx
