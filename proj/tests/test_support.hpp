#pragma once

// Shared fixtures for the unit suites: random strictly positive tables and
// bounded piecewise functions over them.

#include <string>
#include <vector>

#include "rrx/measures.hpp"
#include "rrx/rng.hpp"

namespace rrx::test {

inline CellGrid random_grid(RngStream& rng, const std::vector<int>& sizes) {
    std::vector<Partition> parts;
    for (std::size_t k = 0; k < sizes.size(); ++k) {
        Partition p;
        p.name = std::string(1, static_cast<char>('A' + k));
        for (int j = 0; j < sizes[k]; ++j)
            p.labels.push_back(p.name + std::to_string(j + 1));
        parts.push_back(p);
    }
    int cells = 1;
    for (int s : sizes) cells *= s;
    IntMatrix labels(cells, static_cast<int>(sizes.size()));
    for (int c = 0; c < cells; ++c) {
        int rest = c;
        for (int k = static_cast<int>(sizes.size()) - 1; k >= 0; --k) {
            labels(c, k) = rest % sizes[k];
            rest /= sizes[k];
        }
    }
    Vector p(cells);
    for (int c = 0; c < cells; ++c) p[c] = 0.05 + rng.uniform();
    p /= p.sum();
    return CellGrid(parts, labels, p);
}

inline PiecewiseFunction random_function(RngStream& rng, int cells,
                                         const std::string& name = "f") {
    Vector mean(cells), var(cells);
    for (int c = 0; c < cells; ++c) {
        mean[c] = 2.0 * rng.uniform() - 1.0;
        var[c] = 0.5 * rng.uniform();
    }
    return make_piecewise_function(name, mean, var, 1.0);
}

}  // namespace rrx::test
