#pragma once

#include <stdexcept>
#include <string>

namespace rrx {

// Invalid inputs: malformed grids, targets that are not probability vectors,
// schedules raking the same partition twice in a row, unreadable files.
class ValidationError : public std::runtime_error {
public:
    explicit ValidationError(const std::string& what) : std::runtime_error(what) {}
};

// A raking step hit a margin cell with zero current mass but a positive target.
class EmptyMarginError : public std::runtime_error {
public:
    EmptyMarginError(const std::string& partition, const std::string& cell)
        : std::runtime_error("empty margin: partition '" + partition + "', cell '" + cell +
                             "' has zero weight but a positive target"),
          partition_(partition), cell_(cell) {}
    const std::string& partition() const { return partition_; }
    const std::string& cell() const { return cell_; }

private:
    std::string partition_;
    std::string cell_;
};

// The alternating scheme has no usable spectral gap (second eigenvalue too close to 1).
class ErgodicityError : public std::runtime_error {
public:
    explicit ErgodicityError(const std::string& what) : std::runtime_error(what) {}
};

// A comparison was requested outside the regime where its guarantee holds.
class PreconditionError : public std::runtime_error {
public:
    explicit PreconditionError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace rrx
