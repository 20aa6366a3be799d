#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace gridse {

/// Base class of every exception thrown by this library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed input text. Carries the 1-based line number when known.
class ParseError : public Error {
public:
    explicit ParseError(const std::string& what, std::size_t line = 0)
        : Error(line ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}
    std::size_t line() const { return line_; }

private:
    std::size_t line_;
};

/// Structurally invalid data (dangling references, disconnected graph, ...).
class ValidationError : public Error {
public:
    using Error::Error;
};

/// A caller violated an operation precondition.
class ArgumentError : public Error {
public:
    using Error::Error;
};

/// Iterative solver failed to converge. Carries the final mismatch.
class DivergenceError : public Error {
public:
    DivergenceError(const std::string& what, double mismatch, int iterations)
        : Error(what + " (mismatch " + std::to_string(mismatch) + " after " +
                std::to_string(iterations) + " iterations)"),
          mismatch_(mismatch), iterations_(iterations) {}
    double mismatch() const { return mismatch_; }
    int iterations() const { return iterations_; }

private:
    double mismatch_;
    int iterations_;
};

/// Rank-deficient linear system. Carries the deficient rank and the rank needed.
class SingularityError : public Error {
public:
    SingularityError(const std::string& what, int rank, int needed)
        : Error(what + " (rank " + std::to_string(rank) + ", need " + std::to_string(needed) + ")"),
          rank_(rank), needed_(needed) {}
    int rank() const { return rank_; }
    int needed() const { return needed_; }

private:
    int rank_;
    int needed_;
};

/// Non-finite value during numeric evaluation. Carries the offending batch index.
class NumericError : public Error {
public:
    explicit NumericError(const std::string& what, long index = -1)
        : Error(index >= 0 ? what + " (batch index " + std::to_string(index) + ")" : what),
          index_(index) {}
    long index() const { return index_; }

private:
    long index_;
};

/// Filesystem-level failure (missing file, write error).
class IoError : public Error {
public:
    using Error::Error;
};

} // namespace gridse
