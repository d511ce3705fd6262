#pragma once

#include <stdexcept>
#include <string>

namespace nssm {

/// Invalid input shape, value, or configuration.
class InvalidArgument : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// A numerical routine could not produce a trustworthy result
/// (singular innovation covariance, indefinite covariance, overflow).
class NumericalError : public std::runtime_error {
public:
    explicit NumericalError(const std::string& what, double condition = 0.0)
        : std::runtime_error(what), condition_(condition) {}

    /// Reciprocal condition estimate of the offending matrix, when one applies.
    [[nodiscard]] double condition() const noexcept { return condition_; }

private:
    double condition_;
};

/// Iterative method stopped at max_iter without meeting its tolerance.
class NonConvergenceError : public NumericalError {
public:
    NonConvergenceError(const std::string& what, double last_iterate, int iterations)
        : NumericalError(what), last_iterate_(last_iterate), iterations_(iterations) {}

    [[nodiscard]] double last_iterate() const noexcept { return last_iterate_; }
    [[nodiscard]] int iterations() const noexcept { return iterations_; }

private:
    double last_iterate_;
    int iterations_;
};

/// Operation requested outside the regime where it is defined.
class Unsupported : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

}  // namespace nssm
