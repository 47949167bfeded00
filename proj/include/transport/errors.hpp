#pragma once

#include <Eigen/Core>

#include <stdexcept>
#include <string>

namespace transport {

// Malformed input data or configuration. Maps to CLI exit status 2.
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Any failure while computing an estimate. Maps to CLI exit status 3.
class EstimationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ConvergenceError : public EstimationError {
public:
    ConvergenceError(const std::string& what, double residual_norm, int iterations)
        : EstimationError(what), residual_norm_(residual_norm), iterations_(iterations) {}

    double residual_norm() const noexcept { return residual_norm_; }
    int iterations() const noexcept { return iterations_; }

private:
    double residual_norm_;
    int iterations_;
};

class SingularMatrixError : public EstimationError {
public:
    using EstimationError::EstimationError;
};

class NonFiniteError : public EstimationError {
public:
    NonFiniteError(const std::string& what, Eigen::Index coordinate)
        : EstimationError(what), coordinate_(coordinate) {}

    // Parameter coordinate whose perturbation produced the non-finite value, or -1.
    Eigen::Index coordinate() const noexcept { return coordinate_; }

private:
    Eigen::Index coordinate_;
};

// Logistic fit whose coefficients diverge (complete or quasi-complete separation).
class SeparationError : public EstimationError {
public:
    using EstimationError::EstimationError;
};

}  // namespace transport
