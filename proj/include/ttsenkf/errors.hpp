#pragma once

#include <stdexcept>
#include <string>

namespace ttsenkf {

struct InvalidInput : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

/// Overflow, singular solves and similar arithmetic failures.
struct NumericalError : std::runtime_error {
    explicit NumericalError(const std::string& what, double condition = 0.0)
        : std::runtime_error(what), condition(condition) {}
    double condition;
};

struct RootFindError : std::runtime_error {
    RootFindError(const std::string& what, double residual)
        : std::runtime_error(what), residual(residual) {}
    double residual;
};

struct PlantDomainError : std::domain_error {
    using std::domain_error::domain_error;
};

struct AlgebraicDomainError : std::domain_error {
    using std::domain_error::domain_error;
};

/// All particle weights collapsed to zero.
struct DegeneracyError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace ttsenkf
