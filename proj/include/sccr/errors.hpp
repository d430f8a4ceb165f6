#pragma once

// Exception types shared by every module. All errors derive from sccr::Error so
// callers that only care about "something went wrong" can catch one type.

#include <stdexcept>
#include <string>

namespace sccr {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Malformed input: bad lengths, out-of-range parameters, schema violations.
class ValidationError : public Error {
public:
    using Error::Error;
};

// Mathematically undefined request, e.g. logit(0) or an unidentifiable coefficient.
class DomainError : public Error {
public:
    using Error::Error;
};

// Recursion produced a non-finite or non-positive quantity where one is required.
class NumericalError : public Error {
public:
    using Error::Error;
};

class ConvergenceError : public Error {
public:
    ConvergenceError(const std::string& what, double best_residual)
        : Error(what + " (best residual " + std::to_string(best_residual) + ")"),
          best_residual_(best_residual) {}

    double best_residual() const noexcept { return best_residual_; }

private:
    double best_residual_;
};

class IoError : public Error {
public:
    using Error::Error;
};

}  // namespace sccr
