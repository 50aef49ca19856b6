#ifndef LEXINF_ERRORS_HPP
#define LEXINF_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace lexinf {

/// Bad arguments or configuration. Maps to CLI exit code 1.
class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed or inconsistent input data. Maps to CLI exit code 2.
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Numerical failure (non-convergence, degenerate weights, singular systems).
/// Maps to CLI exit code 3.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

} // namespace lexinf

#endif // LEXINF_ERRORS_HPP
