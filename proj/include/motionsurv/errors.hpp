#pragma once

#include <stdexcept>
#include <string>

namespace motionsurv {

/// Malformed input data or an invalid configuration. Maps to CLI exit code 2.
class InputError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A caller broke an operation's precondition (mismatched lengths, wrong dims).
class ContractError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// The requested statistic does not exist for this input, e.g. a C-index with
/// no informative pairs. Distinct from a legitimate value of zero.
class UndefinedResultError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

/// Training or fitting failed numerically. Maps to CLI exit code 3.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace motionsurv
