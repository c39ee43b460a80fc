#pragma once

#include <stdexcept>
#include <string>

namespace efs {

// A parameter is outside the domain of the operation (e.g. a scale factor outside [0,1]).
class InvalidParameter : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// The sample budget ran out before a Las Vegas procedure produced its output.
// Raised instead of returning an approximate answer.
class BudgetExceeded : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// A black-box source or oracle returned something outside its declared contract.
class ContractViolation : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class SolverFailure : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class InvariantViolation : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

} // namespace efs
