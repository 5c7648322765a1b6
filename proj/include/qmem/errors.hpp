// errors.hpp: exception hierarchy shared by all qmem modules

#pragma once

#include <stdexcept>
#include <string>

namespace qmem {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Input outside the mathematical domain of an operation (negative temperature,
// size mismatch, KMS-violating table, ...).
class ParameterError : public Error {
public:
    using Error::Error;
};

// A documented precondition of an operation does not hold.
class PreconditionError : public Error {
public:
    using Error::Error;
};

// Too few samples / trajectories / points for a fit or estimator.
class DataError : public Error {
public:
    using Error::Error;
};

// State space too large for exact treatment.
class CapacityError : public Error {
public:
    using Error::Error;
};

// Quadrature or eigensolver did not converge.
class NumericalError : public Error {
public:
    using Error::Error;
};

// Internal invariant broken (e.g. odd syndrome handed to the decoder).
class InvariantError : public Error {
public:
    using Error::Error;
};

}  // namespace qmem
