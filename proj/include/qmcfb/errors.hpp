#pragma once

#include <stdexcept>
#include <string>

namespace qmcfb {

/// Base class for all library errors.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// An argument lies outside the domain an operation is defined on.
class DomainError : public Error {
public:
    using Error::Error;
};

/// Inputs are individually valid but inconsistent with each other (grid or shape mismatch).
class ContractError : public Error {
public:
    using Error::Error;
};

/// A model object could not be built from the given parameters.
class ConstructionError : public Error {
public:
    using Error::Error;
};

/// A numerical solver failed (non-convergence, singular system).
class SolverError : public Error {
public:
    using Error::Error;
};

/// Configuration document failed schema validation.
class ValidationError : public Error {
public:
    using Error::Error;
};

}  // namespace qmcfb
