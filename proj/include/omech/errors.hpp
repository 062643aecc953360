#ifndef OMECH_ERRORS_HPP
#define OMECH_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace omech
{
// Root of the library's exception hierarchy. The CLI maps each branch onto an exit code.
class Error : public std::runtime_error
{
public:
    using std::runtime_error::runtime_error;
};

// Invalid device or coupling parameters (non-positive rates, eta outside (0,1), ...).
class ParameterError : public Error
{
public:
    using Error::Error;
};

// Under-coupled device: (eta - 1/2) <= 0 admits no real critical coupling.
class NoCriticalCouplingError : public ParameterError
{
public:
    using ParameterError::ParameterError;
};

// Evaluation at (or within the degeneracy threshold of) a zero of the transmission.
class SingularityError : public Error
{
public:
    using Error::Error;
};

// Generic numerical failure: unstable step, degenerate propagator, too few points.
class NumericalError : public Error
{
public:
    using Error::Error;
};

class EstimationError : public NumericalError
{
public:
    using NumericalError::NumericalError;
};

class FitError : public NumericalError
{
public:
    using NumericalError::NumericalError;
};

class ConfigError : public Error
{
public:
    using Error::Error;
};

class IoError : public Error
{
public:
    using Error::Error;
};

} // namespace omech

#endif // OMECH_ERRORS_HPP
