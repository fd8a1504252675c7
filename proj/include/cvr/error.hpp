#pragma once

#include <stdexcept>
#include <string>

namespace cvr {

// Root of every error thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Argument outside the mathematical domain of a function (v <= 0, |alpha| > 1).
class DomainError : public Error {
public:
    using Error::Error;
};

// Invalid configuration value (bins < 2, epsilon outside (0,1), ...).
class ParameterError : public Error {
public:
    using Error::Error;
};

// Measurement data that cannot be used (non-finite, too short, misaligned).
class DataError : public Error {
public:
    using Error::Error;
};

// Training input without enough variation to fit a model.
class DegenerateInputError : public DataError {
public:
    using DataError::DataError;
};

// Network that is not a connected radial graph.
class TopologyError : public Error {
public:
    using Error::Error;
};

// The linearised voltage model is outside its validity region.
class ModelValidityError : public Error {
public:
    using Error::Error;
};

// Requested PV operating point exceeds the inverter rating.
class InfeasibleOperatingPointError : public Error {
public:
    using Error::Error;
};

// Input file does not follow its schema; message carries the field path.
class SchemaError : public Error {
public:
    using Error::Error;
};

// Nonlinear power-flow oracle failed to converge.
class OracleDivergenceError : public Error {
public:
    using Error::Error;
};

} // namespace cvr
