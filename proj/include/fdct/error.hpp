#pragma once

#include <stdexcept>
#include <string>

namespace fdct {

/// Base of every error raised by the toolkit.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Input violates a documented precondition (range, shape, finiteness).
class ValidationError : public Error {
public:
    using Error::Error;
};

/// Two volumes that must be co-registered disagree in extent.
class PairingError : public Error {
public:
    using Error::Error;
};

/// Network or training configuration is internally inconsistent.
class ConfigurationError : public Error {
public:
    using Error::Error;
};

/// A noise predictor returned something the sampler cannot use.
class ModelContractError : public Error {
public:
    using Error::Error;
};

/// A sampling iterate or training loss became non-finite.
class DivergenceError : public Error {
public:
    using Error::Error;
};

/// Lesion contrast in the reference image is too small to form a ratio.
class UndefinedContrastError : public ValidationError {
public:
    using ValidationError::ValidationError;
};

class IoError : public Error {
public:
    using Error::Error;
};

class CheckpointError : public Error {
public:
    using Error::Error;
};

class AuthError : public Error {
public:
    using Error::Error;
};

class NotFoundError : public Error {
public:
    using Error::Error;
};

/// Request conflicts with stored state (e.g. re-answering an assignment).
class ConflictError : public Error {
public:
    using Error::Error;
};

}  // namespace fdct
