#pragma once

#include <stdexcept>
#include <string>

namespace rsb {

// Every error the library raises derives from Error; the CLI maps the
// category onto its exit code.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Shape / dimension mismatch between collaborating values.
class StructuralError : public Error {
public:
    using Error::Error;
};

// Caller violated an operation precondition (empty batch, bad index, ...).
class PreconditionError : public Error {
public:
    using Error::Error;
};

// Argument outside the operation's domain (non-mixture kind, eps <= 0, ...).
class DomainError : public Error {
public:
    using Error::Error;
};

// Non-finite values produced by training or sampling.
class DivergenceError : public Error {
public:
    using Error::Error;
};

// A replay minibatch was produced by a different frozen process.
class StaleCacheError : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

class VersionError : public Error {
public:
    using Error::Error;
};

} // namespace rsb
