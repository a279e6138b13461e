#pragma once

#include <stdexcept>
#include <string>

namespace unifield {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Operand shapes are incompatible.
class DimensionError : public Error {
public:
    using Error::Error;
};

/// A documented precondition was violated by the caller.
class ContractError : public Error {
public:
    using Error::Error;
};

/// A flow vector does not match its domain's declared schema.
class DomainSchemaError : public Error {
public:
    using Error::Error;
};

/// A sample was routed to a domain that has no adapter.
class RoutingError : public Error {
public:
    using Error::Error;
};

/// A domain id is unknown to the registry, or the registry is inconsistent.
class RegistryError : public Error {
public:
    using Error::Error;
};

/// Malformed input file. Carries the 1-based line (text) or byte offset (binary).
class ParseError : public Error {
public:
    ParseError(const std::string& what, std::size_t location)
        : Error(what), location_(location) {}

    std::size_t location() const noexcept { return location_; }

private:
    std::size_t location_;
};

/// Bad or unknown configuration key/value.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Non-finite loss or other numerical breakdown during training.
class NumericalError : public Error {
public:
    using Error::Error;
};

/// Filesystem failures.
class IoError : public Error {
public:
    using Error::Error;
};

} // namespace unifield
