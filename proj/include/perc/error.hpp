#pragma once

#include <stdexcept>
#include <string>

namespace perc {

/// Caller violated a precondition (bad arguments, mismatched dimensions, malformed input).
class UsageError : public std::invalid_argument {
public:
    explicit UsageError(const std::string& what) : std::invalid_argument(what) {}
};

/// A configured resource limit (enumeration cap, envelope volume, memory guard) would be exceeded.
class ResourceError : public std::runtime_error {
public:
    explicit ResourceError(const std::string& what) : std::runtime_error(what) {}
};

/// Numerical procedure could not establish its own preconditions (e.g. unbracketed root).
class DiagnosticError : public std::runtime_error {
public:
    explicit DiagnosticError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace perc
