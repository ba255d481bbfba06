#pragma once

#include <stdexcept>
#include <string>

namespace pdcalib {

/// Input outside a documented validity interval (e.g. Sellmeier range).
class RangeError : public std::runtime_error {
public:
  explicit RangeError(const std::string& what) : std::runtime_error(what) {}
};

/// Physically undefined request (evanescent geometry, total internal
/// reflection, signal frequency above the pump).
class DomainError : public std::runtime_error {
public:
  explicit DomainError(const std::string& what) : std::runtime_error(what) {}
};

/// Iterative scheme failed to converge; the message carries the last residual.
class NumericalError : public std::runtime_error {
public:
  explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

/// Container shape mismatch or too-short input.
class SizeError : public std::runtime_error {
public:
  explicit SizeError(const std::string& what) : std::runtime_error(what) {}
};

/// Malformed or inconsistent configuration / input schema.
class ConfigError : public std::runtime_error {
public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

/// Filesystem failure while reading or writing artifacts.
class IoError : public std::runtime_error {
public:
  explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

} // namespace pdcalib
