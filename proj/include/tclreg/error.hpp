#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace tclreg {

/// Base of every error raised by the library. `kind()` is a short stable tag
/// the CLI prints as a machine-parsable prefix.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
    virtual const char* kind() const noexcept { return "error"; }
};

/// A document failed to parse against the feeder, scenario, or populator schema.
class SchemaError : public Error {
public:
    SchemaError(std::string field, std::string location, const std::string& detail)
        : Error(location + ": " + detail + " (field '" + field + "')"),
          field_(std::move(field)), location_(std::move(location)) {}

    const char* kind() const noexcept override { return "schema"; }
    const std::string& field() const noexcept { return field_; }
    const std::string& location() const noexcept { return location_; }

private:
    std::string field_;
    std::string location_;
};

/// The feeder graph is not a tree rooted at the slack bus.
class TopologyError : public Error {
public:
    TopologyError(const std::string& what, std::vector<std::string> cycle = {})
        : Error(what), cycle_(std::move(cycle)) {}

    const char* kind() const noexcept override { return "topology"; }
    /// Bus ids along the offending cycle (empty for disconnection errors).
    const std::vector<std::string>& cycle() const noexcept { return cycle_; }

private:
    std::vector<std::string> cycle_;
};

/// A model violates a type invariant (bad impedance, inverted deadband, ...).
class ModelError : public Error {
public:
    using Error::Error;
    const char* kind() const noexcept override { return "model"; }
};

class NumericError : public Error {
public:
    using Error::Error;
    const char* kind() const noexcept override { return "numeric"; }
};

/// An argument lies outside the mathematical domain of a formula.
class DomainError : public Error {
public:
    using Error::Error;
    const char* kind() const noexcept override { return "domain"; }
};

/// An air conditioner cannot pull indoor temperature down to its lower limit.
class CapacityError : public Error {
public:
    using Error::Error;
    const char* kind() const noexcept override { return "capacity"; }
};

class SizingError : public Error {
public:
    SizingError(const std::string& what, double achieved_kva)
        : Error(what), achieved_kva_(achieved_kva) {}
    const char* kind() const noexcept override { return "sizing"; }
    double achieved_kva() const noexcept { return achieved_kva_; }

private:
    double achieved_kva_;
};

class ConvergenceError : public Error {
public:
    ConvergenceError(const std::string& what, std::string worst_bus, double worst_mismatch,
                     int iterations)
        : Error(what), worst_bus_(std::move(worst_bus)), worst_mismatch_(worst_mismatch),
          iterations_(iterations) {}

    const char* kind() const noexcept override { return "convergence"; }
    const std::string& worst_bus() const noexcept { return worst_bus_; }
    double worst_mismatch() const noexcept { return worst_mismatch_; }
    int iterations() const noexcept { return iterations_; }

private:
    std::string worst_bus_;
    double worst_mismatch_;
    int iterations_;
};

class IoError : public Error {
public:
    using Error::Error;
    const char* kind() const noexcept override { return "io"; }
};

class ScalingError : public Error {
public:
    using Error::Error;
    const char* kind() const noexcept override { return "scaling"; }
};

}  // namespace tclreg
