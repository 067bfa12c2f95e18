#pragma once

#include <stdexcept>
#include <string>

namespace stirk {

// Base class for all errors thrown by the library.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// A state or input contains non-finite entries.
class InvalidStateError : public Error {
public:
    explicit InvalidStateError(const std::string& what) : Error(what) {}
};

// Integration or prediction produced non-finite values.
class DivergenceError : public Error {
public:
    DivergenceError(const std::string& what, long step) : Error(what), step_index(step) {}
    long step_index;
};

// A linear solve was requested on a matrix that is numerically singular.
class ConditioningError : public Error {
public:
    ConditioningError(const std::string& what, double estimate)
        : Error(what), condition_estimate(estimate) {}
    double condition_estimate;
};

// Matrix shapes do not match the declared schema.
class DimensionError : public Error {
public:
    explicit DimensionError(const std::string& what) : Error(what) {}
};

// A file could not be parsed into the expected schema.
class ParseError : public Error {
public:
    explicit ParseError(const std::string& what) : Error(what) {}
};

// A constraint class the solver does not handle (finite lifted-state bounds).
class UnsupportedConstraintError : public Error {
public:
    explicit UnsupportedConstraintError(const std::string& what) : Error(what) {}
};

// Metric is undefined for the given inputs (e.g. zero-norm reference).
class UndefinedMetricError : public Error {
public:
    explicit UndefinedMetricError(const std::string& what) : Error(what) {}
};

// Invalid experiment configuration; carries the offending field path.
class ConfigError : public Error {
public:
    ConfigError(std::string field_path, const std::string& what)
        : Error(field_path + ": " + what), field(std::move(field_path)) {}
    std::string field;
};

}  // namespace stirk
