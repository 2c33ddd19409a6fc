#pragma once

#include <stdexcept>
#include <string>

namespace crw {

/// Bad input parameters. The CLI maps this to exit code 2.
class ParameterError : public std::invalid_argument {
public:
    explicit ParameterError(const std::string& what) : std::invalid_argument(what) {}
};

/// A schedule whose scale count or breakpoints are unusable.
class DegenerateScheduleError : public ParameterError {
public:
    explicit DegenerateScheduleError(const std::string& what) : ParameterError(what) {}
};

/// A control value outside [0, q_cap].
class AdmissibilityError : public std::domain_error {
public:
    explicit AdmissibilityError(const std::string& what) : std::domain_error(what) {}
};

/// Calibration search exhausted its grid. Exit code 3.
class CalibrationError : public std::runtime_error {
public:
    explicit CalibrationError(const std::string& what) : std::runtime_error(what) {}
};

/// A verify run detected a broken invariant. Exit code 4.
class InvariantViolation : public std::runtime_error {
public:
    explicit InvariantViolation(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace crw
