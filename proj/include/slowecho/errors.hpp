// errors.hpp - exception taxonomy; kinds map to CLI exit codes
#pragma once

#include <stdexcept>
#include <string>

namespace slowecho {

// Bad configuration or invalid inputs (CLI exit code 2).
class config_error : public std::runtime_error {
public:
    explicit config_error(const std::string& msg) : std::runtime_error(msg) {}
};

// Numerical instability or failed calibration (CLI exit code 3).
class numeric_error : public std::runtime_error {
public:
    explicit numeric_error(const std::string& msg) : std::runtime_error(msg) {}
};

// Analysis preconditions not met by the data (CLI exit code 4).
class analysis_error : public std::runtime_error {
public:
    explicit analysis_error(const std::string& msg) : std::runtime_error(msg) {}
};

} // namespace slowecho
