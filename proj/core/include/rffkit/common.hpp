#pragma once

#include <stdexcept>
#include <string>

namespace rffkit {

// Error taxonomy, mapped to process exit codes by the CLI:
// validation (bad config/arguments) -> 2, data (bad files/datasets) -> 3,
// numeric (non-finite values, failed checks) -> 4.
class ValidationError : public std::runtime_error {
public:
    explicit ValidationError(const std::string& msg) : std::runtime_error(msg) {}
};

class DataError : public std::runtime_error {
public:
    explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

class NumericError : public std::runtime_error {
public:
    explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace rffkit
