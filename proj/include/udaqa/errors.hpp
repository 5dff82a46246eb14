#pragma once

#include <stdexcept>
#include <string>

namespace udaqa {

// Dataset / file-format problems. CLI maps these to exit code 2.
struct DataError : std::runtime_error {
    explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

// Non-finite values, domain violations inside the numerics. Exit code 3.
struct NumericError : std::runtime_error {
    explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace udaqa
