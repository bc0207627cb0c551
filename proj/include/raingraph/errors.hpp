#pragma once

#include <stdexcept>
#include <string>

namespace raingraph {

// Bad or inconsistent configuration / input contract violation. CLI exit 2.
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// A pipeline stage was invoked before its inputs exist. CLI exit 3.
struct MissingArtifactError : std::runtime_error {
    explicit MissingArtifactError(const std::string& msg) : std::runtime_error(msg) {}
};

// Non-finite values, divergence, degenerate numerics. CLI exit 4.
struct NumericalError : std::runtime_error {
    explicit NumericalError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace raingraph
