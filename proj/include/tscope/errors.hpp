#pragma once

#include <stdexcept>
#include <string>

namespace tscope {

// Malformed or inconsistent configuration input (CLI exit code 2).
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// Numerical failure inside an analysis pipeline (CLI exit code 1).
struct AnalysisError : std::runtime_error {
    explicit AnalysisError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace tscope
