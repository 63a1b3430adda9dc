#pragma once

#include <stdexcept>
#include <string>

namespace faconf {

// Shape/dimension disagreements between tensors or signals.
struct ShapeError : std::runtime_error {
    explicit ShapeError(const std::string& msg) : std::runtime_error("shape error: " + msg) {}
};

// Invalid configuration values (hyperparameters, band layouts, CLI options).
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error("config error: " + msg) {}
};

// Math-domain violations (log of non-positive, frequency out of range).
struct DomainError : std::runtime_error {
    explicit DomainError(const std::string& msg) : std::runtime_error("domain error: " + msg) {}
};

// Infeasible filter specifications.
struct DesignError : std::runtime_error {
    explicit DesignError(const std::string& msg) : std::runtime_error("design error: " + msg) {}
};

// Malformed files (container, CSV, checkpoint).
struct FormatError : std::runtime_error {
    explicit FormatError(const std::string& msg) : std::runtime_error("format error: " + msg) {}
};

// Dataset-level problems (class too small for k folds, label range).
struct DataError : std::runtime_error {
    explicit DataError(const std::string& msg) : std::runtime_error("data error: " + msg) {}
};

// Metric undefined for the given confusion matrix (n = 0, p_e = 1).
struct MetricError : std::runtime_error {
    explicit MetricError(const std::string& msg) : std::runtime_error("metric error: " + msg) {}
};

// Numerical failure during training (NaN loss or gradient).
struct TrainingError : std::runtime_error {
    explicit TrainingError(const std::string& msg) : std::runtime_error("training error: " + msg) {}
};

}  // namespace faconf
