#pragma once

#include <stdexcept>
#include <string>

namespace pdabench {

// Bad shapes, invalid hyper-parameters, impossible requests.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// A numeric kernel produced NaN/Inf.
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Malformed on-disk data (embeddings, checkpoints, records).
struct FormatError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// API misuse, e.g. backward() on a non-scalar.
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

} // namespace pdabench
