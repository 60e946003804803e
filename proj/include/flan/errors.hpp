#pragma once

// Error taxonomy shared across the library. The CLI maps these to stable
// exit codes: ConfigError -> 2, numeric failures (std::runtime_error,
// including TrainingDiverged) -> 3, IoError -> 4.

#include <stdexcept>
#include <string>

namespace flan {

// Invalid or inconsistent run configuration / usage; message carries the
// offending field path where applicable.
struct ConfigError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Filesystem / serialization failures (missing file, bad magic, truncation).
struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Training produced a non-finite loss; message names the epoch and batch.
struct TrainingDiverged : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace flan
