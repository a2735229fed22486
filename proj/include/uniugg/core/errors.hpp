#pragma once

#include <stdexcept>
#include <string>

namespace uniugg {

// Error taxonomy shared by all modules. Callers that can recover catch the
// specific type; the CLI catches the base and reports.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Bad arguments or malformed inputs (shape mismatch, invalid ranges, ...).
struct ValidationError : Error {
    using Error::Error;
};

// Non-finite values encountered where finite math was required.
struct NumericError : Error {
    using Error::Error;
};

// Missing prerequisites, inconsistent run configuration.
struct ConfigError : Error {
    using Error::Error;
};

// Procedural generation could not satisfy its constraints.
struct GenerationError : Error {
    using Error::Error;
};

// Filesystem / serialization failures.
struct IoError : Error {
    using Error::Error;
};

}  // namespace uniugg
