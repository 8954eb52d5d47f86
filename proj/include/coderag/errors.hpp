#pragma once

#include <stdexcept>
#include <string>

namespace coderag {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Malformed input files (vocabularies, databases, reports).
struct ParseError : Error {
    using Error::Error;
};

// Structurally valid input that violates an invariant (duplicate tokens,
// dangling merge rules, mismatched record counts).
struct IntegrityError : Error {
    using Error::Error;
};

// Bad configuration (flag combinations, budget arithmetic).
struct ConfigError : Error {
    using Error::Error;
};

// Dataset / database validation failures at run time.
struct DataError : Error {
    using Error::Error;
};

// Model evaluation or transport failures.
struct ModelError : Error {
    using Error::Error;
};

}  // namespace coderag
