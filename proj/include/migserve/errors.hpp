#pragma once

#include <stdexcept>
#include <string>

namespace migserve {

// Error taxonomy shared across the library. Catch sites typically only
// distinguish "bad input" (ParamError/FormatError/ValidationError) from
// "bug or impossible request" (LookupError/InfeasibleError).
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Invalid parameter values (nonpositive rates, empty inputs, ...).
struct ParamError : Error {
    using Error::Error;
};

// Malformed external data: CSV/JSONL/config syntax, missing grid cells,
// duplicate rows.
struct FormatError : Error {
    using Error::Error;
};

// Structurally well-formed data that violates a documented invariant
// (utilization out of range, decreasing knees, mismatched seeds, ...).
struct ValidationError : Error {
    using Error::Error;
};

// Query for a (partition, batch) cell or id that does not exist.
struct LookupError : Error {
    using Error::Error;
};

// No feasible packing / placement exists.
struct InfeasibleError : Error {
    using Error::Error;
};

}  // namespace migserve
