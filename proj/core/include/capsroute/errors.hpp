#pragma once

#include <stdexcept>
#include <string>

namespace capsroute {

// Error taxonomy mirrored by the CLI exit codes: config=1, data=2, numeric=3.

/// Bad or inconsistent run configuration.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Unreadable, malformed or mismatched input data (datasets, vocab, checkpoints).
struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Non-finite values or numeric domain violations inside the math engine.
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Tensor shape disagreement between operands.
struct ShapeError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

/// API misuse (caller broke a documented precondition).
struct ContractError : std::logic_error {
    using std::logic_error::logic_error;
};

} // namespace capsroute
