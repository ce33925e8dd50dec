#pragma once

#include <stdexcept>
#include <string>

namespace ynet {

// Error taxonomy. The CLI maps these onto exit codes:
// config/usage -> 1, data/io -> 2, numerical abort -> 3.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Tensor extent disagreement (matmul inner dims, head/pipeline widths, ...).
struct ShapeError : Error {
    using Error::Error;
};

// Invalid hyperparameters or malformed configuration.
struct ConfigError : Error {
    using Error::Error;
};

// Dataset problems: missing columns, bad labels, empty directories, missing inputs.
struct DataError : Error {
    using Error::Error;
};

// API misuse: non-scalar loss, missing head in a loss spec.
struct ContractError : Error {
    using Error::Error;
};

// Checkpoint / file-system failures, including corrupt or version-mismatched files.
struct IoError : Error {
    using Error::Error;
};

// NaN/Inf encountered during optimization.
struct NumericError : Error {
    using Error::Error;
};

}  // namespace ynet
