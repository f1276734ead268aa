#pragma once

#include <stdexcept>
#include <string>

namespace cfx {

// Base for all library errors. The CLI maps these to exit code 2.
struct CfxError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// File could not be opened / written.
struct IoError : CfxError {
    using CfxError::CfxError;
};

// Malformed input; message carries the offending line number where known.
struct ParseError : CfxError {
    using CfxError::CfxError;
};

// Invariant or contract violation in otherwise well-formed data.
struct DataError : CfxError {
    using CfxError::CfxError;
};

// flip(): the inventory holds no modifier list other than the phrase's own.
struct NoAlternativeError : CfxError {
    using CfxError::CfxError;
};

// flip(): head noun absent from the inventory.
struct HeadUnknownError : CfxError {
    using CfxError::CfxError;
};

// flip(): phrase has no modifiers to flip.
struct UnmodifiedError : CfxError {
    using CfxError::CfxError;
};

// Training was asked to run on an empty pair set.
struct EmptyPairsError : CfxError {
    using CfxError::CfxError;
};

// Loss became NaN/inf during training; usually means the learning rate is too high.
struct NonFiniteLossError : CfxError {
    using CfxError::CfxError;
};

}  // namespace cfx
