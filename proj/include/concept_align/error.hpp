// Copyright 2026 The concept-align Authors
// SPDX-License-Identifier: Apache-2.0
//
// Error type shared by every module. Each failure carries a stable code so the
// CLI can map it to an exit status and a machine-parsable message.

#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace concept_align {

enum class ErrorCode {
    // numerics
    ZeroNorm,
    DimMismatch,
    EmptyInput,
    NonFinite,
    // storage / data
    IoError,
    BadMagic,
    UnsupportedVersion,
    Truncated,
    TrailingBytes,
    UnknownId,
    SpanOutOfRange,
    MalformedLine,
    MalformedRow,
    ConflictingSynonym,
    // training / inference / explainability
    SpecInvalid,
    Divergence,
    GradientMismatch,
    KTooLarge,
    NoConcepts,
    SingleClass,
    UnknownClass,
    EmptySet,
    VocabMismatch,
    EmptyStore,
    // metrics
    LengthMismatch,
    DegenerateData,
    ZeroVariance,
    TooFewItems,
    InvalidArgument,
};

std::string_view error_code_name(ErrorCode code) noexcept;

/// True for failures that the CLI reports as numeric (exit status 4)
/// rather than data errors (exit status 3).
bool is_numeric_failure(ErrorCode code) noexcept;

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(message), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

}  // namespace concept_align
