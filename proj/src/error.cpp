// Copyright 2026 The concept-align Authors
// SPDX-License-Identifier: Apache-2.0

#include "concept_align/error.hpp"

namespace concept_align {

std::string_view error_code_name(ErrorCode code) noexcept {
    switch (code) {
        case ErrorCode::ZeroNorm: return "ZeroNorm";
        case ErrorCode::DimMismatch: return "DimMismatch";
        case ErrorCode::EmptyInput: return "EmptyInput";
        case ErrorCode::NonFinite: return "NonFinite";
        case ErrorCode::IoError: return "IoError";
        case ErrorCode::BadMagic: return "BadMagic";
        case ErrorCode::UnsupportedVersion: return "UnsupportedVersion";
        case ErrorCode::Truncated: return "Truncated";
        case ErrorCode::TrailingBytes: return "TrailingBytes";
        case ErrorCode::UnknownId: return "UnknownId";
        case ErrorCode::SpanOutOfRange: return "SpanOutOfRange";
        case ErrorCode::MalformedLine: return "MalformedLine";
        case ErrorCode::MalformedRow: return "MalformedRow";
        case ErrorCode::ConflictingSynonym: return "ConflictingSynonym";
        case ErrorCode::SpecInvalid: return "SpecInvalid";
        case ErrorCode::Divergence: return "Divergence";
        case ErrorCode::GradientMismatch: return "GradientMismatch";
        case ErrorCode::KTooLarge: return "KTooLarge";
        case ErrorCode::NoConcepts: return "NoConcepts";
        case ErrorCode::SingleClass: return "SingleClass";
        case ErrorCode::UnknownClass: return "UnknownClass";
        case ErrorCode::EmptySet: return "EmptySet";
        case ErrorCode::VocabMismatch: return "VocabMismatch";
        case ErrorCode::EmptyStore: return "EmptyStore";
        case ErrorCode::LengthMismatch: return "LengthMismatch";
        case ErrorCode::DegenerateData: return "DegenerateData";
        case ErrorCode::ZeroVariance: return "ZeroVariance";
        case ErrorCode::TooFewItems: return "TooFewItems";
        case ErrorCode::InvalidArgument: return "InvalidArgument";
    }
    return "Unknown";
}

bool is_numeric_failure(ErrorCode code) noexcept {
    switch (code) {
        case ErrorCode::NonFinite:
        case ErrorCode::Divergence:
        case ErrorCode::GradientMismatch:
            return true;
        default:
            return false;
    }
}

}  // namespace concept_align
