#include "mer/error.hpp"

namespace mer {

std::string_view error_kind_name(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::MissingFile: return "MissingFile";
    case ErrorKind::MalformedHeader: return "MalformedHeader";
    case ErrorKind::NonMonotonicTimestamps: return "NonMonotonicTimestamps";
    case ErrorKind::DecoderNotFound: return "DecoderNotFound";
    case ErrorKind::DecoderFailed: return "DecoderFailed";
    case ErrorKind::EmptyAudio: return "EmptyAudio";
    case ErrorKind::BackendFailure: return "BackendFailure";
    case ErrorKind::SpanOutOfRange: return "SpanOutOfRange";
    case ErrorKind::ShapeMismatch: return "ShapeMismatch";
    case ErrorKind::IdOutOfRange: return "IdOutOfRange";
    case ErrorKind::EmptySequence: return "EmptySequence";
    case ErrorKind::NonFiniteLoss: return "NonFiniteLoss";
    case ErrorKind::BadMagic: return "BadMagic";
    case ErrorKind::ManifestMismatch: return "ManifestMismatch";
    case ErrorKind::TruncatedBlob: return "TruncatedBlob";
    case ErrorKind::LengthMismatch: return "LengthMismatch";
    case ErrorKind::InvalidConfig: return "InvalidConfig";
    case ErrorKind::InvalidInput: return "InvalidInput";
    case ErrorKind::Canceled: return "Canceled";
  }
  return "Unknown";
}

}  // namespace mer
