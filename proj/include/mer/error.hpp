#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace mer {

enum class ErrorKind {
  MissingFile,
  MalformedHeader,
  NonMonotonicTimestamps,
  DecoderNotFound,
  DecoderFailed,
  EmptyAudio,
  BackendFailure,
  SpanOutOfRange,
  ShapeMismatch,
  IdOutOfRange,
  EmptySequence,
  NonFiniteLoss,
  BadMagic,
  ManifestMismatch,
  TruncatedBlob,
  LengthMismatch,
  InvalidConfig,
  InvalidInput,
  Canceled,
};

std::string_view error_kind_name(ErrorKind kind);

// All pipeline failures are reported as mer::Error; the kind drives CLI exit
// codes and HTTP status mapping.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(error_kind_name(kind)) + ": " + message),
        kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

// DecoderFailed carries the decoder's exit status and captured stderr.
class DecoderFailedError : public Error {
 public:
  DecoderFailedError(int exit_code, std::string diagnostics)
      : Error(ErrorKind::DecoderFailed,
              "decoder exited with status " + std::to_string(exit_code) +
                  (diagnostics.empty() ? "" : ": " + diagnostics)),
        exit_code_(exit_code),
        diagnostics_(std::move(diagnostics)) {}

  int exit_code() const noexcept { return exit_code_; }
  const std::string& diagnostics() const noexcept { return diagnostics_; }

 private:
  int exit_code_;
  std::string diagnostics_;
};

}  // namespace mer
