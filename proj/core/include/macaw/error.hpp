// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace macaw {

enum class Errc {
  ShapeMismatch,
  KernelTooLarge,
  NotAttached,
  InvalidId,
  InvalidUtf8,
  UnknownKind,
  BadMagic,
  TruncatedFile,
  BadLength,
  MissingText,
  SequenceTooLong,
  NoResponseSpan,
  EmptyDataset,
  VersionMismatch,
  CorruptPayload,
  EmptyCaption,
  NoPairsFound,
  ClientError,
  SourceTooSmall,
  UnknownCommand,
  ConfigError,
  IoError,
  SchemaError,
};

std::string_view errc_name(Errc code) noexcept;

/// Every failure the library reports carries one of the codes above so that
/// callers (and the CLI exit-code mapping) can branch on it.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(errc_name(code)) + ": " + what),
        code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

}  // namespace macaw
