// SPDX-License-Identifier: Apache-2.0
#include "macaw/error.hpp"

namespace macaw {

std::string_view errc_name(Errc code) noexcept {
  switch (code) {
    case Errc::ShapeMismatch: return "ShapeMismatch";
    case Errc::KernelTooLarge: return "KernelTooLarge";
    case Errc::NotAttached: return "NotAttached";
    case Errc::InvalidId: return "InvalidId";
    case Errc::InvalidUtf8: return "InvalidUtf8";
    case Errc::UnknownKind: return "UnknownKind";
    case Errc::BadMagic: return "BadMagic";
    case Errc::TruncatedFile: return "TruncatedFile";
    case Errc::BadLength: return "BadLength";
    case Errc::MissingText: return "MissingText";
    case Errc::SequenceTooLong: return "SequenceTooLong";
    case Errc::NoResponseSpan: return "NoResponseSpan";
    case Errc::EmptyDataset: return "EmptyDataset";
    case Errc::VersionMismatch: return "VersionMismatch";
    case Errc::CorruptPayload: return "CorruptPayload";
    case Errc::EmptyCaption: return "EmptyCaption";
    case Errc::NoPairsFound: return "NoPairsFound";
    case Errc::ClientError: return "ClientError";
    case Errc::SourceTooSmall: return "SourceTooSmall";
    case Errc::UnknownCommand: return "UnknownCommand";
    case Errc::ConfigError: return "ConfigError";
    case Errc::IoError: return "IoError";
    case Errc::SchemaError: return "SchemaError";
  }
  return "Unknown";
}

}  // namespace macaw
