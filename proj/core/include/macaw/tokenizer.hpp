// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace macaw {

using TokenId = std::size_t;
using TokenIds = std::vector<TokenId>;

/// Byte-level vocabulary: four special ids followed by one id per byte
/// value. Ids at or above 260 are reserved for a larger learned vocabulary
/// and never produced by encode().
class Vocab {
 public:
  static constexpr TokenId kPad = 0;
  static constexpr TokenId kBos = 1;
  static constexpr TokenId kEos = 2;
  static constexpr TokenId kSep = 3;
  static constexpr TokenId kByteOffset = 4;
  static constexpr std::size_t kByteVocab = kByteOffset + 256;

  explicit Vocab(std::size_t size = kByteVocab);

  std::size_t size() const noexcept { return size_; }
  static bool is_special(TokenId id) noexcept { return id < kByteOffset; }

  TokenIds encode(std::string_view text) const;
  /// Drops special ids; throws InvalidId / InvalidUtf8.
  std::string decode(const TokenIds& ids) const;

  std::string to_json() const;
  static Vocab from_json(std::string_view json);

  bool operator==(const Vocab&) const = default;

 private:
  std::size_t size_;
};

bool is_valid_utf8(std::string_view bytes) noexcept;

}  // namespace macaw
