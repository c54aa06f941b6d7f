// SPDX-License-Identifier: Apache-2.0
#include "macaw/tokenizer.hpp"

#include <nlohmann/json.hpp>

#include "macaw/error.hpp"

namespace macaw {

Vocab::Vocab(std::size_t size) : size_(size) {
  if (size_ < kByteVocab) {
    throw Error(Errc::ConfigError, "vocabulary size " + std::to_string(size_) + " is below the byte vocabulary (" +
                                       std::to_string(kByteVocab) + ")");
  }
}

TokenIds Vocab::encode(std::string_view text) const {
  TokenIds ids;
  ids.reserve(text.size());
  for (unsigned char c : text) ids.push_back(kByteOffset + c);
  return ids;
}

std::string Vocab::decode(const TokenIds& ids) const {
  std::string out;
  out.reserve(ids.size());
  for (TokenId id : ids) {
    if (id >= size_) {
      throw Error(Errc::InvalidId, "id " + std::to_string(id) + " outside vocabulary of " + std::to_string(size_));
    }
    if (is_special(id)) continue;
    if (id >= kByteVocab) throw Error(Errc::InvalidId, "id " + std::to_string(id) + " has no byte mapping");
    out.push_back(static_cast<char>(static_cast<unsigned char>(id - kByteOffset)));
  }
  if (!is_valid_utf8(out)) throw Error(Errc::InvalidUtf8, "decoded bytes are not valid UTF-8");
  return out;
}

std::string Vocab::to_json() const {
  nlohmann::ordered_json j;
  j["kind"] = "byte";
  j["size"] = size_;
  j["specials"] = {"PAD", "BOS", "EOS", "SEP"};
  j["byte_offset"] = kByteOffset;
  return j.dump();
}

Vocab Vocab::from_json(std::string_view json) {
  try {
    const auto j = nlohmann::json::parse(json);
    if (j.at("kind").get<std::string>() != "byte" || j.at("byte_offset").get<std::size_t>() != kByteOffset) {
      throw Error(Errc::CorruptPayload, "unsupported vocabulary layout");
    }
    return Vocab(j.at("size").get<std::size_t>());
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::CorruptPayload, std::string("vocabulary: ") + e.what());
  }
}

bool is_valid_utf8(std::string_view s) noexcept {
  std::size_t i = 0;
  while (i < s.size()) {
    const auto c = static_cast<unsigned char>(s[i]);
    std::size_t len;
    std::uint32_t cp;
    if (c < 0x80) {
      ++i;
      continue;
    } else if ((c & 0xE0) == 0xC0) {
      len = 2;
      cp = c & 0x1F;
    } else if ((c & 0xF0) == 0xE0) {
      len = 3;
      cp = c & 0x0F;
    } else if ((c & 0xF8) == 0xF0) {
      len = 4;
      cp = c & 0x07;
    } else {
      return false;
    }
    if (i + len > s.size()) return false;
    for (std::size_t k = 1; k < len; ++k) {
      const auto cc = static_cast<unsigned char>(s[i + k]);
      if ((cc & 0xC0) != 0x80) return false;
      cp = (cp << 6) | (cc & 0x3F);
    }
    // Overlong forms, surrogates, and out-of-range code points.
    if ((len == 2 && cp < 0x80) || (len == 3 && cp < 0x800) || (len == 4 && cp < 0x10000)) return false;
    if (cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF)) return false;
    i += len;
  }
  return true;
}

}  // namespace macaw
