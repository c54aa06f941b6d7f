// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>

#include "macaw/alignment.hpp"
#include "macaw/autograd.hpp"
#include "macaw/config.hpp"
#include "macaw/encoders.hpp"
#include "macaw/tokenizer.hpp"

namespace macaw {

/// Everything the model conditions on: optional modality features plus the
/// (already framed) instruction token ids.
struct MultiModalInput {
  std::optional<ModalityFeatures> image;
  std::optional<ModalityFeatures> video;
  std::optional<ModalityFeatures> audio;
  TokenIds instruction;

  const std::optional<ModalityFeatures>& features(ModalityKind kind) const;
  std::optional<ModalityFeatures>& features(ModalityKind kind);
};

/// [BOS] text [SEP]: the prompt side of an example.
TokenIds frame_instruction(const Vocab& vocab, std::string_view text);
/// text [EOS]: the supervised side of an example.
TokenIds frame_response(const Vocab& vocab, std::string_view text);

/// Alignment module plus a pre-norm decoder-only transformer with learned
/// positions. The output projection is tied to the embedding matrix unless
/// DecoderConfig::tie_output is false. All parameters live in one
/// ParamStore; the model object itself only holds configuration.
class MacawModel {
 public:
  MacawModel(DecoderConfig decoder, ModalityConfig modality);

  const DecoderConfig& decoder() const noexcept { return decoder_; }
  const ModalityConfig& modality() const noexcept { return modality_; }
  TransformGeometry geometry(ModalityKind kind) const;

  ParamStore init_params(std::uint64_t seed) const;
  /// Throws ConfigError when `params` does not have this model's layout.
  void check_params(const ParamStore& params) const;

  /// Rows of E for the given ids (InvalidId when id >= V).
  ag::Var embed_tokens(ag::Tape& tape, const ParamStore& params, const TokenIds& ids) const;

  /// Transform + align for one modality.
  AlignedTokens encode_modality(ag::Tape& tape, const ParamStore& params, const ModalityFeatures& features) const;

  InstructionSequence build_sequence(ag::Tape& tape, const ParamStore& params, const MultiModalInput& input,
                                     const std::optional<TokenIds>& response) const;

  /// Logits S x V. Throws SequenceTooLong when S exceeds max_seq_len.
  ag::Var forward(ag::Tape& tape, const ParamStore& params, const InstructionSequence& seq) const;
  ag::Var forward_embedded(ag::Tape& tape, const ParamStore& params, ag::Var embedded) const;

  /// Greedy decoding until EOS or max_new tokens. The returned ids exclude
  /// the terminating EOS.
  TokenIds generate_greedy(const ParamStore& params, const MultiModalInput& prefix, std::size_t max_new) const;

 private:
  DecoderConfig decoder_;
  ModalityConfig modality_;
};

}  // namespace macaw
