// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <optional>
#include <vector>

#include "macaw/autograd.hpp"
#include "macaw/config.hpp"
#include "macaw/tokenizer.hpp"

namespace macaw {

/// Conv1D geometry that maps an input of `in_length` rows to exactly
/// `out_length` rows: stride = floor(L / L'), kernel = L - (L' - 1) * stride.
struct TransformGeometry {
  std::size_t in_length = 0;
  std::size_t out_length = 0;
  std::size_t stride = 0;
  std::size_t kernel = 0;
};

/// Throws BadLength when in_length < out_length or out_length == 0.
TransformGeometry transform_geometry(std::size_t in_length, std::size_t out_length);

/// Per-modality Conv1D (k x d_h x d_h, bias d_h) followed by Linear
/// (d_h x d_e, bias d_e).
struct TransformWeights {
  Tensor conv_w;
  Tensor conv_b;
  Tensor linear_w;
  Tensor linear_b;
};

struct TransformVars {
  ag::Var conv_w;
  ag::Var conv_b;
  ag::Var linear_w;
  ag::Var linear_b;
};

/// softmax(Q K^T / sqrt(d_k)) V
ag::Var attention(ag::Var q, ag::Var k, ag::Var v);
Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v);

/// Linear(Conv1D(features)); output is out_length x d_e.
ag::Var transform(ag::Var features, const TransformVars& w, std::size_t out_length);
Tensor transform(const Tensor& features, const TransformWeights& w, std::size_t out_length);

/// Soft tokens: one row per compressed feature, each a convex combination
/// of the rows of the embedding matrix.
struct AlignedTokens {
  ModalityKind kind = ModalityKind::Image;
  ag::Var tokens;
};

/// attention(h', E, E): single head, no projections, scale sqrt(d_e).
AlignedTokens align(ModalityKind kind, ag::Var transformed, ag::Var embeddings);
Tensor align(const Tensor& transformed, const Tensor& embeddings);

/// Multi-head variant with learned projections (alignment_heads > 1).
struct AlignmentProjections {
  ag::Var wq, wk, wv, wo;
  std::size_t heads = 1;
};
AlignedTokens align_multihead(ModalityKind kind, ag::Var transformed, ag::Var embeddings,
                              const AlignmentProjections& proj);

enum class SpanKind { Image, Video, Audio, Instruction, Response };

struct Span {
  SpanKind kind;
  std::size_t begin;
  std::size_t end;

  std::size_t size() const noexcept { return end - begin; }
  bool operator==(const Span&) const = default;
};

/// Assembled model input: [image : video : audio : instruction : response].
struct InstructionSequence {
  ag::Var embedded;
  std::vector<Span> spans;
  /// One id per position; soft-token positions hold Vocab::kPad.
  TokenIds token_ids;

  std::size_t length() const noexcept { return token_ids.size(); }
  const Span* find(SpanKind kind) const noexcept;
  bool has_response() const noexcept { return find(SpanKind::Response) != nullptr; }
};

using EmbedFn = std::function<ag::Var(const TokenIds&)>;

/// Throws MissingText when `instruction` is empty and ShapeMismatch when a
/// modality's width differs from the text embedding width.
InstructionSequence assemble_prefix(const std::optional<AlignedTokens>& image,
                                    const std::optional<AlignedTokens>& video,
                                    const std::optional<AlignedTokens>& audio, const TokenIds& instruction,
                                    const std::optional<TokenIds>& response, const EmbedFn& embed);

}  // namespace macaw
