// SPDX-License-Identifier: Apache-2.0
#include "macaw/alignment.hpp"

#include <cmath>

#include "macaw/error.hpp"

namespace macaw {

TransformGeometry transform_geometry(std::size_t in_length, std::size_t out_length) {
  if (out_length == 0) throw Error(Errc::BadLength, "target length must be positive");
  if (in_length < out_length) {
    throw Error(Errc::BadLength, "feature length " + std::to_string(in_length) + " is shorter than target " +
                                     std::to_string(out_length));
  }
  const std::size_t stride = in_length / out_length;
  const std::size_t kernel = in_length - (out_length - 1) * stride;
  return TransformGeometry{in_length, out_length, stride, kernel};
}

ag::Var attention(ag::Var q, ag::Var k, ag::Var v) {
  if (q.value().rank() != 2 || k.value().rank() != 2 || v.value().rank() != 2 || q.cols() != k.cols() ||
      k.rows() != v.rows()) {
    throw Error(Errc::ShapeMismatch, "attention Q" + shape_string(q.shape()) + " K" + shape_string(k.shape()) +
                                         " V" + shape_string(v.shape()));
  }
  const double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(q.cols()));
  auto weights = ag::softmax_rows(ag::scale(ag::matmul_nt(q, k), inv_sqrt_dk));
  return ag::matmul(weights, v);
}

Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v) {
  ag::Tape tape;
  return attention(tape.constant(q), tape.constant(k), tape.constant(v)).value();
}

ag::Var transform(ag::Var features, const TransformVars& w, std::size_t out_length) {
  const auto geo = transform_geometry(features.rows(), out_length);
  const Tensor& cw = w.conv_w.value();
  if (cw.rank() != 3 || cw.dim(0) != geo.kernel) {
    throw Error(Errc::ShapeMismatch, "conv kernel " + shape_string(cw.shape()) + " but input length " +
                                         std::to_string(geo.in_length) + " needs kernel " +
                                         std::to_string(geo.kernel));
  }
  auto conv = ag::conv1d(features, w.conv_w, w.conv_b, geo.stride);
  return ag::add_bias(ag::matmul(conv, w.linear_w), w.linear_b);
}

Tensor transform(const Tensor& features, const TransformWeights& w, std::size_t out_length) {
  ag::Tape tape;
  TransformVars vars{tape.constant(w.conv_w), tape.constant(w.conv_b), tape.constant(w.linear_w),
                     tape.constant(w.linear_b)};
  return transform(tape.constant(features), vars, out_length).value();
}

AlignedTokens align(ModalityKind kind, ag::Var transformed, ag::Var embeddings) {
  if (transformed.cols() != embeddings.cols()) {
    throw Error(Errc::ShapeMismatch, "align: h'" + shape_string(transformed.shape()) + " vs E" +
                                         shape_string(embeddings.shape()));
  }
  return AlignedTokens{kind, attention(transformed, embeddings, embeddings)};
}

Tensor align(const Tensor& transformed, const Tensor& embeddings) {
  ag::Tape tape;
  return align(ModalityKind::Image, tape.constant(transformed), tape.constant(embeddings)).tokens.value();
}

AlignedTokens align_multihead(ModalityKind kind, ag::Var transformed, ag::Var embeddings,
                              const AlignmentProjections& proj) {
  const std::size_t d = embeddings.cols();
  if (transformed.cols() != d || proj.heads == 0 || d % proj.heads != 0) {
    throw Error(Errc::ShapeMismatch, "align_multihead: width " + std::to_string(d) + " with " +
                                         std::to_string(proj.heads) + " heads");
  }
  auto q = ag::matmul(transformed, proj.wq);
  auto k = ag::matmul(embeddings, proj.wk);
  auto v = ag::matmul(embeddings, proj.wv);
  const std::size_t dh = d / proj.heads;
  std::vector<ag::Var> heads;
  heads.reserve(proj.heads);
  for (std::size_t h = 0; h < proj.heads; ++h) {
    heads.push_back(attention(ag::slice_cols(q, h * dh, dh), ag::slice_cols(k, h * dh, dh),
                              ag::slice_cols(v, h * dh, dh)));
  }
  return AlignedTokens{kind, ag::matmul(ag::concat_cols(heads), proj.wo)};
}

const Span* InstructionSequence::find(SpanKind kind) const noexcept {
  for (const auto& s : spans)
    if (s.kind == kind) return &s;
  return nullptr;
}

InstructionSequence assemble_prefix(const std::optional<AlignedTokens>& image,
                                    const std::optional<AlignedTokens>& video,
                                    const std::optional<AlignedTokens>& audio, const TokenIds& instruction,
                                    const std::optional<TokenIds>& response, const EmbedFn& embed) {
  if (instruction.empty()) throw Error(Errc::MissingText, "the text instruction is required");

  InstructionSequence seq;
  std::vector<ag::Var> parts;
  std::size_t pos = 0;
  const std::pair<const std::optional<AlignedTokens>*, SpanKind> modalities[] = {
      {&image, SpanKind::Image}, {&video, SpanKind::Video}, {&audio, SpanKind::Audio}};
  for (const auto& [tokens, span] : modalities) {
    if (!tokens->has_value()) continue;
    const ag::Var& t = (*tokens)->tokens;
    parts.push_back(t);
    seq.spans.push_back(Span{span, pos, pos + t.rows()});
    seq.token_ids.insert(seq.token_ids.end(), t.rows(), Vocab::kPad);
    pos += t.rows();
  }

  TokenIds text = instruction;
  seq.spans.push_back(Span{SpanKind::Instruction, pos, pos + instruction.size()});
  pos += instruction.size();
  if (response && !response->empty()) {
    text.insert(text.end(), response->begin(), response->end());
    seq.spans.push_back(Span{SpanKind::Response, pos, pos + response->size()});
    pos += response->size();
  }
  seq.token_ids.insert(seq.token_ids.end(), text.begin(), text.end());

  ag::Var text_embedded = embed(text);
  for (const auto& p : parts) {
    if (p.cols() != text_embedded.cols()) {
      throw Error(Errc::ShapeMismatch, "soft tokens of width " + std::to_string(p.cols()) +
                                           " vs text embeddings of width " + std::to_string(text_embedded.cols()));
    }
  }
  parts.push_back(text_embedded);
  seq.embedded = parts.size() == 1 ? parts.front() : ag::concat_rows(parts);
  return seq;
}

}  // namespace macaw
