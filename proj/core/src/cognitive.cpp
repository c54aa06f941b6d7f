// SPDX-License-Identifier: Apache-2.0
#include "macaw/cognitive.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "macaw/error.hpp"
#include "macaw/rng.hpp"

namespace macaw {

const std::optional<ModalityFeatures>& MultiModalInput::features(ModalityKind kind) const {
  switch (kind) {
    case ModalityKind::Image: return image;
    case ModalityKind::Video: return video;
    case ModalityKind::Audio: return audio;
  }
  throw Error(Errc::UnknownKind, "modality");
}

std::optional<ModalityFeatures>& MultiModalInput::features(ModalityKind kind) {
  return const_cast<std::optional<ModalityFeatures>&>(std::as_const(*this).features(kind));
}

TokenIds frame_instruction(const Vocab& vocab, std::string_view text) {
  TokenIds ids{Vocab::kBos};
  const auto body = vocab.encode(text);
  ids.insert(ids.end(), body.begin(), body.end());
  ids.push_back(Vocab::kSep);
  return ids;
}

TokenIds frame_response(const Vocab& vocab, std::string_view text) {
  TokenIds ids = vocab.encode(text);
  ids.push_back(Vocab::kEos);
  return ids;
}

namespace {

std::string layer_key(std::size_t layer, const char* suffix) {
  return "layer" + std::to_string(layer) + "." + suffix;
}

std::string align_key(ModalityKind kind, const char* suffix) {
  return "align." + std::string(modality_name(kind)) + "." + suffix;
}

Tensor normal_tensor(Rng& rng, Shape shape, double stddev) {
  Tensor t(std::move(shape));
  for (double& v : t.data()) v = rng.normal(0.0, stddev);
  return t;
}

}  // namespace

MacawModel::MacawModel(DecoderConfig decoder, ModalityConfig modality)
    : decoder_(std::move(decoder)), modality_(std::move(modality)) {
  RunConfig probe;
  probe.model = decoder_;
  probe.modality = modality_;
  probe.train.max_seq_len = decoder_.max_seq_len;
  probe.validate();
}

TransformGeometry MacawModel::geometry(ModalityKind kind) const {
  const auto& s = modality_.spec(kind);
  return transform_geometry(s.length, s.out_length);
}

ParamStore MacawModel::init_params(std::uint64_t seed) const {
  Rng rng(seed);
  const auto& c = decoder_;
  const std::size_t d = c.d_model;
  const double init_std = c.init_std;
  // Residual output projections are scaled down with depth (GPT-2 style).
  const double resid_std = init_std / std::sqrt(2.0 * static_cast<double>(c.layers));

  ParamStore p;
  p.add("embed", normal_tensor(rng, {c.vocab_size, d}, init_std));
  p.add("pos", normal_tensor(rng, {c.max_seq_len, d}, init_std));
  for (std::size_t l = 0; l < c.layers; ++l) {
    p.add(layer_key(l, "ln1.gain"), Tensor({d}, 1.0));
    p.add(layer_key(l, "ln1.bias"), Tensor({d}));
    p.add(layer_key(l, "attn.wq"), normal_tensor(rng, {d, d}, init_std));
    p.add(layer_key(l, "attn.bq"), Tensor({d}));
    p.add(layer_key(l, "attn.wk"), normal_tensor(rng, {d, d}, init_std));
    p.add(layer_key(l, "attn.wv"), normal_tensor(rng, {d, d}, init_std));
    p.add(layer_key(l, "attn.bv"), Tensor({d}));
    p.add(layer_key(l, "attn.wo"), normal_tensor(rng, {d, d}, resid_std));
    p.add(layer_key(l, "attn.bo"), Tensor({d}));
    p.add(layer_key(l, "ln2.gain"), Tensor({d}, 1.0));
    p.add(layer_key(l, "ln2.bias"), Tensor({d}));
    p.add(layer_key(l, "ffn.w1"), normal_tensor(rng, {d, c.ffn_width}, init_std));
    p.add(layer_key(l, "ffn.b1"), Tensor({c.ffn_width}));
    p.add(layer_key(l, "ffn.w2"), normal_tensor(rng, {c.ffn_width, d}, resid_std));
    p.add(layer_key(l, "ffn.b2"), Tensor({d}));
  }
  p.add("final_ln.gain", Tensor({d}, 1.0));
  p.add("final_ln.bias", Tensor({d}));
  if (!c.tie_output) p.add("lm_head", normal_tensor(rng, {c.vocab_size, d}, init_std));

  for (auto kind : kModalityOrder) {
    const auto& s = modality_.spec(kind);
    const auto geo = geometry(kind);
    // Keeps conv/linear outputs at roughly the scale of the [-1, 1] inputs.
    p.add(align_key(kind, "conv.w"),
          normal_tensor(rng, {geo.kernel, s.dim, s.dim}, 1.0 / std::sqrt(static_cast<double>(geo.kernel * s.dim))));
    p.add(align_key(kind, "conv.b"), Tensor({s.dim}));
    p.add(align_key(kind, "linear.w"), normal_tensor(rng, {s.dim, d}, 1.0 / std::sqrt(static_cast<double>(s.dim))));
    p.add(align_key(kind, "linear.b"), Tensor({d}));
  }
  if (c.alignment_heads > 1) {
    const double proj_std = 1.0 / std::sqrt(static_cast<double>(d));
    p.add("align.attn.wq", normal_tensor(rng, {d, d}, proj_std));
    p.add("align.attn.wk", normal_tensor(rng, {d, d}, proj_std));
    p.add("align.attn.wv", normal_tensor(rng, {d, d}, proj_std));
    p.add("align.attn.wo", normal_tensor(rng, {d, d}, proj_std));
  }
  return p;
}

void MacawModel::check_params(const ParamStore& params) const {
  const ParamStore expected = init_params(0);
  if (expected.size() != params.size()) {
    throw Error(Errc::ConfigError, "parameter count " + std::to_string(params.size()) + " does not match model (" +
                                       std::to_string(expected.size()) + ")");
  }
  for (std::size_t i = 0; i < expected.size(); ++i) {
    if (expected.name(i) != params.name(i) || expected[i].shape() != params[i].shape()) {
      throw Error(Errc::ConfigError, "parameter " + params.name(i) + " " + shape_string(params[i].shape()) +
                                         " does not match model layout (" + expected.name(i) + " " +
                                         shape_string(expected[i].shape()) + ")");
    }
  }
}

ag::Var MacawModel::embed_tokens(ag::Tape& tape, const ParamStore& params, const TokenIds& ids) const {
  for (auto id : ids) {
    if (id >= decoder_.vocab_size) {
      throw Error(Errc::InvalidId, "token id " + std::to_string(id) + " outside vocabulary of " +
                                       std::to_string(decoder_.vocab_size));
    }
  }
  return ag::gather_rows(tape.param(params, "embed"), ids);
}

AlignedTokens MacawModel::encode_modality(ag::Tape& tape, const ParamStore& params,
                                          const ModalityFeatures& features) const {
  check_feature_shape(features, modality_);
  const auto kind = features.kind;
  TransformVars w{tape.param(params, align_key(kind, "conv.w")), tape.param(params, align_key(kind, "conv.b")),
                  tape.param(params, align_key(kind, "linear.w")), tape.param(params, align_key(kind, "linear.b"))};
  auto h_prime = transform(tape.constant(features.values), w, modality_.spec(kind).out_length);
  ag::Var e = tape.param(params, "embed");
  if (decoder_.freeze_alignment_embeddings) e = ag::detach(e);
  if (decoder_.alignment_heads > 1) {
    AlignmentProjections proj{tape.param(params, "align.attn.wq"), tape.param(params, "align.attn.wk"),
                              tape.param(params, "align.attn.wv"), tape.param(params, "align.attn.wo"),
                              decoder_.alignment_heads};
    return align_multihead(kind, h_prime, e, proj);
  }
  return align(kind, h_prime, e);
}

InstructionSequence MacawModel::build_sequence(ag::Tape& tape, const ParamStore& params,
                                               const MultiModalInput& input,
                                               const std::optional<TokenIds>& response) const {
  std::optional<AlignedTokens> aligned[3];
  for (auto kind : kModalityOrder) {
    const auto& f = input.features(kind);
    if (!f) continue;
    if (f->kind != kind) {
      throw Error(Errc::ShapeMismatch, std::string(modality_name(f->kind)) + " features in the " +
                                           std::string(modality_name(kind)) + " slot");
    }
    aligned[static_cast<std::size_t>(kind)] = encode_modality(tape, params, *f);
  }
  return assemble_prefix(aligned[0], aligned[1], aligned[2], input.instruction, response,
                         [&](const TokenIds& ids) { return embed_tokens(tape, params, ids); });
}

ag::Var MacawModel::forward(ag::Tape& tape, const ParamStore& params, const InstructionSequence& seq) const {
  return forward_embedded(tape, params, seq.embedded);
}

ag::Var MacawModel::forward_embedded(ag::Tape& tape, const ParamStore& params, ag::Var embedded) const {
  const auto& c = decoder_;
  const std::size_t s = embedded.rows();
  if (s > c.max_seq_len) {
    throw Error(Errc::SequenceTooLong, "sequence of " + std::to_string(s) + " positions exceeds " +
                                           std::to_string(c.max_seq_len));
  }
  if (embedded.cols() != c.d_model) {
    throw Error(Errc::ShapeMismatch, "input width " + std::to_string(embedded.cols()) + " vs d_model " +
                                         std::to_string(c.d_model));
  }
  auto P = [&](const std::string& name) { return tape.param(params, name); };

  ag::Var h = ag::add(embedded, ag::slice_rows(P("pos"), 0, s));
  const std::size_t dh = c.d_model / c.heads;
  const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));
  for (std::size_t l = 0; l < c.layers; ++l) {
    auto a = ag::layer_norm(h, P(layer_key(l, "ln1.gain")), P(layer_key(l, "ln1.bias")));
    auto q = ag::add_bias(ag::matmul(a, P(layer_key(l, "attn.wq"))), P(layer_key(l, "attn.bq")));
    // No key bias: it shifts every score in a row equally and cancels in softmax.
    auto k = ag::matmul(a, P(layer_key(l, "attn.wk")));
    auto v = ag::add_bias(ag::matmul(a, P(layer_key(l, "attn.wv"))), P(layer_key(l, "attn.bv")));
    std::vector<ag::Var> heads;
    heads.reserve(c.heads);
    for (std::size_t hd = 0; hd < c.heads; ++hd) {
      auto qh = ag::slice_cols(q, hd * dh, dh);
      auto kh = ag::slice_cols(k, hd * dh, dh);
      auto vh = ag::slice_cols(v, hd * dh, dh);
      auto w = ag::causal_softmax_rows(ag::scale(ag::matmul_nt(qh, kh), inv_sqrt_dh));
      heads.push_back(ag::matmul(w, vh));
    }
    auto attn = c.heads == 1 ? heads.front() : ag::concat_cols(heads);
    h = ag::add(h, ag::add_bias(ag::matmul(attn, P(layer_key(l, "attn.wo"))), P(layer_key(l, "attn.bo"))));

    auto f = ag::layer_norm(h, P(layer_key(l, "ln2.gain")), P(layer_key(l, "ln2.bias")));
    f = ag::gelu(ag::add_bias(ag::matmul(f, P(layer_key(l, "ffn.w1"))), P(layer_key(l, "ffn.b1"))));
    h = ag::add(h, ag::add_bias(ag::matmul(f, P(layer_key(l, "ffn.w2"))), P(layer_key(l, "ffn.b2"))));
  }
  auto out = ag::layer_norm(h, P("final_ln.gain"), P("final_ln.bias"));
  return ag::matmul_nt(out, c.tie_output ? P("embed") : P("lm_head"));
}

TokenIds MacawModel::generate_greedy(const ParamStore& params, const MultiModalInput& prefix,
                                     std::size_t max_new) const {
  std::size_t prefix_len = prefix.instruction.size();
  for (auto kind : kModalityOrder)
    if (prefix.features(kind)) prefix_len += modality_.spec(kind).out_length;
  if (prefix_len + max_new > decoder_.max_seq_len) {
    throw Error(Errc::SequenceTooLong, "prefix of " + std::to_string(prefix_len) + " plus " +
                                           std::to_string(max_new) + " new tokens exceeds " +
                                           std::to_string(decoder_.max_seq_len));
  }
  TokenIds generated;
  for (std::size_t step = 0; step < max_new; ++step) {
    ag::Tape tape;
    auto seq = build_sequence(tape, params, prefix,
                              generated.empty() ? std::nullopt : std::optional<TokenIds>(generated));
    const Tensor& logits = forward(tape, params, seq).value();
    auto last = logits.row(logits.rows() - 1);
    const auto best = static_cast<TokenId>(std::max_element(last.begin(), last.end()) - last.begin());
    if (best == Vocab::kEos) break;
    generated.push_back(best);
  }
  return generated;
}

}  // namespace macaw
