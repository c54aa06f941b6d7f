// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>

namespace macaw {

enum class ModalityKind : std::uint8_t { Image = 0, Video = 1, Audio = 2 };

inline constexpr std::array<ModalityKind, 3> kModalityOrder{ModalityKind::Image, ModalityKind::Video,
                                                           ModalityKind::Audio};

std::string_view modality_name(ModalityKind kind) noexcept;
/// Throws UnknownKind.
ModalityKind parse_modality(std::string_view name);

/// Shape of one modality's feature stream and of its compressed prefix.
struct ModalitySpec {
  /// Encoder output length L (for video: the frame budget F).
  std::size_t length = 16;
  /// Encoder feature width d_h.
  std::size_t dim = 32;
  /// Compressed prefix length L'.
  std::size_t out_length = 4;
};

struct ModalityConfig {
  ModalitySpec image{16, 32, 4};
  ModalitySpec video{8, 32, 4};
  ModalitySpec audio{24, 16, 4};
  /// Frame count assumed for videos whose length is not known.
  std::size_t video_source_frames = 32;

  const ModalitySpec& spec(ModalityKind kind) const;
  ModalitySpec& spec(ModalityKind kind);
};

struct DecoderConfig {
  std::size_t d_model = 64;
  std::size_t layers = 2;
  std::size_t heads = 4;
  std::size_t ffn_width = 256;
  std::size_t vocab_size = 260;
  std::size_t max_seq_len = 512;
  /// 1 = plain scaled dot-product alignment against E. >1 adds learned
  /// query/key/value/output projections split across heads.
  std::size_t alignment_heads = 1;
  /// Alignment sees E as a constant; E still trains through the decoder.
  bool freeze_alignment_embeddings = false;
  bool tie_output = true;
  double init_std = 0.02;
};

enum class LossReduction { Mean, Sum };

struct TrainConfig {
  double lr_peak = 3e-5;
  double warmup_ratio = 0.03;
  std::size_t epochs = 5;
  std::size_t micro_batch = 4;
  std::size_t grad_accum = 3;
  std::size_t max_seq_len = 512;
  std::uint64_t seed = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
  LossReduction loss_reduction = LossReduction::Mean;
  /// 0 disables clipping.
  double max_grad_norm = 0.0;
  /// Write epoch-N.ckpt every this many epochs; 0 keeps only final.ckpt.
  std::size_t save_every = 1;
};

struct DataConfig {
  std::string train;
  std::string eval;
  std::string captions;
  /// 0 disables per-source mixing.
  std::size_t mix_per_source = 0;
  std::uint64_t seed = 0;
  std::size_t concurrency = 1;
  std::size_t max_retries = 3;
  std::size_t backoff_ms = 0;
  std::size_t rate_limit_ms = 0;
  std::size_t max_tokens = 1024;
  double temperature = 0.7;
};

struct RunConfig {
  DecoderConfig model;
  TrainConfig train;
  DataConfig data;
  ModalityConfig modality;

  /// Throws ConfigError naming the offending key path.
  void validate() const;
};

/// Parses a JSON document. Missing keys keep their defaults; unknown keys,
/// wrong types and invariant violations throw ConfigError with the key path.
RunConfig parse_run_config(std::string_view json);
RunConfig load_run_config(const std::string& path);
std::string to_json(const RunConfig& cfg);

}  // namespace macaw
