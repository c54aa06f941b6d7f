// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "macaw/config.hpp"
#include "macaw/tensor.hpp"

namespace macaw {

/// Reference to one raw input. The fingerprint is what the stub encoders
/// key on, so two refs with equal fingerprints encode identically.
struct MediaRef {
  ModalityKind kind = ModalityKind::Image;
  std::string path;
  std::uint64_t fingerprint = 0;
  /// Number of frames in the source video; 0 when unknown.
  std::size_t frame_count = 0;

  static MediaRef from_bytes(ModalityKind kind, std::string_view bytes, std::string path = {});
  /// Fingerprints the file content when readable, otherwise the path string.
  static MediaRef from_path(ModalityKind kind, std::string path);
};

/// Encoder output: L x d_h real matrix for one modality.
struct ModalityFeatures {
  ModalityKind kind = ModalityKind::Image;
  Tensor values;

  std::size_t length() const { return values.rows(); }
  std::size_t dim() const { return values.cols(); }
  bool operator==(const ModalityFeatures&) const = default;
};

/// Deterministic stand-in for the pretrained encoders: entries are uniform
/// in [-1, 1] from a generator seeded by the media fingerprint.
ModalityFeatures stub_encode(const MediaRef& media, const ModalityConfig& cfg);

/// Pooled 1 x d_h feature row for a single video frame.
Tensor stub_encode_frame(std::uint64_t fingerprint, std::size_t frame_index, std::size_t dim);

/// indices[j] = floor(j * N / F) for j < F.
std::vector<std::size_t> sample_frames(std::size_t frame_count, std::size_t target);

/// F x d_h: one pooled row per sampled frame.
ModalityFeatures encode_video(const MediaRef& media, const ModalityConfig& cfg);

/// Dispatches to encode_video / stub_encode, or reads a feature file when the
/// path ends in ".mcwf".
ModalityFeatures encode_media(const MediaRef& media, const ModalityConfig& cfg);

// Feature file: "MCWF", u32 version, u8 kind, u32 rows, u32 cols, then
// rows*cols little-endian float32 values in row-major order.
inline constexpr std::uint32_t kFeatureFormatVersion = 1;

void save_features(const std::string& path, const ModalityFeatures& features);
ModalityFeatures load_features(const std::string& path);
/// Also checks the stored shape against the configured (L, d_h) of its kind.
ModalityFeatures load_features(const std::string& path, const ModalityConfig& cfg);

/// Throws ShapeMismatch when features disagree with the configured shape.
void check_feature_shape(const ModalityFeatures& features, const ModalityConfig& cfg);

}  // namespace macaw
