// SPDX-License-Identifier: Apache-2.0
#include "macaw/encoders.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "macaw/error.hpp"
#include "macaw/rng.hpp"

namespace macaw {

static_assert(std::endian::native == std::endian::little, "feature files are written in host order");

MediaRef MediaRef::from_bytes(ModalityKind kind, std::string_view bytes, std::string path) {
  return MediaRef{kind, std::move(path), fnv1a64(bytes), 0};
}

MediaRef MediaRef::from_path(ModalityKind kind, std::string path) {
  std::ifstream in(path, std::ios::binary);
  if (in) {
    std::ostringstream ss;
    ss << in.rdbuf();
    return from_bytes(kind, ss.str(), std::move(path));
  }
  const auto fp = fnv1a64(path);
  return MediaRef{kind, std::move(path), fp, 0};
}

namespace {

// Stub values are rounded through float so they survive the float32
// feature file format bit-for-bit.
double stub_value(Rng& rng) { return static_cast<double>(static_cast<float>(rng.uniform(-1.0, 1.0))); }

Tensor stub_matrix(std::uint64_t seed, std::size_t rows, std::size_t cols) {
  Rng rng(seed);
  Tensor t({rows, cols});
  for (double& v : t.data()) v = stub_value(rng);
  return t;
}

std::uint64_t kind_seed(std::uint64_t fingerprint, ModalityKind kind) {
  return mix64(fingerprint ^ (static_cast<std::uint64_t>(kind) + 1) * 0x9e3779b97f4a7c15ULL);
}

}  // namespace

ModalityFeatures stub_encode(const MediaRef& media, const ModalityConfig& cfg) {
  switch (media.kind) {
    case ModalityKind::Image:
    case ModalityKind::Video:
    case ModalityKind::Audio: break;
    default: throw Error(Errc::UnknownKind, "media kind " + std::to_string(static_cast<int>(media.kind)));
  }
  const auto& spec = cfg.spec(media.kind);
  return ModalityFeatures{media.kind, stub_matrix(kind_seed(media.fingerprint, media.kind), spec.length, spec.dim)};
}

Tensor stub_encode_frame(std::uint64_t fingerprint, std::size_t frame_index, std::size_t dim) {
  const std::uint64_t seed = mix64(kind_seed(fingerprint, ModalityKind::Video) + mix64(frame_index));
  return stub_matrix(seed, 1, dim);
}

std::vector<std::size_t> sample_frames(std::size_t frame_count, std::size_t target) {
  if (frame_count == 0 || target == 0) throw Error(Errc::BadLength, "sample_frames needs N >= 1 and F >= 1");
  std::vector<std::size_t> idx(target);
  for (std::size_t j = 0; j < target; ++j) idx[j] = j * frame_count / target;
  return idx;
}

ModalityFeatures encode_video(const MediaRef& media, const ModalityConfig& cfg) {
  if (media.kind != ModalityKind::Video) {
    throw Error(Errc::UnknownKind, "encode_video on " + std::string(modality_name(media.kind)) + " media");
  }
  const auto& spec = cfg.video;
  const std::size_t n = media.frame_count ? media.frame_count : cfg.video_source_frames;
  const auto frames = sample_frames(n, spec.length);
  Tensor out({spec.length, spec.dim});
  for (std::size_t j = 0; j < frames.size(); ++j) {
    const Tensor row = stub_encode_frame(media.fingerprint, frames[j], spec.dim);
    std::copy(row.data().begin(), row.data().end(), out.row(j).begin());
  }
  return ModalityFeatures{ModalityKind::Video, std::move(out)};
}

ModalityFeatures encode_media(const MediaRef& media, const ModalityConfig& cfg) {
  if (media.path.size() >= 5 && media.path.ends_with(".mcwf")) {
    auto f = load_features(media.path, cfg);
    if (f.kind != media.kind) {
      throw Error(Errc::ShapeMismatch, media.path + ": feature file holds " + std::string(modality_name(f.kind)) +
                                           " features, expected " + std::string(modality_name(media.kind)));
    }
    return f;
  }
  if (media.kind == ModalityKind::Video) return encode_video(media, cfg);
  return stub_encode(media, cfg);
}

void check_feature_shape(const ModalityFeatures& features, const ModalityConfig& cfg) {
  const auto& spec = cfg.spec(features.kind);
  if (features.values.rank() != 2 || features.length() != spec.length || features.dim() != spec.dim) {
    throw Error(Errc::ShapeMismatch, std::string(modality_name(features.kind)) + " features " +
                                         shape_string(features.values.shape()) + " but config expects [" +
                                         std::to_string(spec.length) + "x" + std::to_string(spec.dim) + "]");
  }
}

namespace {

constexpr char kFeatureMagic[4] = {'M', 'C', 'W', 'F'};

template <typename T>
void put(std::string& out, T value) {
  char buf[sizeof(T)];
  std::memcpy(buf, &value, sizeof(T));
  out.append(buf, sizeof(T));
}

template <typename T>
T take(std::string_view bytes, std::size_t& pos, const std::string& path) {
  if (pos + sizeof(T) > bytes.size()) throw Error(Errc::TruncatedFile, path + ": header ends early");
  T value;
  std::memcpy(&value, bytes.data() + pos, sizeof(T));
  pos += sizeof(T);
  return value;
}

}  // namespace

void save_features(const std::string& path, const ModalityFeatures& features) {
  std::string out(kFeatureMagic, 4);
  put<std::uint32_t>(out, kFeatureFormatVersion);
  put<std::uint8_t>(out, static_cast<std::uint8_t>(features.kind));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(features.length()));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(features.dim()));
  for (double v : features.values.data()) put<float>(out, static_cast<float>(v));
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw Error(Errc::IoError, path + ": cannot open for writing");
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw Error(Errc::IoError, path + ": write failed");
}

ModalityFeatures load_features(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error(Errc::IoError, path + ": cannot open feature file");
  std::ostringstream ss;
  ss << f.rdbuf();
  const std::string bytes = ss.str();
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kFeatureMagic, 4) != 0) {
    throw Error(Errc::BadMagic, path + ": not a feature file");
  }
  std::size_t pos = 4;
  const auto version = take<std::uint32_t>(bytes, pos, path);
  if (version != kFeatureFormatVersion) {
    throw Error(Errc::VersionMismatch, path + ": feature format version " + std::to_string(version));
  }
  const auto kind = take<std::uint8_t>(bytes, pos, path);
  if (kind > 2) throw Error(Errc::UnknownKind, path + ": modality tag " + std::to_string(kind));
  const auto rows = take<std::uint32_t>(bytes, pos, path);
  const auto cols = take<std::uint32_t>(bytes, pos, path);
  if (rows == 0 || cols == 0) throw Error(Errc::ShapeMismatch, path + ": empty feature matrix");
  const std::size_t n = static_cast<std::size_t>(rows) * cols;
  const std::size_t have = (bytes.size() - pos) / sizeof(float);
  if (have < n) {
    throw Error(Errc::TruncatedFile, path + ": header declares " + std::to_string(rows) + "x" + std::to_string(cols) +
                                         " but only " + std::to_string(have) + " values are present");
  }
  if (bytes.size() - pos != n * sizeof(float)) throw Error(Errc::CorruptPayload, path + ": trailing bytes");
  Tensor values({rows, cols});
  for (std::size_t i = 0; i < n; ++i) values[i] = static_cast<double>(take<float>(bytes, pos, path));
  return ModalityFeatures{static_cast<ModalityKind>(kind), std::move(values)};
}

ModalityFeatures load_features(const std::string& path, const ModalityConfig& cfg) {
  auto f = load_features(path);
  check_feature_shape(f, cfg);
  return f;
}

}  // namespace macaw
