// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <fstream>

#include "fixtures.hpp"
#include "macaw/encoders.hpp"
#include "macaw/error.hpp"
#include "macaw/rng.hpp"

namespace macaw {
namespace {

Errc code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error raised";
  return Errc::IoError;
}

void write_bytes(const std::filesystem::path& p, const std::string& bytes) {
  std::ofstream f(p, std::ios::binary | std::ios::trunc);
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

TEST(MediaRef, FingerprintIsContentHash) {
  auto a = MediaRef::from_bytes(ModalityKind::Image, "pixels");
  auto b = MediaRef::from_bytes(ModalityKind::Image, "pixels", "other/name.jpg");
  EXPECT_EQ(a.fingerprint, b.fingerprint);
  EXPECT_EQ(a.fingerprint, fnv1a64("pixels"));
  const auto dir = testing::scratch_dir("mediaref");
  write_bytes(dir / "x.jpg", "pixels");
  EXPECT_EQ(MediaRef::from_path(ModalityKind::Image, (dir / "x.jpg").string()).fingerprint, a.fingerprint);
}

TEST(StubEncode, ShapeAndRange) {
  ModalityConfig cfg;
  auto f = stub_encode(MediaRef::from_bytes(ModalityKind::Image, "img"), cfg);
  EXPECT_EQ(f.kind, ModalityKind::Image);
  EXPECT_EQ(f.values.shape(), (Shape{16, 32}));
  for (double v : f.values.data()) {
    EXPECT_GE(v, -1.0);
    EXPECT_LE(v, 1.0);
  }
  auto a = stub_encode(MediaRef::from_bytes(ModalityKind::Audio, "snd"), cfg);
  EXPECT_EQ(a.values.shape(), (Shape{24, 16}));
}

TEST(StubEncode, Deterministic) {
  ModalityConfig cfg;
  auto m = MediaRef::from_bytes(ModalityKind::Image, "same");
  EXPECT_EQ(stub_encode(m, cfg), stub_encode(m, cfg));
}

TEST(StubEncode, DistinctFingerprintsDiffer) {
  ModalityConfig cfg;
  Rng rng(12);
  for (int trial = 0; trial < 100; ++trial) {
    MediaRef a{ModalityKind::Image, "", rng.next_u64(), 0};
    MediaRef b{ModalityKind::Image, "", rng.next_u64(), 0};
    const auto fa = stub_encode(a, cfg), fb = stub_encode(b, cfg);
    std::size_t differ = 0;
    for (std::size_t i = 0; i < fa.values.size(); ++i) differ += fa.values[i] != fb.values[i];
    EXPECT_GE(static_cast<double>(differ), 0.99 * static_cast<double>(fa.values.size()));
  }
}

TEST(SampleFrames, Examples) {
  EXPECT_EQ(sample_frames(10, 4), (std::vector<std::size_t>{0, 2, 5, 7}));
  EXPECT_EQ(sample_frames(5, 5), (std::vector<std::size_t>{0, 1, 2, 3, 4}));
  EXPECT_EQ(sample_frames(2, 4), (std::vector<std::size_t>{0, 0, 1, 1}));
  EXPECT_EQ(code_of([] { sample_frames(0, 3); }), Errc::BadLength);
}

TEST(SampleFrames, MonotoneAndBounded) {
  Rng rng(13);
  for (int trial = 0; trial < 300; ++trial) {
    const auto n = 1 + rng.uniform_index(10000), f = 1 + rng.uniform_index(10000);
    const auto idx = sample_frames(n, f);
    ASSERT_EQ(idx.size(), f);
    EXPECT_EQ(idx.front(), 0u);
    for (std::size_t j = 0; j < f; ++j) {
      EXPECT_LT(idx[j], n);
      if (j) EXPECT_LE(idx[j - 1], idx[j]);
    }
  }
}

TEST(EncodeVideo, ShapeAndFrameRows) {
  ModalityConfig cfg;
  auto m = MediaRef::from_bytes(ModalityKind::Video, "clip");
  m.frame_count = 40;
  auto f = encode_video(m, cfg);
  EXPECT_EQ(f.values.shape(), (Shape{8, 32}));
  EXPECT_EQ(f, encode_video(m, cfg));
  cfg.video.length = 1;
  cfg.video.out_length = 1;
  auto one = encode_video(m, cfg);
  EXPECT_EQ(one.values.shape(), (Shape{1, 32}));
  EXPECT_EQ(one.values.reshaped({32}), stub_encode_frame(m.fingerprint, 0, 32).reshaped({32}));
}

TEST(FeatureFile, RoundTripBitwise) {
  ModalityConfig cfg;
  const auto dir = testing::scratch_dir("features");
  auto f = stub_encode(MediaRef::from_bytes(ModalityKind::Audio, "a"), cfg);
  save_features((dir / "a.mcwf").string(), f);
  EXPECT_EQ(load_features((dir / "a.mcwf").string()), f);
  EXPECT_EQ(load_features((dir / "a.mcwf").string(), cfg), f);
  EXPECT_EQ(encode_media({ModalityKind::Audio, (dir / "a.mcwf").string(), 0, 0}, cfg), f);
}

TEST(FeatureFile, Errors) {
  ModalityConfig cfg;
  const auto dir = testing::scratch_dir("features-bad");
  const auto path = dir / "f.mcwf";
  auto f = stub_encode(MediaRef::from_bytes(ModalityKind::Image, "i"), cfg);
  save_features(path.string(), f);
  const std::string good = testing::read_file(path);

  write_bytes(path, "XCWF" + good.substr(4));
  EXPECT_EQ(code_of([&] { load_features(path.string()); }), Errc::BadMagic);

  auto version = good;
  version[4] = 9;
  write_bytes(path, version);
  EXPECT_EQ(code_of([&] { load_features(path.string()); }), Errc::VersionMismatch);

  auto kind = good;
  kind[8] = 7;
  write_bytes(path, kind);
  EXPECT_EQ(code_of([&] { load_features(path.string()); }), Errc::UnknownKind);

  // Header promises 16x32 but only ten floats follow.
  write_bytes(path, good.substr(0, 17 + 10 * 4));
  EXPECT_EQ(code_of([&] { load_features(path.string()); }), Errc::TruncatedFile);
  write_bytes(path, good.substr(0, 10));
  EXPECT_EQ(code_of([&] { load_features(path.string()); }), Errc::TruncatedFile);

  write_bytes(path, good + "xx");
  EXPECT_EQ(code_of([&] { load_features(path.string()); }), Errc::CorruptPayload);

  write_bytes(path, good);
  cfg.image.dim = 31;
  EXPECT_EQ(code_of([&] { load_features(path.string(), cfg); }), Errc::ShapeMismatch);
  EXPECT_EQ(code_of([&] { load_features((dir / "missing.mcwf").string()); }), Errc::IoError);
}

}  // namespace
}  // namespace macaw
