// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <bit>
#include <cmath>

#include "macaw/alignment.hpp"
#include "macaw/error.hpp"
#include "macaw/gradcheck.hpp"
#include "macaw/rng.hpp"

namespace macaw {
namespace {

Tensor random_matrix(Rng& rng, std::size_t r, std::size_t c, double lo = -1.0, double hi = 1.0) {
  Tensor t({r, c});
  for (auto& v : t.data()) v = rng.uniform(lo, hi);
  return t;
}

Errc code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error raised";
  return Errc::IoError;
}

TEST(TransformGeometry, Examples) {
  auto g = transform_geometry(16, 4);
  EXPECT_EQ(g.stride, 4u);
  EXPECT_EQ(g.kernel, 4u);
  auto same = transform_geometry(5, 5);
  EXPECT_EQ(same.stride, 1u);
  EXPECT_EQ(same.kernel, 1u);
  auto odd = transform_geometry(10, 4);
  EXPECT_EQ(odd.stride, 2u);
  EXPECT_EQ(odd.kernel, 4u);
  EXPECT_EQ(code_of([] { transform_geometry(3, 4); }), Errc::BadLength);
  EXPECT_EQ(code_of([] { transform_geometry(3, 0); }), Errc::BadLength);
}

TEST(TransformGeometry, LengthLaw) {
  for (std::size_t lp = 1; lp <= 8; ++lp)
    for (std::size_t l = lp; l <= 64 * lp; ++l) {
      const auto g = transform_geometry(l, lp);
      ASSERT_GE(g.kernel, 1u);
      ASSERT_LE(g.kernel, l);
      ASSERT_EQ(conv1d_output_length(l, g.kernel, g.stride), lp) << "L=" << l << " L'=" << lp;
    }
}

TEST(Transform, SlidingWindowExample) {
  TransformWeights w{Tensor({2, 1, 1}, std::vector<double>{1.0, 1.0}), Tensor::vector({0.0}),
                     Tensor::matrix({{1.0}}), Tensor::vector({0.0})};
  auto out = transform(Tensor::matrix({{1}, {2}, {3}}), w, 2);
  EXPECT_EQ(out, Tensor::matrix({{3}, {5}}));
}

TEST(Transform, EmitsTargetLengthForEveryInputLength) {
  Rng rng(21);
  const std::size_t dh = 3, de = 5, lp = 4;
  for (std::size_t l = lp; l <= 40; ++l) {
    const auto g = transform_geometry(l, lp);
    TransformWeights w{Tensor({g.kernel, dh, dh}, 0.1), Tensor({dh}), random_matrix(rng, dh, de), Tensor({de})};
    auto out = transform(random_matrix(rng, l, dh), w, lp);
    EXPECT_EQ(out.shape(), (Shape{lp, de}));
  }
}

TEST(Transform, KernelMismatchRejected) {
  TransformWeights w{Tensor({3, 2, 2}), Tensor({2}), Tensor({2, 4}), Tensor({4})};
  EXPECT_EQ(code_of([&] { transform(Tensor({16, 2}), w, 4); }), Errc::ShapeMismatch);
}

TEST(Attention, HandExample) {
  auto out = attention(Tensor::matrix({{1, 0}}), Tensor::matrix({{1, 0}, {0, 1}}), Tensor::matrix({{1, 2}, {3, 4}}));
  // softmax([1/sqrt(2), 0]) computed directly.
  const double a = std::exp(1.0 / std::sqrt(2.0));
  const double w0 = a / (a + 1.0), w1 = 1.0 / (a + 1.0);
  EXPECT_NEAR(w0, 0.6698, 1e-4);
  EXPECT_NEAR(out(0, 0), w0 * 1 + w1 * 3, 1e-12);
  EXPECT_NEAR(out(0, 1), w0 * 2 + w1 * 4, 1e-12);
  EXPECT_NEAR(out(0, 0), 1.6605, 1e-4);
  EXPECT_NEAR(out(0, 1), 2.6605, 1e-4);
}

TEST(Attention, SingleKeyCopiesValue) {
  Rng rng(22);
  auto q = random_matrix(rng, 5, 3, -10, 10);
  auto v = Tensor::matrix({{0.25, -4.0}});
  auto out = attention(q, random_matrix(rng, 1, 3), v);
  for (std::size_t i = 0; i < 5; ++i) {
    EXPECT_DOUBLE_EQ(out(i, 0), 0.25);
    EXPECT_DOUBLE_EQ(out(i, 1), -4.0);
  }
}

TEST(Attention, ZeroQueryAveragesValues) {
  Rng rng(23);
  auto v = random_matrix(rng, 4, 3);
  auto out = attention(Tensor({2, 5}), random_matrix(rng, 4, 5), v);
  for (std::size_t j = 0; j < 3; ++j) {
    double mean = 0.0;
    for (std::size_t i = 0; i < 4; ++i) mean += v(i, j) / 4.0;
    EXPECT_NEAR(out(0, j), mean, 1e-12);
    EXPECT_NEAR(out(1, j), mean, 1e-12);
  }
}

TEST(Attention, ShapeMismatch) {
  EXPECT_EQ(code_of([] { attention(Tensor({1, 2}), Tensor({3, 4}), Tensor({3, 2})); }), Errc::ShapeMismatch);
  EXPECT_EQ(code_of([] { attention(Tensor({1, 2}), Tensor({3, 2}), Tensor({2, 2})); }), Errc::ShapeMismatch);
}

TEST(Align, SingleEmbeddingRow) {
  Rng rng(24);
  auto e = random_matrix(rng, 1, 6);
  auto out = align(random_matrix(rng, 4, 6, -5, 5), e);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 6; ++j) EXPECT_DOUBLE_EQ(out(i, j), e(0, j));
}

TEST(Align, SharesAttentionExample) {
  auto out = align(Tensor::matrix({{1, 0}}), Tensor::matrix({{1, 0}, {0, 1}}));
  const double a = std::exp(1.0 / std::sqrt(2.0));
  EXPECT_NEAR(out(0, 0), a / (a + 1.0), 1e-12);
  EXPECT_NEAR(out(0, 1), 1.0 / (a + 1.0), 1e-12);
}

TEST(Align, RowsAreConvexCombinationsOfEmbeddings) {
  Rng rng(25);
  for (int trial = 0; trial < 100; ++trial) {
    const auto lp = 1 + rng.uniform_index(6), v = 2 + rng.uniform_index(40), d = 2 + rng.uniform_index(12);
    auto h = random_matrix(rng, lp, d, -3, 3);
    auto e = random_matrix(rng, v, d);
    auto out = align(h, e);
    for (std::size_t i = 0; i < lp; ++i) {
      // Recompute the weights independently of the library softmax.
      std::vector<double> w(v);
      double mx = -1e300;
      for (std::size_t r = 0; r < v; ++r) {
        double s = 0.0;
        for (std::size_t c = 0; c < d; ++c) s += h(i, c) * e(r, c);
        w[r] = s / std::sqrt(static_cast<double>(d));
        mx = std::max(mx, w[r]);
      }
      double z = 0.0;
      for (auto& x : w) z += (x = std::exp(x - mx));
      double sum = 0.0;
      for (auto& x : w) {
        x /= z;
        EXPECT_GE(x, -1e-9);
        sum += x;
      }
      EXPECT_NEAR(sum, 1.0, 1e-6);
      for (std::size_t c = 0; c < d; ++c) {
        double rec = 0.0;
        for (std::size_t r = 0; r < v; ++r) rec += w[r] * e(r, c);
        EXPECT_NEAR(out(i, c), rec, 1e-9);
      }
    }
  }
}

TEST(Align, GradientReachesEmbeddingsAndTransform) {
  Rng rng(26);
  ParamStore p;
  p.add("conv.w", random_matrix(rng, 4, 9).reshaped({4, 3, 3}));
  p.add("conv.b", random_matrix(rng, 1, 3).reshaped({3}));
  p.add("linear.w", random_matrix(rng, 3, 5));
  p.add("linear.b", random_matrix(rng, 1, 5).reshaped({5}));
  p.add("embed", random_matrix(rng, 7, 5));
  const auto features = random_matrix(rng, 10, 3);
  const auto weights = random_matrix(rng, 3, 5);
  auto build = [&](ag::Tape& t, const ParamStore& ps) {
    TransformVars w{t.param(ps, 0), t.param(ps, 1), t.param(ps, 2), t.param(ps, 3)};
    auto h = transform(t.constant(features), w, 3);
    auto a = align(ModalityKind::Image, h, t.param(ps, 4)).tokens;
    return ag::sum(ag::mul(a, t.constant(weights)));
  };
  Gradients g;
  {
    ag::Tape t;
    g = t.backward(build(t, p), p);
  }
  for (const auto& grad : g) EXPECT_GT(global_norm({grad}), 0.0);
  auto fn = [&](const ParamStore& ps) {
    ag::Tape t;
    return build(t, ps).value().item();
  };
  GradCheckOptions opt;
  opt.tolerance = 1e-6;
  auto r = finite_diff_check(fn, p, g, opt);
  EXPECT_TRUE(r.pass) << r.max_rel_err;
}

TEST(AlignMultihead, ShapeAndGradient) {
  Rng rng(27);
  ParamStore p;
  p.add("h", random_matrix(rng, 3, 8));
  p.add("embed", random_matrix(rng, 11, 8));
  for (const char* n : {"wq", "wk", "wv", "wo"}) p.add(n, random_matrix(rng, 8, 8, -0.5, 0.5));
  auto build = [](ag::Tape& t, const ParamStore& ps) {
    AlignmentProjections proj{t.param(ps, 2), t.param(ps, 3), t.param(ps, 4), t.param(ps, 5), 2};
    auto a = align_multihead(ModalityKind::Audio, t.param(ps, 0), t.param(ps, 1), proj);
    EXPECT_EQ(a.tokens.shape(), (Shape{3, 8}));
    return ag::sum(ag::mul(a.tokens, a.tokens));
  };
  Gradients g;
  {
    ag::Tape t;
    g = t.backward(build(t, p), p);
  }
  auto fn = [&](const ParamStore& ps) {
    ag::Tape t;
    return build(t, ps).value().item();
  };
  GradCheckOptions opt;
  opt.tolerance = 1e-6;
  EXPECT_TRUE(finite_diff_check(fn, p, g, opt).pass);
}

class Prefix : public ::testing::Test {
 protected:
  static constexpr std::size_t kWidth = 6;
  static constexpr std::size_t kLp = 4;

  Prefix() {
    Rng rng(28);
    table_ = random_matrix(rng, 260, kWidth);
  }

  AlignedTokens soft(ModalityKind kind, double fill) {
    return AlignedTokens{kind, tape_.constant(Tensor({kLp, kWidth}, fill))};
  }

  EmbedFn embed() {
    return [this](const TokenIds& ids) { return ag::gather_rows(tape_.constant(table_), ids); };
  }

  ag::Tape tape_;
  Tensor table_;
};

TEST_F(Prefix, AllModalitiesLengthAndOrder) {
  const TokenIds instruction(10, 50), response(6, 60);
  auto seq = assemble_prefix(soft(ModalityKind::Image, 1), soft(ModalityKind::Video, 2), soft(ModalityKind::Audio, 3),
                             instruction, response, embed());
  EXPECT_EQ(seq.length(), 28u);
  EXPECT_EQ(seq.embedded.rows(), 28u);
  const std::vector<Span> expected{{SpanKind::Image, 0, 4},
                                   {SpanKind::Video, 4, 8},
                                   {SpanKind::Audio, 8, 12},
                                   {SpanKind::Instruction, 12, 22},
                                   {SpanKind::Response, 22, 28}};
  EXPECT_EQ(seq.spans, expected);
  EXPECT_EQ(seq.embedded.value()(0, 0), 1.0);
  EXPECT_EQ(seq.embedded.value()(4, 0), 2.0);
  EXPECT_EQ(seq.embedded.value()(8, 0), 3.0);
  EXPECT_EQ(seq.embedded.value()(12, 0), table_(50, 0));
  EXPECT_EQ(seq.embedded.value()(22, 0), table_(60, 0));
  EXPECT_EQ(seq.token_ids[0], Vocab::kPad);
  EXPECT_EQ(seq.token_ids[12], 50u);
}

TEST_F(Prefix, LengthLawAcrossPresenceCombinations) {
  const TokenIds instruction(7, 70);
  for (unsigned mask = 0; mask < 8; ++mask) {
    std::optional<AlignedTokens> img, vid, aud;
    if (mask & 1) img = soft(ModalityKind::Image, 1);
    if (mask & 2) vid = soft(ModalityKind::Video, 2);
    if (mask & 4) aud = soft(ModalityKind::Audio, 3);
    const std::size_t m = std::popcount(mask);
    auto infer = assemble_prefix(img, vid, aud, instruction, std::nullopt, embed());
    EXPECT_EQ(infer.length(), m * kLp + 7);
    EXPECT_FALSE(infer.has_response());
    auto train = assemble_prefix(img, vid, aud, instruction, TokenIds{80, 81}, embed());
    EXPECT_EQ(train.length(), m * kLp + 9);
    EXPECT_EQ(train.spans.size(), m + 2);
  }
}

TEST_F(Prefix, TextOnly) {
  auto seq = assemble_prefix(std::nullopt, std::nullopt, std::nullopt, TokenIds{1, 5, 3}, std::nullopt, embed());
  EXPECT_EQ(seq.length(), 3u);
  ASSERT_EQ(seq.spans.size(), 1u);
  EXPECT_EQ(seq.spans[0].kind, SpanKind::Instruction);
}

TEST_F(Prefix, Errors) {
  EXPECT_EQ(code_of([&] { assemble_prefix(std::nullopt, std::nullopt, std::nullopt, {}, std::nullopt, embed()); }),
            Errc::MissingText);
  AlignedTokens narrow{ModalityKind::Image, tape_.constant(Tensor({kLp, kWidth - 1}))};
  EXPECT_EQ(code_of([&] { assemble_prefix(narrow, std::nullopt, std::nullopt, {5}, std::nullopt, embed()); }),
            Errc::ShapeMismatch);
}

}  // namespace
}  // namespace macaw
