// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <functional>

#include "macaw/autograd.hpp"
#include "macaw/error.hpp"
#include "macaw/gradcheck.hpp"
#include "macaw/rng.hpp"

namespace macaw {
namespace {

using BuildFn = std::function<ag::Var(ag::Tape&, const ParamStore&)>;

Tensor random_tensor(Rng& rng, Shape shape, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(shape));
  for (auto& v : t.data()) v = rng.uniform(lo, hi);
  return t;
}

// Reduces a matrix output to a scalar through fixed random weights so every
// output entry contributes with a distinct coefficient.
ag::Var project(ag::Var out, std::uint64_t seed) {
  Rng rng(seed);
  auto& tape = *out.tape();
  return ag::sum(ag::mul(out, tape.constant(random_tensor(rng, out.shape()))));
}

GradCheckReport check(ParamStore& params, const BuildFn& build) {
  Gradients grads;
  {
    ag::Tape tape;
    grads = tape.backward(build(tape, params), params);
  }
  auto fn = [&](const ParamStore& p) {
    ag::Tape tape;
    return build(tape, p).value().item();
  };
  GradCheckOptions opt;
  opt.tolerance = 1e-6;
  return finite_diff_check(fn, params, grads, opt);
}

void expect_passes(ParamStore& params, const BuildFn& build) {
  auto r = check(params, build);
  EXPECT_TRUE(r.pass) << "max rel err " << r.max_rel_err << " first failure "
                      << (r.failures.empty() ? "" : r.failures.front().param);
}

TEST(Autograd, SumOfSquares) {
  ParamStore p;
  p.add("x", Tensor::vector({1.0, 2.0}));
  ag::Tape tape;
  auto x = tape.param(p, 0);
  auto g = tape.backward(ag::sum(ag::mul(x, x)), p);
  EXPECT_EQ(g[0], Tensor::vector({2.0, 4.0}));
}

TEST(Autograd, SoftmaxNllClosedForm) {
  ParamStore p;
  p.add("z", Tensor::matrix({{0.3, -1.2, 2.0, 0.5}}));
  ag::Tape tape;
  const std::size_t target[] = {2};
  const double weight[] = {1.0};
  auto g = tape.backward(ag::weighted_nll(tape.param(p, 0), target, weight), p);
  auto s = softmax_rows(p[0]);
  for (std::size_t j = 0; j < 4; ++j) EXPECT_NEAR(g[0][j], s[j] - (j == 2 ? 1.0 : 0.0), 1e-15);
}

TEST(Autograd, ConstantLossIsNotAttached) {
  ParamStore p;
  p.add("x", Tensor::vector({1.0}));
  ag::Tape tape;
  auto c = tape.constant(Tensor::scalar(3.0));
  try {
    tape.backward(c, p);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::NotAttached);
  }
  try {
    tape.backward(ag::Var{}, p);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::NotAttached);
  }
}

TEST(Autograd, NonScalarLossRejected) {
  ParamStore p;
  p.add("x", Tensor::vector({1.0, 2.0}));
  ag::Tape tape;
  EXPECT_THROW(tape.backward(tape.param(p, 0), p), Error);
}

TEST(Autograd, UnreachedParametersGetZeros) {
  ParamStore p;
  p.add("used", Tensor::vector({1.0, 2.0}));
  p.add("unused", Tensor::vector({5.0}));
  ag::Tape tape;
  auto g = tape.backward(ag::sum(tape.param(p, "used")), p);
  EXPECT_EQ(g[1], Tensor::vector({0.0}));
}

TEST(Autograd, ReusedParameterAccumulates) {
  ParamStore p;
  p.add("x", Tensor::vector({3.0}));
  ag::Tape tape;
  auto x = tape.param(p, 0);
  auto g = tape.backward(ag::add(ag::scale(x, 2.0), ag::mul(x, x)), p);
  EXPECT_DOUBLE_EQ(g[0][0], 2.0 + 6.0);
}

TEST(Autograd, DetachBlocksGradient) {
  ParamStore p;
  p.add("x", Tensor::vector({3.0}));
  ag::Tape tape;
  auto x = tape.param(p, 0);
  auto g = tape.backward(ag::add(ag::mul(ag::detach(x), x), x), p);
  EXPECT_DOUBLE_EQ(g[0][0], 3.0 + 1.0);
}

TEST(Autograd, GatherRowsInvalidId) {
  ParamStore p;
  p.add("t", Tensor({3, 2}));
  ag::Tape tape;
  const std::size_t ids[] = {0, 3};
  try {
    ag::gather_rows(tape.param(p, 0), ids);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::InvalidId);
  }
}

class OpGradients : public ::testing::Test {
 protected:
  Rng rng{42};
};

TEST_F(OpGradients, Matmul) {
  ParamStore p;
  p.add("a", random_tensor(rng, {3, 4}));
  p.add("b", random_tensor(rng, {4, 2}));
  expect_passes(p, [](ag::Tape& t, const ParamStore& ps) {
    return project(ag::matmul(t.param(ps, 0), t.param(ps, 1)), 1);
  });
}

TEST_F(OpGradients, MatmulNt) {
  ParamStore p;
  p.add("a", random_tensor(rng, {3, 4}));
  p.add("b", random_tensor(rng, {5, 4}));
  expect_passes(p, [](ag::Tape& t, const ParamStore& ps) {
    return project(ag::matmul_nt(t.param(ps, 0), t.param(ps, 1)), 2);
  });
}

TEST_F(OpGradients, AddBiasScaleMul) {
  ParamStore p;
  p.add("x", random_tensor(rng, {3, 4}));
  p.add("b", random_tensor(rng, {4}));
  p.add("y", random_tensor(rng, {3, 4}));
  expect_passes(p, [](ag::Tape& t, const ParamStore& ps) {
    auto x = t.param(ps, 0);
    auto h = ag::add(ag::add_bias(x, t.param(ps, 1)), ag::scale(ag::mul(x, t.param(ps, 2)), 0.7));
    return project(h, 3);
  });
}

TEST_F(OpGradients, Gelu) {
  ParamStore p;
  p.add("x", random_tensor(rng, {4, 5}, -3, 3));
  expect_passes(p, [](ag::Tape& t, const ParamStore& ps) { return project(ag::gelu(t.param(ps, 0)), 4); });
}

TEST_F(OpGradients, SoftmaxRows) {
  ParamStore p;
  p.add("x", random_tensor(rng, {3, 6}, -2, 2));
  expect_passes(p, [](ag::Tape& t, const ParamStore& ps) { return project(ag::softmax_rows(t.param(ps, 0)), 5); });
}

TEST_F(OpGradients, CausalSoftmaxRows) {
  ParamStore p;
  p.add("x", random_tensor(rng, {5, 5}, -2, 2));
  expect_passes(p, [](ag::Tape& t, const ParamStore& ps) {
    return project(ag::causal_softmax_rows(t.param(ps, 0)), 6);
  });
}

TEST_F(OpGradients, LayerNorm) {
  ParamStore p;
  p.add("x", random_tensor(rng, {3, 6}, -2, 2));
  p.add("g", random_tensor(rng, {6}, 0.5, 1.5));
  p.add("b", random_tensor(rng, {6}));
  expect_passes(p, [](ag::Tape& t, const ParamStore& ps) {
    return project(ag::layer_norm(t.param(ps, 0), t.param(ps, 1), t.param(ps, 2)), 7);
  });
}

TEST_F(OpGradients, Conv1d) {
  ParamStore p;
  p.add("x", random_tensor(rng, {9, 3}));
  p.add("w", random_tensor(rng, {3, 3, 2}));
  p.add("b", random_tensor(rng, {2}));
  expect_passes(p, [](ag::Tape& t, const ParamStore& ps) {
    return project(ag::conv1d(t.param(ps, 0), t.param(ps, 1), t.param(ps, 2), 2), 8);
  });
}

TEST_F(OpGradients, GatherSliceConcat) {
  ParamStore p;
  p.add("table", random_tensor(rng, {5, 4}));
  p.add("x", random_tensor(rng, {3, 4}));
  expect_passes(p, [](ag::Tape& t, const ParamStore& ps) {
    const std::size_t ids[] = {4, 0, 4, 2};
    auto g = ag::gather_rows(t.param(ps, 0), ids);
    auto x = t.param(ps, 1);
    const ag::Var rows[] = {ag::slice_rows(g, 1, 2), x};
    auto stacked = ag::concat_rows(rows);
    const ag::Var cols[] = {ag::slice_cols(stacked, 0, 1), ag::slice_cols(stacked, 2, 2)};
    return project(ag::concat_cols(cols), 9);
  });
}

TEST_F(OpGradients, WeightedNll) {
  ParamStore p;
  p.add("z", random_tensor(rng, {4, 7}, -2, 2));
  expect_passes(p, [](ag::Tape& t, const ParamStore& ps) {
    const std::size_t targets[] = {1, 6, 0, 3};
    const double weights[] = {0.5, 0.0, 0.25, 0.25};
    return ag::weighted_nll(t.param(ps, 0), targets, weights);
  });
}

TEST_F(OpGradients, ComposedAttentionBlock) {
  ParamStore p;
  p.add("x", random_tensor(rng, {4, 6}));
  p.add("wq", random_tensor(rng, {6, 6}));
  p.add("wk", random_tensor(rng, {6, 6}));
  p.add("wv", random_tensor(rng, {6, 6}));
  expect_passes(p, [](ag::Tape& t, const ParamStore& ps) {
    auto x = t.param(ps, 0);
    auto q = ag::matmul(x, t.param(ps, 1));
    auto k = ag::matmul(x, t.param(ps, 2));
    auto v = ag::matmul(x, t.param(ps, 3));
    auto w = ag::causal_softmax_rows(ag::scale(ag::matmul_nt(q, k), 1.0 / std::sqrt(6.0)));
    return project(ag::gelu(ag::matmul(w, v)), 10);
  });
}

TEST(GradCheck, ExactQuadratic) {
  ParamStore p;
  p.add("x", Tensor::vector({0.5, -1.5, 2.0}));
  ag::Tape tape;
  auto x = tape.param(p, 0);
  auto g = tape.backward(ag::sum(ag::mul(x, x)), p);
  auto fn = [](const ParamStore& ps) {
    double s = 0.0;
    for (double v : ps[0].data()) s += v * v;
    return s;
  };
  auto r = finite_diff_check(fn, p, g);
  EXPECT_TRUE(r.pass);
  EXPECT_LT(r.max_rel_err, 1e-8);
  EXPECT_EQ(r.checked, 3u);
}

TEST(GradCheck, DetectsScaledGradient) {
  ParamStore p;
  p.add("x", Tensor::vector({0.5, -1.5, 2.0}));
  Gradients wrong{Tensor::vector({2.0, -6.0, 8.0})};
  auto fn = [](const ParamStore& ps) {
    double s = 0.0;
    for (double v : ps[0].data()) s += v * v;
    return s;
  };
  auto r = finite_diff_check(fn, p, wrong);
  EXPECT_FALSE(r.pass);
  EXPECT_EQ(r.failures.size(), 3u);
  EXPECT_EQ(p[0], Tensor::vector({0.5, -1.5, 2.0}));
}

TEST(GradCheck, RelativeErrorFloor) {
  EXPECT_DOUBLE_EQ(relative_error(2.0, 1.0), 0.5);
  EXPECT_DOUBLE_EQ(relative_error(0.0, 0.0), 0.0);
  EXPECT_DOUBLE_EQ(relative_error(1e-10, 0.0), 1e-2);
}

TEST(ParamStore, LookupAndErrors) {
  ParamStore p;
  p.add("a", Tensor({2}));
  p.add("b", Tensor({3, 2}));
  EXPECT_EQ(p.index_of("b"), 1u);
  EXPECT_EQ(p.numel(), 8u);
  EXPECT_THROW(p.index_of("c"), Error);
  EXPECT_THROW(p.add("a", Tensor({1})), Error);
}

TEST(Gradients, GlobalNorm) {
  Gradients g{Tensor::vector({3.0}), Tensor::vector({0.0, 4.0})};
  EXPECT_DOUBLE_EQ(global_norm(g), 5.0);
}

}  // namespace
}  // namespace macaw
