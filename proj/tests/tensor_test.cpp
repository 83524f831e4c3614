//
// mvcgt - multi-view crystal graph transformer
// SPDX-License-Identifier: Apache-2.0
//

#include "mvcgt/tensor.h"

#include <cmath>
#include <numbers>

#include <gtest/gtest.h>

#include "mvcgt/optim.h"
#include "mvcgt/params.h"
#include "mvcgt/rng.h"
#include "test_util.h"

namespace mvcgt {
namespace {
using test::fd_max_error;
using test::random_tensor;
using D = Tensor<double>;

constexpr double kFdTol = 1e-7;

// Random weights so that every output element matters to the loss.
D weighted_sum(const D &x, std::uint64_t seed) {
  const D w = random_tensor(x.shape(), seed, -1, 1, false);
  return sum(mul(x, w));
}

TEST(TensorGrad, ElementwiseBroadcast) {
  D a = random_tensor({ 3, 4 }, 1);
  D b = random_tensor({ 1, 4 }, 2, 0.5, 2.0);
  D c = random_tensor({ 3, 1 }, 3, 0.5, 2.0);
  EXPECT_LT(fd_max_error({ a, b }, [&] { return weighted_sum(add(a, b), 9); }),
            kFdTol);
  EXPECT_LT(fd_max_error({ a, c }, [&] { return weighted_sum(sub(a, c), 9); }),
            kFdTol);
  EXPECT_LT(fd_max_error({ a, b }, [&] { return weighted_sum(mul(a, b), 9); }),
            kFdTol);
  EXPECT_LT(fd_max_error({ a, c }, [&] { return weighted_sum(div(a, c), 9); }),
            kFdTol);
}

TEST(TensorGrad, Unary) {
  D a = random_tensor({ 2, 5 }, 4);
  D p = random_tensor({ 2, 5 }, 5, 0.2, 3.0);
  auto check = [&](D &x, std::function<D(const D &)> f) {
    return fd_max_error({ x }, [&] { return weighted_sum(f(x), 11); });
  };
  EXPECT_LT(check(a, [](const D &x) { return softplus(x); }), kFdTol);
  EXPECT_LT(check(a, [](const D &x) { return sigmoid(x); }), kFdTol);
  EXPECT_LT(check(a, [](const D &x) { return exp(x); }), kFdTol);
  EXPECT_LT(check(p, [](const D &x) { return log(x); }), kFdTol);
  EXPECT_LT(check(p, [](const D &x) { return sqrt(x); }), kFdTol);
  EXPECT_LT(check(a, [](const D &x) { return cos(x); }), kFdTol);
  EXPECT_LT(check(a, [](const D &x) { return square(x); }), kFdTol);
  EXPECT_LT(check(a, [](const D &x) { return scale(x, -2.5); }), kFdTol);
  EXPECT_LT(check(a, [](const D &x) { return add_scalar(neg(x), 0.3); }),
            kFdTol);
}

TEST(TensorGrad, Structural) {
  D a = random_tensor({ 3, 4 }, 6);
  D b = random_tensor({ 4, 2 }, 7);
  D c = random_tensor({ 3, 2 }, 8);
  EXPECT_LT(
    fd_max_error({ a, b }, [&] { return weighted_sum(matmul(a, b), 1); }),
    kFdTol);
  EXPECT_LT(fd_max_error({ a }, [&] { return weighted_sum(transpose(a), 2); }),
            kFdTol);
  EXPECT_LT(
    fd_max_error({ a }, [&] { return weighted_sum(reshape(a, { 6, 2 }), 3); }),
    kFdTol);
  EXPECT_LT(fd_max_error({ a, c },
                         [&] { return weighted_sum(concat<double>({ a, c }, 1),
                                                   4); }),
            kFdTol);
  EXPECT_LT(fd_max_error({ a }, [&] { return weighted_sum(slice(a, 1, 1, 3),
                                                          5); }),
            kFdTol);
  EXPECT_LT(fd_max_error({ a }, [&] { return weighted_sum(sum(a, 0), 6); }),
            kFdTol);
  EXPECT_LT(fd_max_error({ a }, [&] { return weighted_sum(mean(a, 1), 7); }),
            kFdTol);
  EXPECT_LT(fd_max_error({ a }, [&] { return weighted_sum(row_norm(a), 8); }),
            kFdTol);
}

TEST(TensorGrad, GatherScatterSegment) {
  D a = random_tensor({ 4, 3 }, 9);
  const std::vector<int> index { 2, 0, 2, 3, 1, 2 };
  EXPECT_LT(fd_max_error({ a },
                         [&] { return weighted_sum(gather_rows(a, index), 1); }),
            kFdTol);
  D e = random_tensor({ 6, 3 }, 10);
  EXPECT_LT(fd_max_error({ e },
                         [&] {
                           return weighted_sum(scatter_add_rows(e, index, 5),
                                               2);
                         }),
            kFdTol);
  EXPECT_LT(
    fd_max_error({ e },
                 [&] { return weighted_sum(segment_mean(e, index, 5), 3); }),
    kFdTol);
}

TEST(TensorGrad, Normalizations) {
  D x = random_tensor({ 5, 3 }, 11, -2, 2);
  D g = random_tensor({ 3 }, 12, 0.5, 1.5);
  D b = random_tensor({ 3 }, 13);
  D rm = D::zeros({ 3 }), rv = D::full({ 3 }, 1.0);
  EXPECT_LT(fd_max_error({ x, g, b },
                         [&] {
                           return weighted_sum(
                             batch_norm(x, g, b, rm, rv, true), 1);
                         }),
            1e-6);
  EXPECT_LT(fd_max_error({ x, g, b },
                         [&] {
                           return weighted_sum(layer_norm(x, g, b), 2);
                         }),
            1e-6);
  D w = random_tensor({ 3, 2 }, 14);
  D bias = random_tensor({ 2 }, 15);
  EXPECT_LT(fd_max_error({ x, w, bias },
                         [&] { return weighted_sum(linear(x, w, bias), 3); }),
            kFdTol);
}

TEST(TensorForward, SegmentMeanEmptySegmentIsZero) {
  D a = D::from_data({ 3, 1 }, { 1, 2, 6 });
  const std::vector<int> seg { 0, 0, 2 };
  const D m = segment_mean(a, seg, 3);
  EXPECT_DOUBLE_EQ(m.at(0, 0), 1.5);
  EXPECT_DOUBLE_EQ(m.at(1, 0), 0.0);
  EXPECT_DOUBLE_EQ(m.at(2, 0), 6.0);
}

TEST(TensorForward, SoftplusLargeInputs) {
  D a = D::from_data({ 1, 3 }, { -800.0, 0.0, 800.0 });
  const D s = softplus(a);
  EXPECT_NEAR(s.at(0, 0), 0.0, 1e-300);
  EXPECT_DOUBLE_EQ(s.at(0, 1), std::log(2.0));
  EXPECT_DOUBLE_EQ(s.at(0, 2), 800.0);
}

TEST(TensorForward, BatchNormEvalUsesRunningStats) {
  D x = D::from_data({ 2, 1 }, { 1.0, 3.0 });
  D g = D::full({ 1 }, 2.0), b = D::full({ 1 }, 0.5);
  D rm = D::full({ 1 }, 1.0), rv = D::full({ 1 }, 4.0);
  const D y = batch_norm(x, g, b, rm, rv, false, { 0.1, 0.0 });
  EXPECT_DOUBLE_EQ(y.at(0, 0), 0.5);
  EXPECT_DOUBLE_EQ(y.at(1, 0), 2.0 * 2.0 / 2.0 + 0.5);
}

TEST(TensorForward, ShapeErrors) {
  D a = D::zeros({ 2, 3 }), b = D::zeros({ 3, 2 });
  EXPECT_THROW(add(a, b), ShapeError);
  EXPECT_THROW(matmul(a, a), ShapeError);
  EXPECT_THROW(reshape(a, { 5 }), ShapeError);
}

TEST(Autograd, LeafGradientsAccumulate) {
  D a = D::from_data({ 1 }, { 2.0 }, true);
  sum(square(a)).backward();
  sum(square(a)).backward();
  EXPECT_DOUBLE_EQ(a.grad()[0], 8.0);
  a.zero_grad();
  EXPECT_DOUBLE_EQ(a.grad()[0], 0.0);
}

TEST(Autograd, SharedSubexpression) {
  D a = D::from_data({ 1 }, { 3.0 }, true);
  const D b = mul(a, a);
  sum(add(b, b)).backward();
  EXPECT_DOUBLE_EQ(a.grad()[0], 12.0);
}

TEST(Autograd, NoGradGuardRecordsNothing) {
  D a = D::from_data({ 1 }, { 3.0 }, true);
  {
    NoGradGuard guard;
    const D b = square(a);
    EXPECT_FALSE(b.requires_grad());
  }
  EXPECT_TRUE(square(a).requires_grad());
}

TEST(AdamW, FirstStepMatchesClosedForm) {
  ParamStore<double> store(0);
  D w = store.constant("w", { 2 }, 1.0);
  w.data()[1] = -2.0;
  sum(square(w)).backward();  // grad = 2 w
  AdamW<double> opt(store, { 0.1, 0.9, 0.999, 1e-8, 0.01 });
  opt.step();
  // m_hat = g, v_hat = g^2 -> update = sign(g) up to eps
  for (int k = 0; k < 2; ++k) {
    const double theta = k == 0 ? 1.0 : -2.0;
    const double g = 2 * theta;
    const double expected = theta * (1 - 0.1 * 0.01)
                            - 0.1 * g / (std::abs(g) + 1e-8);
    EXPECT_NEAR(w.data()[k], expected, 1e-15);
  }
}

TEST(AdamW, SecondStepMatchesReference) {
  ParamStore<double> store(0);
  D w = store.constant("w", { 1 }, 0.5);
  const double lr = 0.01, b1 = 0.9, b2 = 0.999, eps = 1e-8, wd = 0.1;
  AdamW<double> opt(store, { lr, b1, b2, eps, wd });
  double theta = 0.5, m = 0, v = 0;
  for (int t = 1; t <= 2; ++t) {
    store.zero_grad();
    sum(mul(w, w)).backward();
    const double g = 2 * theta;
    opt.step();
    m = b1 * m + (1 - b1) * g;
    v = b2 * v + (1 - b2) * g * g;
    theta -= lr * wd * theta;
    theta -= lr * (m / (1 - std::pow(b1, t)))
             / (std::sqrt(v / (1 - std::pow(b2, t))) + eps);
    EXPECT_NEAR(w.data()[0], theta, 1e-15);
  }
}

TEST(LrSchedule, WarmupThenCosine) {
  EXPECT_DOUBLE_EQ(lr_schedule(1, 100, 10, 1.0, 0.0), 0.1);
  EXPECT_DOUBLE_EQ(lr_schedule(10, 100, 10, 1.0, 0.0), 1.0);
  EXPECT_NEAR(lr_schedule(55, 100, 10, 1.0, 0.0), 0.5, 1e-12);
  EXPECT_NEAR(lr_schedule(100, 100, 10, 1.0, 1e-3), 1e-3, 1e-15);
}

TEST(CounterRng, ReproducibleAndIndependent) {
  CounterRng a(7, RngStream::kNoise), b(7, RngStream::kNoise),
    c(7, RngStream::kShuffle);
  bool differs = false;
  for (int k = 0; k < 16; ++k) {
    const double x = a.uniform();
    EXPECT_EQ(x, b.uniform());
    differs = differs || x != c.uniform();
    EXPECT_GE(x, 0.0);
    EXPECT_LT(x, 1.0);
  }
  EXPECT_TRUE(differs);
}

TEST(CounterRng, NormalMoments) {
  CounterRng rng(3, RngStream::kCheck);
  const int n = 200000;
  double s = 0, s2 = 0;
  for (int k = 0; k < n; ++k) {
    const double x = rng.normal();
    s += x;
    s2 += x * x;
  }
  EXPECT_NEAR(s / n, 0.0, 0.01);
  EXPECT_NEAR(s2 / n, 1.0, 0.01);
}

TEST(ParamStore, InitDependsOnlyOnNameAndSeed) {
  ParamStore<double> a(5), b(5);
  a.uniform("x", { 3 }, 1.0);
  const D ya = a.uniform("y", { 4 }, 1.0);
  const D yb = b.uniform("y", { 4 }, 1.0);
  for (int k = 0; k < 4; ++k)
    EXPECT_EQ(ya.data()[k], yb.data()[k]);
  EXPECT_THROW(a.uniform("y", { 4 }, 1.0), std::logic_error);
}

}  // namespace
}  // namespace mvcgt
