#include <gtest/gtest.h>

#include <cmath>

#include "hmvgg/autograd.hpp"
#include "hmvgg/rng.hpp"

using namespace hmvgg;

namespace {

Tensor randf(Shape shape, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
    Rng rng(seed);
    Tensor t(std::move(shape));
    for (std::int64_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform(lo, hi);
    return t;
}

}  // namespace

TEST(Tape, LeafHoldsValueAndFlag) {
    Tape tape;
    Variable x = tape.leaf(Tensor::scalar(2.0), true);
    Variable c = tape.leaf(Tensor::scalar(3.0));
    EXPECT_TRUE(x.requires_grad());
    EXPECT_FALSE(c.requires_grad());
    EXPECT_DOUBLE_EQ(x.value().item(), 2.0);
    EXPECT_EQ(tape.size(), 2);
}

TEST(Backward, SumGivesOnes) {
    Tape tape;
    Variable x = tape.leaf(randf(Shape{2, 3}, 1), true);
    Variable loss = sum_all(x);
    GradientMap g = backward(tape, loss);
    Tensor dx = g.grad(x);
    ASSERT_EQ(dx.shape(), (Shape{2, 3}));
    for (std::int64_t i = 0; i < dx.numel(); ++i) EXPECT_DOUBLE_EQ(dx[i], 1.0);
}

TEST(Backward, FanOutAccumulates) {
    // loss = sum(x + x) so each element contributes twice
    Tape tape;
    Variable x = tape.leaf(randf(Shape{4}, 2), true);
    Variable loss = sum_all(add(x, x));
    GradientMap g = backward(tape, loss);
    Tensor dx = g.grad(x);
    for (std::int64_t i = 0; i < dx.numel(); ++i) EXPECT_DOUBLE_EQ(dx[i], 2.0);
}

TEST(Backward, OffPathVariableReadsZero) {
    Tape tape;
    Variable x = tape.leaf(randf(Shape{3}, 3), true);
    Variable y = tape.leaf(randf(Shape{3}, 4), true);
    Variable loss = sum_all(mul(x, x));
    GradientMap g = backward(tape, loss);
    EXPECT_TRUE(g.reached(x));
    EXPECT_FALSE(g.reached(y));
    Tensor dy = g.grad(y);
    ASSERT_EQ(dy.shape(), (Shape{3}));
    for (std::int64_t i = 0; i < 3; ++i) EXPECT_DOUBLE_EQ(dy[i], 0.0);
}

TEST(Backward, SecondSweepThrows) {
    Tape tape;
    Variable x = tape.leaf(Tensor::scalar(1.0), true);
    Variable loss = mul(x, x);
    backward(tape, loss);
    EXPECT_TRUE(tape.consumed());
    EXPECT_THROW(backward(tape, loss), Error);
}

TEST(Backward, NonScalarLossThrows) {
    Tape tape;
    Variable x = tape.leaf(randf(Shape{2, 2}, 5), true);
    Variable y = add(x, x);
    EXPECT_THROW(backward(tape, y), ShapeError);
}

TEST(Backward, MulProductRule) {
    Tape tape;
    Tensor xv = Tensor::from_data(Shape{2}, {3.0, -2.0});
    Tensor yv = Tensor::from_data(Shape{2}, {5.0, 7.0});
    Variable x = tape.leaf(xv, true);
    Variable y = tape.leaf(yv, true);
    GradientMap g = backward(tape, sum_all(mul(x, y)));
    Tensor dx = g.grad(x), dy = g.grad(y);
    EXPECT_DOUBLE_EQ(dx[0], 5.0);
    EXPECT_DOUBLE_EQ(dx[1], 7.0);
    EXPECT_DOUBLE_EQ(dy[0], 3.0);
    EXPECT_DOUBLE_EQ(dy[1], -2.0);
}

TEST(Backward, BroadcastReducesGradient) {
    // y = x + b with b shaped [1, 3]: db sums over the broadcast rows
    Tape tape;
    Variable x = tape.leaf(randf(Shape{4, 3}, 6), true);
    Variable b = tape.leaf(randf(Shape{1, 3}, 7), true);
    GradientMap g = backward(tape, sum_all(add(x, b)));
    Tensor db = g.grad(b);
    ASSERT_EQ(db.shape(), (Shape{1, 3}));
    for (std::int64_t i = 0; i < 3; ++i) EXPECT_DOUBLE_EQ(db[i], 4.0);
}

TEST(Backward, SigmoidSlopeAtZero) {
    Tape tape;
    Variable x = tape.leaf(Tensor::scalar(0.0), true);
    GradientMap g = backward(tape, sigmoid(x));
    EXPECT_DOUBLE_EQ(g.grad(x).item(), 0.25);
}

TEST(Backward, ReluSubgradientZeroAtKink) {
    Tape tape;
    Variable x = tape.leaf(Tensor::from_data(Shape{3}, {-1.0, 0.0, 2.0}), true);
    GradientMap g = backward(tape, sum_all(relu(x)));
    Tensor dx = g.grad(x);
    EXPECT_DOUBLE_EQ(dx[0], 0.0);
    EXPECT_DOUBLE_EQ(dx[1], 0.0);
    EXPECT_DOUBLE_EQ(dx[2], 1.0);
}

TEST(Backward, ReduceMaxRoutesToFirstMax) {
    Tape tape;
    Variable x = tape.leaf(Tensor::from_data(Shape{4}, {2.0, 5.0, 5.0, 1.0}), true);
    GradientMap g = backward(tape, sum_all(reduce_max(x, {0}, false)));
    Tensor dx = g.grad(x);
    EXPECT_DOUBLE_EQ(dx[0], 0.0);
    EXPECT_DOUBLE_EQ(dx[1], 1.0);
    EXPECT_DOUBLE_EQ(dx[2], 0.0);
    EXPECT_DOUBLE_EQ(dx[3], 0.0);
}

TEST(Backward, ReshapePreservesGradient) {
    Tape tape;
    Tensor xv = randf(Shape{2, 6}, 8);
    Variable x = tape.leaf(xv, true);
    Variable y = reshape(x, Shape{3, 4});
    GradientMap g = backward(tape, sum_all(mul(y, y)));
    Tensor dx = g.grad(x);
    ASSERT_EQ(dx.shape(), (Shape{2, 6}));
    for (std::int64_t i = 0; i < 12; ++i) EXPECT_DOUBLE_EQ(dx[i], 2.0 * xv[i]);
}

TEST(Backward, ConcatSplitsGradient) {
    Tape tape;
    Variable a = tape.leaf(randf(Shape{2, 2}, 9), true);
    Variable b = tape.leaf(randf(Shape{2, 3}, 10), true);
    Variable cat = concat({a, b}, 1);
    ASSERT_EQ(cat.shape(), (Shape{2, 5}));
    Tensor w = randf(Shape{2, 5}, 11);
    GradientMap g = backward(tape, sum_all(mul(cat, tape.leaf(w))));
    Tensor da = g.grad(a), db = g.grad(b);
    EXPECT_DOUBLE_EQ(da.at({1, 1}), w.at({1, 1}));
    EXPECT_DOUBLE_EQ(db.at({0, 0}), w.at({0, 2}));
    EXPECT_DOUBLE_EQ(db.at({1, 2}), w.at({1, 4}));
}

TEST(Backward, NoGradInputsSkipBackwardFns) {
    // Constant subgraphs stay constant: gradients only reach marked leaves.
    Tape tape;
    Variable x = tape.leaf(randf(Shape{3}, 12), true);
    Variable c = tape.leaf(randf(Shape{3}, 13), false);
    Variable y = mul(add(x, c), c);
    GradientMap g = backward(tape, sum_all(y));
    EXPECT_TRUE(g.reached(x));
    EXPECT_FALSE(g.reached(c));
    Tensor dx = g.grad(x);
    Tensor cv = c.value();
    for (std::int64_t i = 0; i < 3; ++i) EXPECT_DOUBLE_EQ(dx[i], cv[i]);
}

TEST(GradCheck, QuadraticIsNearExact) {
    Tensor x = randf(Shape{2, 3}, 14);
    double err = grad_check(
        [](Tape&, const Variable& v) { return sum_all(mul(v, v)); }, x);
    EXPECT_LT(err, 1e-8);
}

TEST(GradCheck, SigmoidSumUnderTolerance) {
    Tensor x = randf(Shape{2, 3}, 15);
    double err = grad_check(
        [](Tape&, const Variable& v) { return sum_all(sigmoid(v)); }, x);
    EXPECT_LT(err, 1e-6);
}

TEST(GradCheck, LinearSumIsExact) {
    // a linear map has an exact central difference, so only the rounding of
    // the probe sums themselves can show up
    Tensor x = randf(Shape{5}, 16);
    double err = grad_check([](Tape&, const Variable& v) { return sum_all(v); }, x);
    EXPECT_LT(err, 1e-12);
}

TEST(GradCheck, MatmulUnderTolerance) {
    Tensor x = randf(Shape{3, 4}, 17);
    Tensor w = randf(Shape{4, 2}, 18);
    double err = grad_check(
        [&w](Tape& t, const Variable& v) {
            Variable y = matmul(v, t.leaf(w));
            return sum_all(mul(y, y));
        },
        x);
    EXPECT_LT(err, 1e-6);
}
