#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <vector>

#include "pignet/gradcheck.hpp"
#include "pignet/ops.hpp"

using namespace pignet;
using Td = Tensor<double>;

namespace {

Td random_matrix(std::size_t r, std::size_t c, std::mt19937_64& rng,
                 bool requires_grad = false) {
  std::normal_distribution<double> d(0.0, 1.0);
  std::vector<double> v(r * c);
  for (auto& x : v) x = d(rng);
  return Td::from({r, c}, v, requires_grad);
}

std::vector<double> to_vec(const Td& t) { return {t.data().begin(), t.data().end()}; }

}  // namespace

TEST(Matmul, IdentityLeavesMatrixUnchanged) {
  auto y = matmul(Td::matrix({{1, 0}, {0, 1}}), Td::matrix({{1, 2}, {3, 4}}));
  EXPECT_EQ(to_vec(y), (std::vector<double>{1, 2, 3, 4}));
}

TEST(Matmul, ZeroColumnAnnihilates) {
  auto y = matmul(Td::matrix({{1, 2}}), Td::matrix({{0}, {0}}));
  ASSERT_EQ(y.shape(), (Shape{1, 1}));
  EXPECT_EQ(y[0], 0.0);
}

TEST(Matmul, HandDotProducts) {
  auto y = matmul(Td::matrix({{1, 2}, {3, 4}}), Td::matrix({{5}, {6}}));
  ASSERT_EQ(y.shape(), (Shape{2, 1}));
  EXPECT_EQ(y[0], 17.0);
  EXPECT_EQ(y[1], 39.0);
}

TEST(Matmul, MatchesTripleLoop) {
  std::mt19937_64 rng(3);
  auto a = random_matrix(7, 5, rng), b = random_matrix(5, 4, rng);
  auto y = matmul(a, b);
  for (std::size_t i = 0; i < 7; ++i)
    for (std::size_t j = 0; j < 4; ++j) {
      double s = 0;
      for (std::size_t k = 0; k < 5; ++k) s += a.at(i, k) * b.at(k, j);
      EXPECT_NEAR(y.at(i, j), s, 1e-12);
    }
}

TEST(Matmul, InnerMismatchThrows) {
  EXPECT_THROW(matmul(Td::zeros({2, 3}), Td::zeros({2, 3})), dimension_error);
}

TEST(Matmul, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(5);
  auto a = random_matrix(3, 4, rng, true), b = random_matrix(4, 2, rng, true);
  auto w = random_matrix(3, 2, rng);
  auto r = finite_diff_check<double>([&] { return sum(mul(matmul(a, b), w)); }, {a, b});
  EXPECT_LT(r.max_error, 1e-6);
}

TEST(GroupedMatmul, EachBlockUsesItsOwnMatrix) {
  std::mt19937_64 rng(11);
  auto x = random_matrix(6, 2, rng), a = random_matrix(4, 2, rng);
  auto y = grouped_matmul(x, a, 2);
  for (std::size_t g = 0; g < 2; ++g)
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t j = 0; j < 2; ++j) {
        double s = 0;
        for (std::size_t k = 0; k < 2; ++k) s += x.at(g * 3 + i, k) * a.at(g * 2 + k, j);
        EXPECT_NEAR(y.at(g * 3 + i, j), s, 1e-12);
      }
}

TEST(GroupedMatmul, Gradient) {
  std::mt19937_64 rng(12);
  auto x = random_matrix(6, 3, rng, true), a = random_matrix(6, 3, rng, true);
  auto w = random_matrix(6, 3, rng);
  auto r = finite_diff_check<double>([&] { return sum(mul(grouped_matmul(x, a, 2), w)); },
                                     {x, a});
  EXPECT_LT(r.max_error, 1e-6);
}

TEST(ReduceMax, TwoRows) {
  EXPECT_EQ(to_vec(reduce_max(Td::matrix({{1, 3}, {5, 2}}))), (std::vector<double>{5, 3}));
}

TEST(ReduceMax, SingleRowIsIdentity) {
  EXPECT_EQ(to_vec(reduce_max(Td::matrix({{7, 8}}))), (std::vector<double>{7, 8}));
}

TEST(ReduceMax, TieSendsGradientToFirstRow) {
  auto x = Td::matrix({{2, 2}, {2, 2}}, true);
  auto y = reduce_max(x);
  EXPECT_EQ(to_vec(y), (std::vector<double>{2, 2}));
  backward(sum(y));
  EXPECT_EQ(std::vector<double>(x.grad().begin(), x.grad().end()),
            (std::vector<double>{1, 1, 0, 0}));
}

TEST(ReduceMax, GradientMassIsConservedPerChannel) {
  std::mt19937_64 rng(21);
  auto x = random_matrix(9, 4, rng, true);
  backward(sum(reduce_max(x)));
  for (std::size_t j = 0; j < 4; ++j) {
    double mass = 0;
    for (std::size_t i = 0; i < 9; ++i) mass += x.grad()[i * 4 + j];
    EXPECT_EQ(mass, 1.0);
  }
}

TEST(ReduceMax, EmptyThrows) {
  EXPECT_THROW(reduce_max(Td::zeros({0, 3})), domain_error);
}

TEST(ReduceMean, Examples) {
  EXPECT_EQ(to_vec(reduce_mean(Td::matrix({{1, 3}, {5, 7}}))), (std::vector<double>{3, 5}));
  EXPECT_EQ(to_vec(reduce_mean(Td::matrix({{1, 2}, {2, 4}, {3, 6}}))),
            (std::vector<double>{2, 4}));
  EXPECT_EQ(to_vec(reduce_mean(Td::filled({5, 3}, 0.25))),
            (std::vector<double>{0.25, 0.25, 0.25}));
}

TEST(ReduceMean, MatchesSumOracleOn1024Rows) {
  std::mt19937_64 rng(4);
  auto x = random_matrix(1024, 3, rng);
  auto y = reduce_mean(x);
  for (std::size_t j = 0; j < 3; ++j) {
    double s = 0;
    for (std::size_t i = 0; i < 1024; ++i) s += x.at(i, j);
    EXPECT_NEAR(y[j], s / 1024.0, 1e-12);
  }
}

TEST(Reductions, GradientsMatchFiniteDifferences) {
  std::mt19937_64 rng(8);
  auto x = random_matrix(6, 3, rng, true);
  auto w = random_matrix(1, 3, rng);
  auto wv = reshape(w, {3});
  EXPECT_LT(finite_diff_check<double>([&] { return sum(mul(reduce_mean(x), wv)); }, {x}).max_error,
            1e-6);
  EXPECT_LT(finite_diff_check<double>([&] { return sum(mul(reduce_max(x), wv)); }, {x}).max_error,
            1e-6);
  auto w2 = random_matrix(2, 3, rng);
  EXPECT_LT(finite_diff_check<double>([&] { return sum(mul(segment_max(x, 2), w2)); }, {x})
                .max_error,
            1e-6);
  EXPECT_LT(finite_diff_check<double>([&] { return sum(mul(segment_mean(x, 2), w2)); }, {x})
                .max_error,
            1e-6);
}

TEST(Segment, ReductionsPerGroup) {
  auto x = Td::matrix({{1, 9}, {4, 2}, {-1, 0}, {-3, 5}});
  EXPECT_EQ(to_vec(segment_max(x, 2)), (std::vector<double>{4, 9, -1, 5}));
  EXPECT_EQ(to_vec(segment_mean(x, 2)), (std::vector<double>{2.5, 5.5, -2, 2.5}));
  EXPECT_THROW(segment_max(x, 3), domain_error);
}

TEST(RepeatRows, BroadcastsEachGroup) {
  auto y = repeat_rows(Td::matrix({{1, 2}, {3, 4}}), 2);
  EXPECT_EQ(to_vec(y), (std::vector<double>{1, 2, 1, 2, 3, 4, 3, 4}));
}

TEST(Concat, Columns) {
  auto y = concat(Td::matrix({{1}, {2}}), Td::matrix({{3}, {4}}));
  EXPECT_EQ(to_vec(y), (std::vector<double>{1, 3, 2, 4}));
}

TEST(Concat, EmptyWidthIsNeutral) {
  auto a = Td::matrix({{1, 2}, {3, 4}});
  auto y = concat(a, Td::zeros({2, 0}));
  EXPECT_EQ(y.shape(), a.shape());
  EXPECT_EQ(to_vec(y), to_vec(a));
}

TEST(Concat, ExtentArithmetic) {
  EXPECT_EQ(concat(Td::zeros({5, 64}), Td::zeros({5, 1024})).shape(), (Shape{5, 1088}));
  EXPECT_THROW(concat(Td::zeros({5, 2}), Td::zeros({4, 2})), dimension_error);
}

TEST(Concat, SliceRoundTripIsBitExact) {
  std::mt19937_64 rng(31);
  auto a = random_matrix(4, 3, rng), b = random_matrix(4, 5, rng);
  auto c = concat(a, b);
  EXPECT_EQ(to_vec(slice_cols(c, 0, 3)), to_vec(a));
  EXPECT_EQ(to_vec(slice_cols(c, 3, 8)), to_vec(b));
}

TEST(Concat, Gradient) {
  std::mt19937_64 rng(32);
  auto a = random_matrix(3, 2, rng, true), b = random_matrix(3, 3, rng, true);
  auto w = random_matrix(3, 5, rng);
  auto r = finite_diff_check<double>([&] { return sum(mul(concat(a, b), w)); }, {a, b});
  EXPECT_LT(r.max_error, 1e-6);
}

TEST(Relu, Forward) {
  EXPECT_EQ(to_vec(relu(Td::vector({-1, 0, 2}))), (std::vector<double>{0, 0, 2}));
  EXPECT_EQ(to_vec(relu(Td::vector({0.5, 3, 9}))), (std::vector<double>{0.5, 3, 9}));
}

TEST(Relu, GradientOfSum) {
  auto x = Td::vector({-1, 2}, true);
  backward(sum(relu(x)));
  EXPECT_EQ(x.grad()[0], 0.0);
  EXPECT_EQ(x.grad()[1], 1.0);
  auto y = Td::vector({-1, 2}, true);
  EXPECT_LT(finite_diff_check<double>([&] { return sum(relu(y)); }, {y}).max_error, 1e-6);
}

TEST(Backward, SumGivesOnes) {
  auto x = Td::vector({1, 2, 3}, true);
  backward(sum(x));
  EXPECT_EQ(std::vector<double>(x.grad().begin(), x.grad().end()),
            (std::vector<double>{1, 1, 1}));
}

TEST(Backward, SquareGivesTwiceX) {
  auto x = Td::vector({3}, true);
  backward(sum(mul(x, x)));
  EXPECT_EQ(x.grad()[0], 6.0);
}

TEST(Backward, SecondCallOnSameLossThrows) {
  auto x = Td::vector({1, 2}, true);
  auto loss = sum(mul(x, x));
  backward(loss);
  EXPECT_THROW(backward(loss), usage_error);
}

TEST(Backward, NonScalarLossThrows) {
  auto x = Td::vector({1, 2}, true);
  EXPECT_THROW(backward(scale(x, 2.0)), usage_error);
}

TEST(Backward, SharedSubexpressionAccumulates) {
  auto x = Td::vector({2}, true);
  auto y = mul(x, x);
  backward(sum(add(y, y)));
  EXPECT_EQ(x.grad()[0], 8.0);
}

TEST(Backward, NoGradGuardSkipsRecording) {
  auto x = Td::vector({1, 2}, true);
  Td y;
  {
    NoGradGuard guard;
    y = sum(mul(x, x));
  }
  EXPECT_FALSE(y.requires_grad());
}

TEST(Backward, CompositeMlpMatchesFiniteDifferences) {
  std::mt19937_64 rng(41);
  auto x = random_matrix(5, 3, rng);
  auto w1 = random_matrix(3, 4, rng, true), b1 = Td::from({4}, {0.1, -0.2, 0.3, 0.0}, true);
  auto w2 = random_matrix(4, 2, rng, true);
  auto r = finite_diff_check<double>(
      [&] {
        return sum(mul(matmul(relu(add_bias(matmul(x, w1), b1)), w2),
                       matmul(relu(add_bias(matmul(x, w1), b1)), w2)));
      },
      {w1, b1, w2});
  EXPECT_LT(r.max_error, 1e-6);
}

TEST(GradCheck, SquareAtThree) {
  auto x = Td::vector({3}, true);
  auto r = finite_diff_check<double>([&] { return sum(mul(x, x)); }, {x}, 1e-4);
  EXPECT_LT(r.max_error, 1e-8);
  EXPECT_NEAR(r.worst_analytic, 6.0, 1e-12);
}

TEST(GradCheck, ConstantFunctionHasZeroError) {
  auto x = Td::vector({1, 2}, true);
  auto r = finite_diff_check<double>([&] { return Td::scalar(4.0); }, {x});
  EXPECT_EQ(r.max_error, 0.0);
}

TEST(GradCheck, ReportsDisagreementAtReluKink) {
  auto z = Td::vector({0}, true);
  auto r = finite_diff_check<double>([&] { return sum(relu(z)); }, {z});
  EXPECT_NEAR(r.max_error, 0.5, 1e-9);
}

TEST(GradCheck, NondeterministicFunctionIsRejected) {
  auto x = Td::vector({1}, true);
  int calls = 0;
  EXPECT_THROW(finite_diff_check<double>(
                   [&] { return scale(x, double(++calls)); }, {x}),
               oracle_error);
}

TEST(SoftmaxCrossEntropy, HandComputedTwoByTwo) {
  std::vector<int> labels{0, 1};
  auto loss = softmax_cross_entropy(Td::matrix({{1, 0}, {0, 1}}), labels);
  EXPECT_NEAR(loss.item(), -std::log(std::exp(1.0) / (std::exp(1.0) + 1.0)), 1e-12);
  EXPECT_NEAR(loss.item(), 0.313262, 1e-6);
}

TEST(SoftmaxCrossEntropy, UniformLogitsGiveLogP) {
  std::vector<int> labels{0, 3, 2};
  auto loss = softmax_cross_entropy(Td::zeros({3, 5}), labels);
  EXPECT_NEAR(loss.item(), std::log(5.0), 1e-12);
}

TEST(SoftmaxCrossEntropy, StableForLargeLogits) {
  std::vector<int> labels{1};
  auto loss = softmax_cross_entropy(Td::matrix({{1000, 1020}}), labels);
  EXPECT_TRUE(std::isfinite(loss.item()));
  EXPECT_LT(loss.item(), 1e-6);
}

TEST(SoftmaxCrossEntropy, BadLabelNamesPoint) {
  std::vector<int> labels{0, 7};
  try {
    softmax_cross_entropy(Td::zeros({2, 3}), labels);
    FAIL();
  } catch (const data_error& e) {
    EXPECT_NE(std::string(e.what()).find("point 1"), std::string::npos);
  }
}

TEST(SoftmaxCrossEntropy, Gradient) {
  std::mt19937_64 rng(51);
  auto z = random_matrix(4, 3, rng, true);
  std::vector<int> labels{2, 0, 1, 1};
  auto r = finite_diff_check<double>([&] { return softmax_cross_entropy(z, labels); }, {z});
  EXPECT_LT(r.max_error, 1e-6);
}

TEST(Transpose, GradientAndValues) {
  auto a = Td::matrix({{1, 2, 3}, {4, 5, 6}});
  auto t = transpose(a);
  EXPECT_EQ(t.shape(), (Shape{3, 2}));
  EXPECT_EQ(to_vec(t), (std::vector<double>{1, 4, 2, 5, 3, 6}));
  std::mt19937_64 rng(61);
  auto x = random_matrix(2, 3, rng, true), w = random_matrix(3, 2, rng);
  EXPECT_LT(finite_diff_check<double>([&] { return sum(mul(transpose(x), w)); }, {x}).max_error,
            1e-6);
}

TEST(Tensor, ShapeMismatchOnConstruction) {
  EXPECT_THROW(Td::from({2, 2}, {1, 2, 3}), dimension_error);
}

TEST(Tensor, FloatPrecisionWorks) {
  auto y = matmul(Tensor<float>::matrix({{1, 2}, {3, 4}}), Tensor<float>::matrix({{5}, {6}}));
  EXPECT_EQ(y[0], 17.0f);
  EXPECT_EQ(y[1], 39.0f);
}
