#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <random>
#include <vector>

#include "pignet/config.hpp"
#include "pignet/gradcheck.hpp"
#include "pignet/inception.hpp"

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

std::size_t final_width(const std::vector<std::size_t>& plan) {
  Rng rng(0);
  InceptionStack<float> stack(3, plan, rng);
  std::vector<float> pts(2 * 3, 0.5f);
  return inception_stack_forward(Tensor<float>::from({2, 3}, pts), stack).dim(1);
}

}  // namespace

TEST(Inception, WidthIsThreeTimesFilters) {
  Rng rng(1);
  InceptionLayer<double> layer(3, 64, rng);
  std::mt19937_64 r(1);
  auto y = inception_forward(random_matrix(5, 3, r), layer);
  EXPECT_EQ(y.shape(), (Shape{5, 192}));
  EXPECT_EQ(inception_width(64), 64u + 32u + 32u + 64u);
  for (std::size_t e : {2u, 8u, 16u, 24u, 128u}) {
    InceptionLayer<double> l(4, e, rng);
    EXPECT_EQ(inception_forward(random_matrix(3, 4, r), l).dim(1), 3 * e);
  }
}

TEST(Inception, SinglePointHasNoCrossPointInteraction) {
  Rng rng(2);
  InceptionLayer<double> layer(3, 8, rng);
  std::mt19937_64 r(2);
  auto x = random_matrix(6, 3, r);
  auto all = inception_forward(x, layer);
  for (std::size_t i = 0; i < 6; ++i) {
    auto row = Td::from({1, 3}, {x.at(i, 0), x.at(i, 1), x.at(i, 2)});
    auto one = inception_forward(row, layer);
    ASSERT_EQ(one.shape(), (Shape{1, 24}));
    for (std::size_t j = 0; j < 24; ++j) EXPECT_EQ(one[j], all.at(i, j));
  }
}

TEST(Inception, OddFilterCountRejected) {
  Rng rng(3);
  EXPECT_THROW(InceptionLayer<double>(3, 7, rng), config_error);
}

TEST(Inception, PermutationEquivariance) {
  Rng rng(4);
  InceptionLayer<double> layer(3, 8, rng);
  std::mt19937_64 r(4);
  auto x = random_matrix(9, 3, r);
  std::vector<std::size_t> perm(9);
  std::iota(perm.begin(), perm.end(), 0u);
  std::shuffle(perm.begin(), perm.end(), r);
  std::vector<double> px;
  for (auto i : perm)
    for (std::size_t j = 0; j < 3; ++j) px.push_back(x.at(i, j));
  auto a = inception_forward(x, layer);
  auto b = inception_forward(Td::from({9, 3}, px), layer);
  for (std::size_t i = 0; i < 9; ++i)
    for (std::size_t j = 0; j < 24; ++j) EXPECT_EQ(b.at(i, j), a.at(perm[i], j));
}

TEST(Inception, BranchLayout) {
  Rng rng(5);
  InceptionLayer<double> layer(3, 8, rng);
  ParameterSet<double> set;
  layer.collect("l", set);
  std::vector<std::pair<std::string, Shape>> weights;
  for (const auto& p : set.params)
    if (p.name.ends_with(".weight")) weights.push_back({p.name, p.tensor.shape()});
  ASSERT_EQ(weights.size(), 4u);
  EXPECT_EQ(weights[0].second, (Shape{3, 8}));
  EXPECT_EQ(weights[1].second, (Shape{8, 4}));
  EXPECT_EQ(weights[2].second, (Shape{8, 4}));
  EXPECT_EQ(weights[3].second, (Shape{8, 8}));
}

TEST(InceptionStack, ReducedPlanWidth) {
  EXPECT_EQ(final_width({8, 16}), 48u);
  EXPECT_EQ(stack_width({8, 16}), 48u);
}

TEST(InceptionStack, DefaultAndAblationPlanWidths) {
  EXPECT_EQ(stack_width({64, 128, 256}), 768u);
  EXPECT_EQ(stack_width({64, 128, 256, 512}), 1536u);
  EXPECT_EQ(stack_width({64, 128, 256, 512, 1024}), 3072u);
  EXPECT_EQ(ModelConfig{}.local_width(), 1536u);
  EXPECT_EQ(final_width({64, 128, 256}), 768u);
}

TEST(InceptionStack, RequiresPointInput) {
  Rng rng(6);
  InceptionStack<double> stack(3, {8}, rng);
  EXPECT_THROW(inception_stack_forward(Td::zeros({4, 2}), stack), dimension_error);
}

TEST(Inception, GradientInTrainMode) {
  Rng rng(7);
  InceptionLayer<double> layer(3, 4, rng);
  std::mt19937_64 r(7);
  auto x = random_matrix(6, 3, r, true);
  auto w = random_matrix(6, 12, r);
  ParameterSet<double> set;
  layer.collect("l", set);
  auto params = set.tensors();
  params.push_back(x);
  auto res = finite_diff_check<double>(
      [&] { return sum(mul(layer(x, Mode::train), w)); }, params);
  EXPECT_LT(res.max_error, 1e-3);
}
