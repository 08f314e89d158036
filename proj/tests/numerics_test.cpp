// Copyright 2026 The maskfed Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <cmath>
#include <numeric>
#include <vector>

#include <gtest/gtest.h>

#include "maskfed/error.hpp"
#include "maskfed/numerics.hpp"
#include "maskfed/rng.hpp"

namespace maskfed {
namespace {

TEST(Philox, KnownAnswerVectors) {
  // Published Philox4x32-10 test vectors.
  using Block = std::array<std::uint32_t, 4>;
  EXPECT_EQ(CounterRng(0, 0).Block(0),
            (Block{0x6627e8d5, 0xe169c58d, 0xbc57ac4c, 0x9b00dbd8}));
  EXPECT_EQ(CounterRng(~0ull, ~0ull).Block(~0ull),
            (Block{0x408f276d, 0x41c83b0e, 0xa20bc7c6, 0x6d5451fd}));
  EXPECT_EQ(CounterRng(0x299f31d0a4093822ull, 0x0370734413198a2eull)
                .Block(0x85a308d3243f6a88ull),
            (Block{0xd16cfe09, 0x94fdcceb, 0x5001e420, 0x24126ea1}));
}

TEST(Philox, StreamsAreIndependentAndReproducible) {
  CounterRng a(7, 1), b(7, 1), c(7, 2);
  for (int i = 0; i < 100; ++i) {
    const auto x = a.NextU64();
    EXPECT_EQ(x, b.NextU64());
    EXPECT_NE(x, c.NextU64());
  }
}

TEST(Philox, UniformAndNormalMoments) {
  CounterRng rng(3, 9);
  const int n = 200000;
  double su = 0, sn = 0, sn2 = 0;
  for (int i = 0; i < n; ++i) {
    const double u = rng.Uniform();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
    su += u;
    const double z = rng.Normal();
    sn += z;
    sn2 += z * z;
  }
  EXPECT_NEAR(su / n, 0.5, 0.005);
  EXPECT_NEAR(sn / n, 0.0, 0.01);
  EXPECT_NEAR(sn2 / n, 1.0, 0.02);
}

TEST(Philox, GammaMeanMatchesShape) {
  for (double shape : {0.1, 0.5, 1.0, 3.0}) {
    CounterRng rng(5, 11);
    double total = 0.0;
    const int n = 100000;
    for (int i = 0; i < n; ++i) total += rng.Gamma(shape);
    EXPECT_NEAR(total / n, shape, 0.03 * std::max(1.0, shape)) << shape;
  }
}

TEST(Philox, UniformIntIsUnbiased) {
  CounterRng rng(1, 4);
  std::vector<int> counts(6, 0);
  for (int i = 0; i < 60000; ++i) ++counts[rng.UniformInt(6)];
  for (int c : counts) EXPECT_NEAR(c, 10000, 400);
}

TEST(Softmax, Examples) {
  const auto a = Softmax(std::vector<double>{0, 0, 0}, 1.0);
  for (double v : a) EXPECT_DOUBLE_EQ(v, 1.0 / 3.0);
  EXPECT_EQ(Softmax(std::vector<double>{-4.2}, 0.3), std::vector<double>{1.0});
  const auto b = Softmax(std::vector<double>{std::log(1.0), std::log(2.0), std::log(3.0)});
  EXPECT_NEAR(b[0], 1.0 / 6.0, 1e-15);
  EXPECT_NEAR(b[1], 2.0 / 6.0, 1e-15);
  EXPECT_NEAR(b[2], 3.0 / 6.0, 1e-15);
}

TEST(Softmax, ExtremeTemperaturesStayNormalized) {
  const std::vector<double> l = {1000.0, -1000.0, 3.0};
  for (double tau : {1e-6, 1e-3, 1.0, 1e6}) {
    const auto p = Softmax(l, tau);
    EXPECT_NEAR(std::accumulate(p.begin(), p.end(), 0.0), 1.0, 1e-12);
    for (double v : p) EXPECT_TRUE(v >= 0.0 && v <= 1.0);
  }
}

TEST(Softmax, RejectsBadInput) {
  EXPECT_THROW(Softmax(std::vector<double>{}), Error);
  EXPECT_THROW(Softmax(std::vector<double>{1.0, NAN}), Error);
  EXPECT_THROW(Softmax(std::vector<double>{1.0}, 0.0), Error);
}

TEST(Cosine, Examples) {
  EXPECT_NEAR(CosineSimilarity(std::vector<double>{1, 2, 3}, std::vector<double>{1, 2, 3}), 1.0, 1e-15);
  EXPECT_EQ(CosineSimilarity(std::vector<double>{1, 0}, std::vector<double>{0, 1}), 0.0);
  EXPECT_NEAR(CosineSimilarity(std::vector<double>{1, 1}, std::vector<double>{1, 0}),
              0.7071067812, 1e-9);
}

TEST(Cosine, ZeroNormIsDegenerate) {
  try {
    CosineSimilarity(std::vector<double>{0, 0}, std::vector<double>{1, 0});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kDegenerateInput);
  }
}

TEST(Cosine, MatrixBackwardMatchesFiniteDifferences) {
  CounterRng rng(0, 77);
  Matrix x(3, 5), y(4, 5), up(3, 4);
  for (double& v : x.data) v = rng.Normal();
  for (double& v : y.data) v = rng.Normal();
  for (double& v : up.data) v = rng.Normal();
  const auto f = [&](std::span<const double> theta) {
    Matrix m = x;
    std::copy(theta.begin(), theta.end(), m.data.begin());
    const Matrix s = CosineMatrix(m, y);
    double total = 0.0;
    for (std::size_t k = 0; k < s.size(); ++k) total += s.data[k] * up.data[k];
    return total;
  };
  EXPECT_LE(GradCheck(f, CosineMatrixBackward(x, y, up).data, x.data), 1e-7);
}

TEST(Entropy, Examples) {
  EXPECT_EQ(Entropy(std::vector<double>{1, 0, 0}), 0.0);
  EXPECT_NEAR(Entropy(std::vector<double>{0.5, 0.5}), std::log(2.0), 1e-15);
  EXPECT_NEAR(Entropy(std::vector<double>(4, 0.25)), std::log(4.0), 1e-15);
}

TEST(GradCheck, QuadraticIsExact) {
  const std::vector<double> theta = {1.0, 2.0};
  const auto f = [](std::span<const double> t) { return t[0] * t[0] + t[1] * t[1]; };
  EXPECT_LT(GradCheck(f, std::vector<double>{2.0, 4.0}, theta), 1e-8);
}

TEST(GradCheck, NonFiniteObjectiveNamesIndex) {
  const auto f = [](std::span<const double> t) { return t[1] > 0.5 ? NAN : 0.0; };
  try {
    GradCheck(f, std::vector<double>{0.0, 0.0}, std::vector<double>{0.0, 0.5});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kCheckFailed);
    EXPECT_NE(std::string(e.what()).find("1"), std::string::npos);
  }
}

}  // namespace
}  // namespace maskfed
