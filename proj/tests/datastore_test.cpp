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

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numeric>
#include <set>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "maskfed/client.hpp"
#include "maskfed/datastore.hpp"

namespace maskfed {
namespace {

std::vector<std::uint8_t> ReadFile(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

const std::string kFixture = std::string(MASKFED_TEST_DATA_DIR) + "/two_class.femb";

EmbeddingBank BalancedBank(std::size_t n, std::size_t classes, std::size_t dim = 3) {
  EmbeddingBank b;
  b.dim = dim;
  for (std::size_t c = 0; c < classes; ++c) b.class_names.push_back("k" + std::to_string(c));
  b.text_features = Matrix(classes, dim);
  b.features = Matrix(n, dim);
  for (std::size_t i = 0; i < n; ++i) {
    b.labels.push_back(static_cast<int>(i % classes));
    b.features(i, 0) = static_cast<double>(i);  // unique id
  }
  return b;
}

std::multiset<double> Ids(const EmbeddingBank& b) {
  std::multiset<double> ids;
  for (std::size_t i = 0; i < b.size(); ++i) ids.insert(b.features(i, 0));
  return ids;
}

TEST(Femb, HandAuthoredFixture) {
  const EmbeddingBank b = LoadBank(kFixture);
  EXPECT_EQ(b.dim, 4u);
  EXPECT_EQ(b.classes(), 2u);
  EXPECT_EQ(b.size(), 3u);
  EXPECT_EQ(b.class_names, (std::vector<std::string>{"benign", "malignant"}));
  EXPECT_EQ(b.text_features.data, (std::vector<double>{1, 0, 0, 0, 0, 1, 0, 0}));
  EXPECT_EQ(b.labels, (std::vector<int>{0, 1, 1}));
  EXPECT_EQ(b.features.data,
            (std::vector<double>{0.5, -1, 0.25, 2, 1.5, 0, -0.75, 3, 0, 0, 0, 1}));
  EXPECT_EQ(SerializeBank(b), ReadFile(kFixture));
}

TEST(Femb, EmptyBankLoadsButCannotBeSplit) {
  EmbeddingBank b = BalancedBank(0, 2);
  const auto parsed = ParseBank(SerializeBank(b));
  EXPECT_TRUE(parsed.empty());
  EXPECT_THROW(SplitBank(parsed, SplitSpec{}), Error);
}

void ExpectParseError(std::vector<std::uint8_t> bytes, const std::string& needle) {
  try {
    ParseBank(bytes);
    FAIL() << needle;
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kParse);
    EXPECT_NE(std::string(e.what()).find(needle), std::string::npos) << e.what();
  }
}

TEST(Femb, DistinctParseErrors) {
  const auto good = ReadFile(kFixture);
  auto bad = good;
  bad[1] = 'X';
  ExpectParseError(bad, "bad magic");
  bad = good;
  bad[5] = 7;
  ExpectParseError(bad, "unsupported version");
  bad = good;
  bad.resize(bad.size() - 1);
  ExpectParseError(bad, "truncated");
  bad = good;
  bad[good.size() - 17] = 5;  // label of the last record
  ExpectParseError(bad, "label 5 of sample 2");
  bad = good;
  bad.push_back(0);
  ExpectParseError(bad, "trailing");
}

TEST(Femb, RoundTripIsExact) {
  const auto data = GenerateSynthetic({2, 8, 3, 20, ShiftMode::kHaar, 1.0, 0.2, 4});
  const std::string path = testing::TempDir() + "/roundtrip.femb";
  WriteBank(path, data.clients[1]);
  EXPECT_EQ(LoadBank(path), data.clients[1]);
}

TEST(LargestRemainder, ExactTotals) {
  EXPECT_EQ(LargestRemainder(std::vector<double>{0.6, 0.2, 0.2}, 7),
            (std::vector<std::size_t>{4, 2, 1}));
  EXPECT_EQ(LargestRemainder(std::vector<double>{1, 1, 1}, 10),
            (std::vector<std::size_t>{4, 3, 3}));
  EXPECT_EQ(LargestRemainder(std::vector<double>{0, 5}, 3), (std::vector<std::size_t>{0, 3}));
}

TEST(Split, BalancedTenIsSixTwoTwo) {
  const auto s = SplitBank(BalancedBank(10, 2), SplitSpec{});
  EXPECT_EQ(s.train.size(), 6u);
  EXPECT_EQ(s.val.size(), 2u);
  EXPECT_EQ(s.test.size(), 2u);
}

TEST(Split, SevenSingleClassIsFiveOneOne) {
  const auto s = SplitBank(BalancedBank(7, 1), SplitSpec{});
  EXPECT_EQ(s.train.size(), 5u);
  EXPECT_EQ(s.val.size(), 1u);
  EXPECT_EQ(s.test.size(), 1u);
}

TEST(Split, DeterministicPartition) {
  const auto bank = BalancedBank(53, 3);
  const auto a = SplitBank(bank, SplitSpec{0.6, 0.2, 0.2, 9});
  const auto b = SplitBank(bank, SplitSpec{0.6, 0.2, 0.2, 9});
  EXPECT_EQ(a.train, b.train);
  EXPECT_EQ(a.test, b.test);
  std::multiset<double> all = Ids(a.train);
  for (double v : Ids(a.val)) all.insert(v);
  for (double v : Ids(a.test)) all.insert(v);
  EXPECT_EQ(all, Ids(bank));
}

TEST(Split, SmallClassGoesToTrainWithWarning) {
  auto bank = BalancedBank(12, 2);
  bank.class_names.push_back("rare");
  bank.text_features = Matrix(3, 3);
  bank.labels[0] = 2;
  const auto s = SplitBank(bank, SplitSpec{});
  ASSERT_EQ(s.warnings.size(), 1u);
  EXPECT_NE(s.warnings[0].find("class 2"), std::string::npos);
  EXPECT_EQ(std::count(s.train.labels.begin(), s.train.labels.end(), 2), 1);
}

TEST(Dirichlet, ExactPartitionOverRandomBanks) {
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    CounterRng rng(seed, 40);
    const auto bank = BalancedBank(20 + rng.UniformInt(100), 2 + rng.UniformInt(4));
    const auto parts = DirichletPartition(bank, 2 + rng.UniformInt(4), 0.5, seed);
    std::multiset<double> all;
    for (const auto& p : parts) {
      EXPECT_FALSE(p.empty());
      for (double v : Ids(p)) all.insert(v);
    }
    EXPECT_EQ(all, Ids(bank));
  }
}

TEST(Dirichlet, RejectsBadArguments) {
  const auto bank = BalancedBank(20, 2);
  EXPECT_THROW(DirichletPartition(bank, 1, 0.5, 0), Error);
  EXPECT_THROW(DirichletPartition(bank, 3, 0.0, 0), Error);
  try {
    DirichletPartition(BalancedBank(2, 2), 5, 0.5, 0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kDegenerateInput);
  }
}

TEST(Synthetic, SameSeedSameBanks) {
  const SyntheticSpec spec;
  const auto a = GenerateSynthetic(spec);
  const auto b = GenerateSynthetic(spec);
  ASSERT_EQ(a.clients.size(), 3u);
  for (std::size_t k = 0; k < 3; ++k) EXPECT_EQ(a.clients[k], b.clients[k]);
  EXPECT_EQ(a.global, b.global);
  SyntheticSpec other = spec;
  other.seed = 1;
  EXPECT_NE(GenerateSynthetic(other).clients[0], a.clients[0]);
}

TEST(Synthetic, NoShiftNoNoiseIsZeroShotPerfect) {
  SyntheticSpec spec;
  spec.shift = ShiftMode::kNone;
  spec.noise = 0.0;
  spec.samples_per_client = 40;
  const auto data = GenerateSynthetic(spec);
  const auto& b = data.clients[0];
  for (std::size_t i = 0; i < b.size(); ++i) {
    const auto row = b.features.row(i);
    const auto proto = b.text_features.row(static_cast<std::size_t>(b.labels[i]));
    EXPECT_TRUE(std::equal(row.begin(), row.end(), proto.begin()));
  }
  // A FAM whose gate is saturated open is the identity, so this is plain
  // cosine zero-shot classification.
  FamModel fam(spec.dim);
  fam.layer2.bias.assign(spec.dim, 50.0);
  const Matrix probs = FamProbabilities(fam, b, 0.01);
  for (std::size_t i = 0; i < b.size(); ++i) {
    EXPECT_EQ(static_cast<int>(ArgMax(probs.row(i))), b.labels[i]);
  }
}

TEST(Synthetic, ShiftModesParse) {
  for (auto m : {ShiftMode::kNone, ShiftMode::kRotation, ShiftMode::kHaar, ShiftMode::kScaling}) {
    EXPECT_EQ(ParseShiftMode(ShiftModeName(m)), m);
  }
  EXPECT_THROW(ParseShiftMode("twist"), Error);
}

TEST(Synthetic, HaarTransformIsOrthogonal) {
  CounterRng rng(0, 41);
  const auto q = synth_detail::HaarOrthogonal(6, rng);
  EXPECT_LE((q.transpose() * q - Eigen::MatrixXd::Identity(6, 6)).norm(), 1e-12);
  const auto r = synth_detail::RandomRotation(6, 0.5, rng);
  EXPECT_LE((r.transpose() * r - Eigen::MatrixXd::Identity(6, 6)).norm(), 1e-12);
  EXPECT_NEAR(r.determinant(), 1.0, 1e-12);
}

}  // namespace
}  // namespace maskfed
