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
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "maskfed/masked_layers.hpp"
#include "maskfed/rng.hpp"
#include "maskfed/wire_codec.hpp"

namespace maskfed {
namespace {

std::vector<std::uint8_t> ReadFile(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

// Independent binary16 quantizer: enumerate every finite non-negative half
// value and pick the nearest, breaking exact ties toward an even mantissa.
class HalfOracle {
 public:
  HalfOracle() {
    for (int e = 0; e < 31; ++e) {
      for (int m = 0; m < 1024; ++m) {
        const double v = e == 0 ? std::ldexp(m, -24) : std::ldexp(1024 + m, e - 25);
        values_.push_back(v);
      }
    }
  }

  double Quantize(double x) const {
    const double a = std::fabs(x);
    if (a >= values_.back()) return std::copysign(values_.back(), x);
    const auto hi = std::upper_bound(values_.begin(), values_.end(), a);
    const auto lo = hi - 1;
    const double dl = a - *lo;
    const double dh = *hi - a;
    double pick;
    if (dl < dh) {
      pick = *lo;
    } else if (dh < dl) {
      pick = *hi;
    } else {
      pick = ((lo - values_.begin()) % 2 == 0) ? *lo : *hi;
    }
    return std::copysign(pick, x);
  }

 private:
  std::vector<double> values_;  // index == bit pattern
};

TEST(HalfQuantizer, MatchesOracleOnRandomValues) {
  const HalfOracle oracle;
  CounterRng rng(0, 30);
  double worst = 0.0;
  for (int i = 0; i < 100000; ++i) {
    const double mag = std::ldexp(rng.Uniform(1.0, 2.0), static_cast<int>(rng.UniformInt(40)) - 26);
    const double x = rng.Uniform() < 0.5 ? -mag : mag;
    const double q = QuantizeHalf(x);
    ASSERT_EQ(q, oracle.Quantize(x)) << x;
    if (std::fabs(x) >= std::ldexp(1.0, -14) && std::fabs(x) <= 65504.0) {
      worst = std::max(worst, std::fabs(q - x) / std::fabs(x));
    }
  }
  EXPECT_LE(worst, std::ldexp(1.0, -11));
}

TEST(HalfQuantizer, TiesRoundToEven) {
  const double ulp = std::ldexp(1.0, -10);
  EXPECT_EQ(QuantizeHalf(1.0 + ulp / 2), 1.0);
  EXPECT_EQ(QuantizeHalf(1.0 + 3 * ulp / 2), 1.0 + 2 * ulp);
  EXPECT_EQ(QuantizeHalf(std::ldexp(1.0, -25)), 0.0);
  EXPECT_EQ(QuantizeHalf(3 * std::ldexp(1.0, -25)), std::ldexp(1.0, -23));
}

TEST(HalfQuantizer, SaturatesAndKeepsSignedZero) {
  EXPECT_EQ(QuantizeHalf(1e6), 65504.0);
  EXPECT_EQ(QuantizeHalf(-70000.0), -65504.0);
  EXPECT_EQ(DoubleToHalf(-0.0), 0x8000);
  EXPECT_EQ(DoubleToHalf(65519.0), 0x7BFF);
}

TEST(HalfQuantizer, SubnormalAbsoluteBound) {
  CounterRng rng(0, 31);
  for (int i = 0; i < 10000; ++i) {
    const double x = rng.Uniform(-1.0, 1.0) * std::ldexp(1.0, -14);
    EXPECT_LE(std::fabs(QuantizeHalf(x) - x), std::ldexp(1.0, -25));
  }
}

TEST(Payload, GoldenHeaderBytes) {
  const auto golden = ReadFile(std::string(MASKFED_TEST_DATA_DIR) + "/golden_header.bin");
  ASSERT_EQ(golden.size(), 23u);
  EXPECT_EQ(SerializePayload({{"w", {2}, {1.0, -2.0}}}), golden);
  EXPECT_EQ(ParsePayload(golden), (TensorList{{"w", {2}, {1.0, -2.0}}}));
}

TEST(Payload, EmptyListRoundTrips) {
  const auto raw = SerializePayload({});
  EXPECT_EQ(raw, (std::vector<std::uint8_t>{'F', 'M', 'C', '1', 0, 1, 0, 0, 0, 0}));
  EXPECT_TRUE(Unpack(Pack({})).empty());
}

TEST(Pack, ZerosRoundTripAndCompress) {
  const TensorList zeros = {{"z", {10, 10}, std::vector<double>(100, 0.0)}};
  const auto packet = Pack(zeros);
  EXPECT_EQ(Unpack(packet), zeros);
  EXPECT_LT(packet.bytes.size() * 4, packet.raw_size);
}

TEST(Pack, RepresentableValuesAreExact) {
  const TensorList t = {{"a", {2, 2}, {0.5, -1.25, 1024.0, std::ldexp(1.0, -20)}}};
  EXPECT_EQ(Unpack(Pack(t)), t);
}

TEST(Pack, PreservesNamesShapesOrder) {
  CounterRng rng(0, 32);
  TensorList t = {{"z.last", {1}, {}}, {"a.first", {2, 3}, {}}, {"m", {2, 1, 2}, {}}, {"s", {}, {}}};
  for (auto& x : t) {
    x.values.resize(x.element_count());
    for (double& v : x.values) v = rng.Normal();
  }
  for (bool compress : {true, false}) {
    const auto back = Unpack(Pack(t, compress));
    ASSERT_EQ(back.size(), t.size());
    for (std::size_t k = 0; k < t.size(); ++k) {
      EXPECT_EQ(back[k].name, t[k].name);
      EXPECT_EQ(back[k].shape, t[k].shape);
    }
  }
}

TEST(Pack, UncompressedModeIsFloat32) {
  const TensorList t = {{"x", {3}, {0.1, -3.3, 1e-30}}};
  const auto back = Unpack(Pack(t, false));
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(back[0].values[i], static_cast<double>(static_cast<float>(t[0].values[i])));
  }
  std::vector<WireDtype> dtypes;
  ParsePayload(Inflate(Pack(t, false).bytes), &dtypes);
  EXPECT_EQ(dtypes, std::vector<WireDtype>{WireDtype::kFloat32});
}

TEST(Pack, IsIdempotent) {
  CounterRng rng(0, 33);
  TensorList t = {{"w", {50}, std::vector<double>(50)}};
  for (double& v : t[0].values) v = 10.0 * rng.Normal();
  const auto once = Pack(t);
  EXPECT_EQ(Pack(Unpack(once)).bytes, once.bytes);
}

TEST(Pack, FamSizedPacketRatio) {
  FamModel fam(512);
  CounterRng rng(0, 1);
  fam.Init(rng);
  const auto tensors = SnapshotParameters(fam.Parameters());
  const auto packet = Pack(tensors);
  const double ratio =
      static_cast<double>(packet.bytes.size()) / static_cast<double>(Float32Bytes(tensors));
  EXPECT_LE(ratio, 0.55);
}

void ExpectProtocol(const std::function<void()>& f, const std::string& needle) {
  try {
    f();
    FAIL() << "expected protocol error containing '" << needle << "'";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kProtocol);
    EXPECT_NE(std::string(e.what()).find(needle), std::string::npos) << e.what();
  }
}

TEST(Unpack, FailsClosed) {
  auto raw = SerializePayload({{"w", {2}, {1.0, -2.0}}});
  auto bad = raw;
  bad[0] = 'X';
  ExpectProtocol([&] { ParsePayload(bad); }, "bad magic");
  bad = raw;
  bad[5] = 2;
  ExpectProtocol([&] { ParsePayload(bad); }, "unsupported version");
  bad = raw;
  bad[13] = 9;
  ExpectProtocol([&] { ParsePayload(bad); }, "unknown dtype");
  bad = raw;
  bad.pop_back();
  ExpectProtocol([&] { ParsePayload(bad); }, "truncated");
  bad = raw;
  bad.push_back(0);
  ExpectProtocol([&] { ParsePayload(bad); }, "trailing bytes");
  const std::vector<std::uint8_t> garbage = {'h', 'e', 'l', 'l', 'o', ' ', 'w', 'o', 'r', 'l', 'd'};
  ExpectProtocol([&] { Unpack(garbage); }, "bad magic");
  auto packet = Pack({{"w", {2}, {1.0, -2.0}}}).bytes;
  packet.resize(packet.size() - 3);
  ExpectProtocol([&] { Unpack(packet); }, "truncated");
}

TEST(Serialize, NonFiniteValueNamesTensor) {
  try {
    SerializePayload({{"good", {1}, {1.0}}, {"bad.one", {2}, {1.0, NAN}}});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kSerialization);
    EXPECT_NE(std::string(e.what()).find("bad.one"), std::string::npos);
  }
}

}  // namespace
}  // namespace maskfed
