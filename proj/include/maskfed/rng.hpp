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

// Counter-based random numbers. A generator is addressed by (seed, stream);
// draws advance a 64-bit counter, so any consumer given its own stream ID
// produces the same sequence regardless of scheduling or thread count.

#ifndef MASKFED_RNG_HPP_
#define MASKFED_RNG_HPP_

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <utility>
#include <vector>

#include "maskfed/error.hpp"

namespace maskfed {

// Stream IDs handed to the stochastic consumers of one experiment.
namespace streams {
inline constexpr std::uint64_t kFamInit = 1;
inline constexpr std::uint64_t kSyntheticData = 100;
inline constexpr std::uint64_t kSplit = 200;
inline constexpr std::uint64_t kDirichlet = 300;
inline constexpr std::uint64_t kVerify = 400;
inline constexpr std::uint64_t kMlpInitBase = 1000;
inline constexpr std::uint64_t kShuffleBase = 2000;
}  // namespace streams

// Philox4x32-10 (Salmon et al., SC'11) keyed by the seed; the stream ID fills
// the upper half of the 128-bit counter.
class CounterRng {
 public:
  CounterRng(std::uint64_t seed = 0, std::uint64_t stream = 0)
      : seed_(seed), stream_(stream) {}

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream() const { return stream_; }
  std::uint64_t counter() const { return counter_; }

  std::uint64_t NextU64() {
    const auto block = Philox(counter_++);
    return (static_cast<std::uint64_t>(block[0]) << 32) | block[1];
  }

  // Uniform in [0, 1).
  double Uniform() { return static_cast<double>(NextU64() >> 11) * 0x1.0p-53; }

  // Uniform in (0, 1].
  double UniformOpenZero() {
    return static_cast<double>((NextU64() >> 11) + 1) * 0x1.0p-53;
  }

  double Uniform(double lo, double hi) { return lo + (hi - lo) * Uniform(); }

  // Unbiased integer in [0, n) by rejection.
  std::uint64_t UniformInt(std::uint64_t n) {
    Require(n > 0, ErrorCode::kInvalidInput, "UniformInt range is empty");
    const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
    std::uint64_t x;
    do {
      x = NextU64();
    } while (x >= limit);
    return x % n;
  }

  // Box-Muller; one normal per call keeps the stream position predictable.
  double Normal() {
    const double u1 = UniformOpenZero();
    const double u2 = Uniform();
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(2.0 * std::numbers::pi * u2);
  }

  double Normal(double mean, double stddev) { return mean + stddev * Normal(); }

  // Marsaglia-Tsang; shape < 1 uses the U^(1/shape) boost.
  double Gamma(double shape) {
    Require(shape > 0.0 && std::isfinite(shape), ErrorCode::kInvalidInput,
            "gamma shape must be positive");
    if (shape < 1.0) {
      const double g = Gamma(shape + 1.0);
      return g * std::pow(UniformOpenZero(), 1.0 / shape);
    }
    const double d = shape - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    while (true) {
      double x;
      double v;
      do {
        x = Normal();
        v = 1.0 + c * x;
      } while (v <= 0.0);
      v = v * v * v;
      const double u = UniformOpenZero();
      if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
      if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
    }
  }

  // Dirichlet(alpha * 1_k) via normalized gammas.
  std::vector<double> Dirichlet(std::size_t k, double alpha) {
    std::vector<double> out(k);
    double total = 0.0;
    for (auto& v : out) {
      v = Gamma(alpha);
      total += v;
    }
    if (total <= 0.0) {
      // Every gamma underflowed (tiny alpha); fall back to a single winner.
      std::fill(out.begin(), out.end(), 0.0);
      out[UniformInt(k)] = 1.0;
      return out;
    }
    for (auto& v : out) v /= total;
    return out;
  }

  // Raw Philox output block for counter value `counter`.
  std::array<std::uint32_t, 4> Block(std::uint64_t counter) const {
    return Philox(counter);
  }

  template <typename T>
  void Shuffle(std::vector<T>& items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(UniformInt(i));
      std::swap(items[i - 1], items[j]);
    }
  }

 private:
  std::array<std::uint32_t, 4> Philox(std::uint64_t counter) const {
    constexpr std::uint32_t kMul0 = 0xD2511F53u;
    constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
    constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
    constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;
    std::array<std::uint32_t, 4> ctr = {
        static_cast<std::uint32_t>(counter),
        static_cast<std::uint32_t>(counter >> 32),
        static_cast<std::uint32_t>(stream_),
        static_cast<std::uint32_t>(stream_ >> 32)};
    std::uint32_t k0 = static_cast<std::uint32_t>(seed_);
    std::uint32_t k1 = static_cast<std::uint32_t>(seed_ >> 32);
    for (int round = 0; round < 10; ++round) {
      const std::uint64_t p0 = static_cast<std::uint64_t>(kMul0) * ctr[0];
      const std::uint64_t p1 = static_cast<std::uint64_t>(kMul1) * ctr[2];
      const auto hi0 = static_cast<std::uint32_t>(p0 >> 32);
      const auto lo0 = static_cast<std::uint32_t>(p0);
      const auto hi1 = static_cast<std::uint32_t>(p1 >> 32);
      const auto lo1 = static_cast<std::uint32_t>(p1);
      ctr = {hi1 ^ ctr[1] ^ k0, lo1, hi0 ^ ctr[3] ^ k1, lo0};
      k0 += kWeyl0;
      k1 += kWeyl1;
    }
    return ctr;
  }

  std::uint64_t seed_;
  std::uint64_t stream_;
  std::uint64_t counter_ = 0;
};

}  // namespace maskfed

#endif  // MASKFED_RNG_HPP_
