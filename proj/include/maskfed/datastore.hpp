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

// Embedding banks: precomputed image features plus per-class prompt text
// features, stored in the FEMB file format; stratified train/val/test
// splitting, Dirichlet client partitioning and a synthetic generator with
// controlled per-client feature shift.
//
// FEMB layout, all multi-byte fields big-endian:
//   "FEMB" | u16 version=1 | u32 D | u32 C | u32 N |
//   C x (u16 name_len | name bytes) | C x D float32 text features |
//   N x (u16 label | D float32 image features)

#ifndef MASKFED_DATASTORE_HPP_
#define MASKFED_DATASTORE_HPP_

#include <Eigen/Dense>
#include <unsupported/Eigen/MatrixFunctions>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iterator>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "maskfed/error.hpp"
#include "maskfed/numerics.hpp"
#include "maskfed/rng.hpp"

namespace maskfed {

struct EmbeddingBank {
  std::size_t dim = 0;
  std::vector<std::string> class_names;
  Matrix text_features;     // C x D
  std::vector<int> labels;  // N
  Matrix features;          // N x D

  std::size_t classes() const { return class_names.size(); }
  std::size_t size() const { return labels.size(); }
  bool empty() const { return labels.empty(); }

  // Bank with the same classes holding the given samples, in that order.
  EmbeddingBank Subset(std::span<const std::size_t> indices) const {
    EmbeddingBank out;
    out.dim = dim;
    out.class_names = class_names;
    out.text_features = text_features;
    out.features = Matrix(indices.size(), dim);
    out.labels.reserve(indices.size());
    for (std::size_t k = 0; k < indices.size(); ++k) {
      out.labels.push_back(labels[indices[k]]);
      const auto src = features.row(indices[k]);
      std::copy(src.begin(), src.end(), out.features.row(k).begin());
    }
    return out;
  }

  bool operator==(const EmbeddingBank&) const = default;
};

inline void ValidateBank(const EmbeddingBank& bank) {
  Require(bank.text_features.rows == bank.classes() &&
              bank.text_features.cols == bank.dim,
          ErrorCode::kInvalidInput, "text feature matrix has wrong shape");
  Require(bank.features.rows == bank.size() && bank.features.cols == bank.dim,
          ErrorCode::kInvalidInput, "image feature matrix has wrong shape");
  Require(AllFinite(bank.text_features.data) && AllFinite(bank.features.data),
          ErrorCode::kInvalidInput, "bank contains non-finite features");
  for (int y : bank.labels) {
    Require(y >= 0 && static_cast<std::size_t>(y) < bank.classes(),
            ErrorCode::kInvalidInput, "bank label out of range");
  }
}

namespace femb_detail {

inline void PutU16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v));
}
inline void PutU32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  PutU16(out, static_cast<std::uint16_t>(v >> 16));
  PutU16(out, static_cast<std::uint16_t>(v));
}
inline void PutF32(std::vector<std::uint8_t>& out, double v) {
  PutU32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
}

class Cursor {
 public:
  explicit Cursor(std::span<const std::uint8_t> in) : in_(in) {}
  std::uint16_t U16() {
    Need(2);
    const auto v = static_cast<std::uint16_t>((in_[pos_] << 8) | in_[pos_ + 1]);
    pos_ += 2;
    return v;
  }
  std::uint32_t U32() {
    const std::uint32_t hi = U16();
    return (hi << 16) | U16();
  }
  double F32() { return static_cast<double>(std::bit_cast<float>(U32())); }
  std::string Str(std::size_t n) {
    Need(n);
    std::string s(reinterpret_cast<const char*>(in_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  bool AtEnd() const { return pos_ == in_.size(); }

 private:
  void Need(std::size_t n) const {
    if (in_.size() - pos_ < n) throw Error(ErrorCode::kParse, "truncated bank");
  }
  std::span<const std::uint8_t> in_;
  std::size_t pos_ = 0;
};

}  // namespace femb_detail

inline std::vector<std::uint8_t> SerializeBank(const EmbeddingBank& bank) {
  ValidateBank(bank);
  using namespace femb_detail;
  std::vector<std::uint8_t> out = {'F', 'E', 'M', 'B'};
  PutU16(out, 1);
  PutU32(out, static_cast<std::uint32_t>(bank.dim));
  PutU32(out, static_cast<std::uint32_t>(bank.classes()));
  PutU32(out, static_cast<std::uint32_t>(bank.size()));
  for (const auto& name : bank.class_names) {
    PutU16(out, static_cast<std::uint16_t>(name.size()));
    out.insert(out.end(), name.begin(), name.end());
  }
  for (double v : bank.text_features.data) PutF32(out, v);
  for (std::size_t i = 0; i < bank.size(); ++i) {
    PutU16(out, static_cast<std::uint16_t>(bank.labels[i]));
    for (double v : bank.features.row(i)) PutF32(out, v);
  }
  return out;
}

inline EmbeddingBank ParseBank(std::span<const std::uint8_t> bytes) {
  femb_detail::Cursor in(bytes);
  Require(in.Str(4) == "FEMB", ErrorCode::kParse, "bad magic");
  const auto version = in.U16();
  Require(version == 1, ErrorCode::kParse,
          "unsupported version " + std::to_string(version));
  EmbeddingBank bank;
  bank.dim = in.U32();
  const std::size_t classes = in.U32();
  const std::size_t n = in.U32();
  Require(bank.dim > 0, ErrorCode::kParse, "feature dimension is zero");
  for (std::size_t c = 0; c < classes; ++c) {
    bank.class_names.push_back(in.Str(in.U16()));
  }
  bank.text_features = Matrix(classes, bank.dim);
  for (double& v : bank.text_features.data) v = in.F32();
  bank.features = Matrix(n, bank.dim);
  bank.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto label = in.U16();
    Require(label < classes, ErrorCode::kParse,
            "label " + std::to_string(label) + " of sample " +
                std::to_string(i) + " is not below class count " +
                std::to_string(classes));
    bank.labels[i] = label;
    for (double& v : bank.features.row(i)) v = in.F32();
  }
  Require(in.AtEnd(), ErrorCode::kParse, "trailing bytes after bank");
  return bank;
}

inline EmbeddingBank LoadBank(const std::string& path) {
  std::ifstream file(path, std::ios::binary);
  Require(static_cast<bool>(file), ErrorCode::kParse, "cannot open " + path);
  const std::vector<std::uint8_t> bytes(std::istreambuf_iterator<char>(file),
                                        {});
  return ParseBank(bytes);
}

inline void WriteBank(const std::string& path, const EmbeddingBank& bank) {
  const auto bytes = SerializeBank(bank);
  std::ofstream file(path, std::ios::binary);
  Require(static_cast<bool>(file), ErrorCode::kInvalidInput,
          "cannot open " + path + " for writing");
  file.write(reinterpret_cast<const char*>(bytes.data()),
             static_cast<std::streamsize>(bytes.size()));
}

// Integer counts summing to `total` from nonnegative weights: floors first,
// then leftover units to the largest fractional parts (ties to lower index).
inline std::vector<std::size_t> LargestRemainder(std::span<const double> weights,
                                                 std::size_t total) {
  const double sum = std::accumulate(weights.begin(), weights.end(), 0.0);
  Require(sum > 0.0, ErrorCode::kInvalidInput, "weights sum to zero");
  std::vector<std::size_t> counts(weights.size());
  std::vector<double> frac(weights.size());
  std::size_t assigned = 0;
  for (std::size_t k = 0; k < weights.size(); ++k) {
    const double quota = static_cast<double>(total) * weights[k] / sum;
    counts[k] = static_cast<std::size_t>(std::floor(quota));
    frac[k] = quota - std::floor(quota);
    assigned += counts[k];
  }
  std::vector<std::size_t> order(weights.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return frac[a] > frac[b]; });
  for (std::size_t k = 0; assigned < total; ++k, ++assigned) {
    ++counts[order[k % order.size()]];
  }
  return counts;
}

struct SplitSpec {
  double train = 0.6;
  double val = 0.2;
  double test = 0.2;
  std::uint64_t seed = 0;
};

struct BankSplit {
  EmbeddingBank train;
  EmbeddingBank val;
  EmbeddingBank test;
  std::vector<std::string> warnings;
};

// Stratified split. Within each class the validation and test counts are the
// nearest integers to their fractions and training takes the rest, so every
// class with >= 5 samples keeps its training share within one sample of the
// target. Classes with fewer than 3 samples are assigned train-first.
inline BankSplit SplitBank(const EmbeddingBank& bank, const SplitSpec& spec) {
  Require(bank.size() >= 5, ErrorCode::kInvalidInput,
          "split needs at least 5 samples");
  Require(std::abs(spec.train + spec.val + spec.test - 1.0) < 1e-9 &&
              spec.train >= 0 && spec.val >= 0 && spec.test >= 0,
          ErrorCode::kInvalidInput, "split fractions must sum to 1");
  CounterRng rng(spec.seed, streams::kSplit);
  BankSplit out;
  std::vector<std::size_t> train_idx, val_idx, test_idx;
  for (std::size_t c = 0; c < bank.classes(); ++c) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < bank.size(); ++i) {
      if (bank.labels[i] == static_cast<int>(c)) members.push_back(i);
    }
    if (members.empty()) continue;
    rng.Shuffle(members);
    const std::size_t n = members.size();
    std::size_t n_val = static_cast<std::size_t>(std::llround(spec.val * n));
    std::size_t n_test = static_cast<std::size_t>(std::llround(spec.test * n));
    if (n < 3) {
      out.warnings.push_back("class " + std::to_string(c) + " has only " +
                             std::to_string(n) +
                             " samples; assigned train-first");
      n_val = 0;
      n_test = 0;
    }
    if (n_val + n_test > n) n_test = n - n_val;
    const std::size_t n_train = n - n_val - n_test;
    train_idx.insert(train_idx.end(), members.begin(), members.begin() + n_train);
    val_idx.insert(val_idx.end(), members.begin() + n_train,
                   members.begin() + n_train + n_val);
    test_idx.insert(test_idx.end(), members.begin() + n_train + n_val,
                    members.end());
  }
  for (auto* idx : {&train_idx, &val_idx, &test_idx}) {
    std::sort(idx->begin(), idx->end());
  }
  out.train = bank.Subset(train_idx);
  out.val = bank.Subset(val_idx);
  out.test = bank.Subset(test_idx);
  return out;
}

// Non-IID partition: for each class, client shares ~ Dir(alpha 1_K) and the
// class's samples are dealt out by largest-remainder rounding of those shares.
// Redraws (up to 10 attempts) while any client would end up empty.
inline std::vector<EmbeddingBank> DirichletPartition(const EmbeddingBank& bank,
                                                     std::size_t clients,
                                                     double alpha,
                                                     std::uint64_t seed) {
  Require(clients >= 2, ErrorCode::kInvalidInput,
          "Dirichlet partition needs at least 2 clients");
  Require(alpha > 0.0, ErrorCode::kInvalidInput, "alpha must be positive");
  CounterRng rng(seed, streams::kDirichlet);
  constexpr int kAttempts = 10;
  for (int attempt = 0; attempt < kAttempts; ++attempt) {
    std::vector<std::vector<std::size_t>> assigned(clients);
    for (std::size_t c = 0; c < bank.classes(); ++c) {
      std::vector<std::size_t> members;
      for (std::size_t i = 0; i < bank.size(); ++i) {
        if (bank.labels[i] == static_cast<int>(c)) members.push_back(i);
      }
      const auto shares = rng.Dirichlet(clients, alpha);
      if (members.empty()) continue;
      rng.Shuffle(members);
      const auto counts = LargestRemainder(shares, members.size());
      std::size_t cursor = 0;
      for (std::size_t k = 0; k < clients; ++k) {
        assigned[k].insert(assigned[k].end(), members.begin() + cursor,
                           members.begin() + cursor + counts[k]);
        cursor += counts[k];
      }
    }
    const bool any_empty =
        std::any_of(assigned.begin(), assigned.end(),
                    [](const auto& a) { return a.empty(); });
    if (any_empty) continue;
    std::vector<EmbeddingBank> out;
    for (auto& idx : assigned) {
      std::sort(idx.begin(), idx.end());
      out.push_back(bank.Subset(idx));
    }
    return out;
  }
  throw Error(ErrorCode::kDegenerateInput,
              "Dirichlet partition left a client empty after " +
                  std::to_string(kAttempts) + " draws");
}

enum class ShiftMode { kNone, kRotation, kHaar, kScaling };

inline ShiftMode ParseShiftMode(const std::string& name) {
  if (name == "none") return ShiftMode::kNone;
  if (name == "rotation") return ShiftMode::kRotation;
  if (name == "haar") return ShiftMode::kHaar;
  if (name == "scaling") return ShiftMode::kScaling;
  throw Error(ErrorCode::kInvalidInput, "unknown shift mode '" + name + "'");
}

inline const char* ShiftModeName(ShiftMode mode) {
  switch (mode) {
    case ShiftMode::kNone: return "none";
    case ShiftMode::kRotation: return "rotation";
    case ShiftMode::kHaar: return "haar";
    case ShiftMode::kScaling: return "scaling";
  }
  return "none";
}

struct SyntheticSpec {
  std::size_t clients = 3;
  std::size_t dim = 32;
  std::size_t classes = 4;
  std::size_t samples_per_client = 336;
  ShiftMode shift = ShiftMode::kRotation;
  // kRotation: RMS rotation angle in radians. kScaling: std-dev of the log
  // per-axis scale factors.
  double shift_strength = 1.0;
  double noise = 0.15;
  std::uint64_t seed = 0;
};

struct SyntheticData {
  std::vector<EmbeddingBank> clients;
  EmbeddingBank global;
};

namespace synth_detail {

inline Eigen::MatrixXd GaussianMatrix(std::size_t n, CounterRng& rng) {
  Eigen::MatrixXd g(n, n);
  for (Eigen::Index i = 0; i < g.rows(); ++i)
    for (Eigen::Index j = 0; j < g.cols(); ++j) g(i, j) = rng.Normal();
  return g;
}

// Haar-distributed orthogonal matrix: QR of a Gaussian matrix with the signs
// of R's diagonal folded into Q.
inline Eigen::MatrixXd HaarOrthogonal(std::size_t n, CounterRng& rng) {
  const Eigen::MatrixXd g = GaussianMatrix(n, rng);
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
  Eigen::MatrixXd q = qr.householderQ();
  const Eigen::MatrixXd r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (Eigen::Index i = 0; i < q.cols(); ++i) {
    if (r(i, i) < 0.0) q.col(i) *= -1.0;
  }
  return q;
}

// Rotation exp(K) with K skew-symmetric, scaled so the RMS rotation angle of
// its invariant planes equals `angle`.
inline Eigen::MatrixXd RandomRotation(std::size_t n, double angle,
                                      CounterRng& rng) {
  const Eigen::MatrixXd g = GaussianMatrix(n, rng);
  const Eigen::MatrixXd skew = (g - g.transpose()) / std::sqrt(2.0);
  const double rms = skew.norm() / std::sqrt(static_cast<double>(n));
  if (rms == 0.0) return Eigen::MatrixXd::Identity(n, n);
  const Eigen::MatrixXd k = skew * (angle / rms);
  return k.exp();
}

inline Eigen::MatrixXd ShiftTransform(const SyntheticSpec& spec,
                                      CounterRng& rng) {
  const std::size_t n = spec.dim;
  switch (spec.shift) {
    case ShiftMode::kNone:
      return Eigen::MatrixXd::Identity(n, n);
    case ShiftMode::kRotation:
      return RandomRotation(n, spec.shift_strength, rng);
    case ShiftMode::kHaar:
      return HaarOrthogonal(n, rng);
    case ShiftMode::kScaling: {
      Eigen::MatrixXd s = Eigen::MatrixXd::Zero(n, n);
      for (std::size_t d = 0; d < n; ++d) {
        s(d, d) = std::exp(spec.shift_strength * rng.Normal());
      }
      return s;
    }
  }
  return Eigen::MatrixXd::Identity(n, n);
}

// Stored precision is float32, so generated banks equal their reloaded copies.
inline double ToStored(double v) {
  return static_cast<double>(static_cast<float>(v));
}

inline EmbeddingBank EmitBank(const SyntheticSpec& spec,
                              const Eigen::MatrixXd& prototypes,
                              const Eigen::MatrixXd& transform,
                              CounterRng& rng) {
  EmbeddingBank bank;
  bank.dim = spec.dim;
  for (std::size_t c = 0; c < spec.classes; ++c) {
    bank.class_names.push_back("class" + std::to_string(c));
  }
  bank.text_features = Matrix(spec.classes, spec.dim);
  for (std::size_t c = 0; c < spec.classes; ++c)
    for (std::size_t d = 0; d < spec.dim; ++d)
      bank.text_features(c, d) = ToStored(prototypes(d, c));
  bank.features = Matrix(spec.samples_per_client, spec.dim);
  Eigen::VectorXd x(spec.dim);
  for (std::size_t i = 0; i < spec.samples_per_client; ++i) {
    const int y = static_cast<int>(i % spec.classes);
    bank.labels.push_back(y);
    for (std::size_t d = 0; d < spec.dim; ++d) {
      x(d) = prototypes(d, y) + spec.noise * rng.Normal();
    }
    const Eigen::VectorXd shifted = transform * x;
    for (std::size_t d = 0; d < spec.dim; ++d) {
      bank.features(i, d) = ToStored(shifted(d));
    }
  }
  return bank;
}

}  // namespace synth_detail

// K client banks plus one global bank with a held-out shift. Class
// prototypes are random unit vectors and double as the text features.
inline SyntheticData GenerateSynthetic(const SyntheticSpec& spec) {
  Require(spec.classes >= 2 && spec.dim >= spec.classes,
          ErrorCode::kInvalidInput, "synthetic data needs D >= C >= 2");
  Require(spec.clients >= 1 && spec.samples_per_client >= 1,
          ErrorCode::kInvalidInput, "synthetic data needs clients and samples");
  Require(spec.noise >= 0.0, ErrorCode::kInvalidInput, "noise must be >= 0");
  CounterRng rng(spec.seed, streams::kSyntheticData);
  Eigen::MatrixXd prototypes(spec.dim, spec.classes);
  for (std::size_t c = 0; c < spec.classes; ++c) {
    for (std::size_t d = 0; d < spec.dim; ++d) prototypes(d, c) = rng.Normal();
    prototypes.col(c).normalize();
  }
  SyntheticData out;
  for (std::size_t k = 0; k < spec.clients; ++k) {
    const auto transform = synth_detail::ShiftTransform(spec, rng);
    out.clients.push_back(
        synth_detail::EmitBank(spec, prototypes, transform, rng));
  }
  const auto global_transform = synth_detail::ShiftTransform(spec, rng);
  out.global = synth_detail::EmitBank(spec, prototypes, global_transform, rng);
  return out;
}

}  // namespace maskfed

#endif  // MASKFED_DATASTORE_HPP_
