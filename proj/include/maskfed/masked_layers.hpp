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

// Linear layers whose output rows are switched off when the row's mean weight
// magnitude drops below a learnable per-row threshold, and the two models
// built from them: the communicated feature-adaptation module (FAM) and the
// private MLP classifier head.

#ifndef MASKFED_MASKED_LAYERS_HPP_
#define MASKFED_MASKED_LAYERS_HPP_

#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "maskfed/error.hpp"
#include "maskfed/numerics.hpp"
#include "maskfed/rng.hpp"
#include "maskfed/tensors.hpp"

namespace maskfed {

// Mutable view of one parameter tensor inside a model.
struct ParamSlot {
  std::string name;
  std::vector<std::uint32_t> shape;
  std::span<double> values;
  bool decay = false;  // weight decay applies (weights only)
};

// u_i = mean_j |W_ij|.
inline std::vector<double> MeanMagnitude(const Matrix& weight) {
  Require(weight.rows > 0 && weight.cols > 0, ErrorCode::kInvalidInput,
          "mean magnitude of an empty matrix");
  std::vector<double> u(weight.rows, 0.0);
  for (std::size_t i = 0; i < weight.rows; ++i) {
    double acc = 0.0;
    for (double w : weight.row(i)) acc += std::abs(w);
    u[i] = acc / static_cast<double>(weight.cols);
  }
  return u;
}

// m_i = 1 if u_i >= kappa_i else 0.
inline std::vector<double> ComputeMask(std::span<const double> u,
                                       std::span<const double> kappa) {
  Require(u.size() == kappa.size(), ErrorCode::kInvalidInput,
          "mask inputs differ in length");
  std::vector<double> m(u.size());
  for (std::size_t i = 0; i < u.size(); ++i) m[i] = u[i] >= kappa[i] ? 1.0 : 0.0;
  return m;
}

// Nonlinearity applied inside a masked layer, before the mask.
enum class Activation { kIdentity, kRelu };

class MaskedLinear {
 public:
  MaskedLinear() = default;
  MaskedLinear(std::size_t n_in, std::size_t n_out)
      : weight(n_out, n_in), bias(n_out, 0.0), kappa(n_out, 0.0) {}

  Matrix weight;              // n_out x n_in
  std::vector<double> bias;   // n_out
  std::vector<double> kappa;  // n_out, learnable thresholds
  double mask_window = 1.0;   // straight-through surrogate half-width
  bool masking = true;

  std::size_t in_features() const { return weight.cols; }
  std::size_t out_features() const { return weight.rows; }

  // U(-1/sqrt(n_in), 1/sqrt(n_in)) for weights and bias; thresholds start at 0
  // so the mask begins all-ones.
  void InitUniform(CounterRng& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(in_features()));
    for (double& w : weight.data) w = rng.Uniform(-bound, bound);
    for (double& b : bias) b = rng.Uniform(-bound, bound);
    std::fill(kappa.begin(), kappa.end(), 0.0);
  }

  // Same shapes, all zeros; used as a gradient accumulator.
  MaskedLinear ZerosLike() const {
    MaskedLinear z(in_features(), out_features());
    z.mask_window = mask_window;
    z.masking = masking;
    return z;
  }

  // Hard mask from the current (W, kappa). When a relaxation is anchored the
  // mask is its first-order extension around the anchor instead.
  std::vector<double> Mask() const {
    if (!masking) return std::vector<double>(out_features(), 1.0);
    const auto u = MeanMagnitude(weight);
    if (!relaxation_) return ComputeMask(u, kappa);
    std::vector<double> m(out_features());
    for (std::size_t i = 0; i < m.size(); ++i) {
      const double slope = relaxation_->in_window[i];
      m[i] = relaxation_->mask[i] +
             slope * ((u[i] - kappa[i]) - relaxation_->gap[i]);
    }
    return m;
  }

  // y_i = m_i * act(W_i x + b_i) for every row of x (B x n_in). The mask
  // sits after the activation, which for ReLU equals masking before it but
  // keeps the relaxed mask differentiable at masked units.
  Matrix Forward(const Matrix& x, Activation act = Activation::kIdentity) const {
    Require(x.cols == in_features(), ErrorCode::kInvalidInput,
            "masked linear input has " + std::to_string(x.cols) +
                " features, expected " + std::to_string(in_features()));
    const auto m = Mask();
    Matrix y(x.rows, out_features());
    for (std::size_t b = 0; b < x.rows; ++b) {
      const auto xb = x.row(b);
      for (std::size_t i = 0; i < out_features(); ++i) {
        if (m[i] == 0.0) continue;
        const double z = Dot(weight.row(i), xb) + bias[i];
        y(b, i) = m[i] * (act == Activation::kRelu && z <= 0.0 ? 0.0 : z);
      }
    }
    return y;
  }

  // Accumulates parameter gradients into `grad` and returns dL/dx.
  //
  // Weight and bias gradients flow through unmasked rows. The threshold uses
  // the straight-through surrogate dm/dkappa = -1 (and dm/du = +1) while
  // |u_i - kappa_i| <= mask_window, chained through y_i = m_i (W_i x + b_i);
  // the u-path reaches W through d u_i / d W_ij = sign(W_ij) / n_in.
  Matrix Backward(const Matrix& x, const Matrix& dy, MaskedLinear& grad,
                  Activation act = Activation::kIdentity) const {
    const std::size_t n_in = in_features();
    const std::size_t n_out = out_features();
    const auto m = Mask();
    const auto window = InWindow();
    Matrix dx(x.rows, n_in);
    std::vector<double> dmask(n_out, 0.0);
    for (std::size_t b = 0; b < x.rows; ++b) {
      const auto xb = x.row(b);
      auto dxb = dx.row(b);
      for (std::size_t i = 0; i < n_out; ++i) {
        const double g = dy(b, i);
        if (g == 0.0) continue;
        const auto wi = weight.row(i);
        const double z = Dot(wi, xb) + bias[i];
        const bool dead = act == Activation::kRelu && z <= 0.0;
        if (window[i] != 0.0 && !dead) dmask[i] += g * z;
        const double dz = dead ? 0.0 : m[i] * g;
        if (dz == 0.0) continue;
        auto gwi = grad.weight.row(i);
        for (std::size_t j = 0; j < n_in; ++j) {
          gwi[j] += dz * xb[j];
          dxb[j] += dz * wi[j];
        }
        grad.bias[i] += dz;
      }
    }
    const double inv_n = 1.0 / static_cast<double>(n_in);
    for (std::size_t i = 0; i < n_out; ++i) {
      if (window[i] == 0.0 || dmask[i] == 0.0) continue;
      grad.kappa[i] -= dmask[i];
      auto gwi = grad.weight.row(i);
      const auto wi = weight.row(i);
      for (std::size_t j = 0; j < n_in; ++j) {
        const double s = wi[j] > 0.0 ? 1.0 : (wi[j] < 0.0 ? -1.0 : 0.0);
        gwi[j] += dmask[i] * s * inv_n;
      }
    }
    return dx;
  }

  // Freezes the current point as the anchor of a differentiable relaxation
  // of the mask, so finite differences can see the surrogate gradient.
  void AnchorRelaxation() {
    if (!masking) return;
    const auto u = MeanMagnitude(weight);
    Relaxation r;
    r.gap.resize(out_features());
    r.in_window.resize(out_features());
    for (std::size_t i = 0; i < out_features(); ++i) {
      r.gap[i] = u[i] - kappa[i];
      r.in_window[i] = std::abs(r.gap[i]) <= mask_window ? 1.0 : 0.0;
    }
    r.mask = ComputeMask(u, kappa);
    relaxation_ = std::move(r);
  }
  void ClearRelaxation() { relaxation_.reset(); }
  bool relaxed() const { return relaxation_.has_value(); }

  void AppendParameters(const std::string& prefix,
                        std::vector<ParamSlot>& out) {
    out.push_back({prefix + ".W",
                   {static_cast<std::uint32_t>(weight.rows),
                    static_cast<std::uint32_t>(weight.cols)},
                   weight.data,
                   true});
    out.push_back({prefix + ".b",
                   {static_cast<std::uint32_t>(bias.size())},
                   bias,
                   false});
    out.push_back({prefix + ".kappa",
                   {static_cast<std::uint32_t>(kappa.size())},
                   kappa,
                   false});
  }

  std::size_t ParameterCount() const {
    return weight.size() + bias.size() + kappa.size();
  }

 private:
  struct Relaxation {
    std::vector<double> gap;
    std::vector<double> mask;
    std::vector<double> in_window;
  };

  std::vector<double> InWindow() const {
    std::vector<double> w(out_features(), 0.0);
    if (!masking) return w;
    if (relaxation_) return relaxation_->in_window;
    const auto u = MeanMagnitude(weight);
    for (std::size_t i = 0; i < w.size(); ++i) {
      w[i] = std::abs(u[i] - kappa[i]) <= mask_window ? 1.0 : 0.0;
    }
    return w;
  }

  std::optional<Relaxation> relaxation_;
};

// Single-vector convenience wrapper around MaskedLinear::Forward.
inline std::vector<double> MaskedForward(const MaskedLinear& layer,
                                         std::span<const double> x) {
  Matrix in(1, x.size());
  std::copy(x.begin(), x.end(), in.data.begin());
  return layer.Forward(in).data;
}

inline TensorList SnapshotParameters(const std::vector<ParamSlot>& slots) {
  TensorList out;
  out.reserve(slots.size());
  for (const auto& s : slots) {
    out.push_back({s.name, s.shape, {s.values.begin(), s.values.end()}});
  }
  return out;
}

// Copies tensors into the slots; names, order and shapes must match exactly.
inline void RestoreParameters(const std::vector<ParamSlot>& slots,
                              const TensorList& tensors) {
  Require(slots.size() == tensors.size(), ErrorCode::kProtocol,
          "expected " + std::to_string(slots.size()) + " tensors, got " +
              std::to_string(tensors.size()));
  for (std::size_t k = 0; k < slots.size(); ++k) {
    const auto& s = slots[k];
    const auto& t = tensors[k];
    Require(s.name == t.name, ErrorCode::kProtocol,
            "tensor " + std::to_string(k) + " is '" + t.name + "', expected '" +
                s.name + "'");
    Require(s.shape == t.shape && t.values.size() == s.values.size(),
            ErrorCode::kProtocol, "shape mismatch for tensor '" + t.name + "'");
  }
  for (std::size_t k = 0; k < slots.size(); ++k) {
    std::copy(tensors[k].values.begin(), tensors[k].values.end(),
              slots[k].values.begin());
  }
}

// Feature-adaptation module: D -> D, ReLU, D -> D, sigmoid. Produces a gate in
// [0,1]^D that multiplies the frozen image features elementwise.
struct FamModel {
  MaskedLinear layer1;
  MaskedLinear layer2;

  struct Cache {
    Matrix input;
    Matrix act1;
    Matrix gate;
  };

  FamModel() = default;
  explicit FamModel(std::size_t dim) : layer1(dim, dim), layer2(dim, dim) {}

  std::size_t dim() const { return layer1.in_features(); }

  void Init(CounterRng& rng) {
    layer1.InitUniform(rng);
    layer2.InitUniform(rng);
  }

  void SetMasking(bool enabled, double window) {
    for (auto* l : {&layer1, &layer2}) {
      l->masking = enabled;
      l->mask_window = window;
    }
  }

  // att(I) for each row of `features`.
  Matrix Gate(const Matrix& features, Cache* cache = nullptr) const {
    Matrix act1 = layer1.Forward(features, Activation::kRelu);
    Matrix gate = layer2.Forward(act1);
    for (double& v : gate.data) v = Sigmoid(v);
    if (cache != nullptr) {
      cache->input = features;
      cache->act1 = std::move(act1);
      cache->gate = gate;
    }
    return gate;
  }

  // Masked features att(I) .* I.
  Matrix Apply(const Matrix& features, Cache* cache = nullptr) const {
    Require(features.cols == dim(), ErrorCode::kInvalidInput,
            "FAM input has " + std::to_string(features.cols) +
                " features, expected " + std::to_string(dim()));
    Matrix out = Gate(features, cache);
    for (std::size_t k = 0; k < out.size(); ++k) out.data[k] *= features.data[k];
    return out;
  }

  void Backward(const Cache& cache, const Matrix& d_out, FamModel& grad) const {
    Matrix d_pre2(d_out.rows, d_out.cols);
    for (std::size_t k = 0; k < d_out.size(); ++k) {
      const double g = cache.gate.data[k];
      d_pre2.data[k] = d_out.data[k] * cache.input.data[k] * g * (1.0 - g);
    }
    const Matrix d_act1 = layer2.Backward(cache.act1, d_pre2, grad.layer2);
    layer1.Backward(cache.input, d_act1, grad.layer1, Activation::kRelu);
  }

  FamModel ZerosLike() const {
    FamModel z;
    z.layer1 = layer1.ZerosLike();
    z.layer2 = layer2.ZerosLike();
    return z;
  }

  std::vector<ParamSlot> Parameters() {
    std::vector<ParamSlot> out;
    layer1.AppendParameters("layer1", out);
    layer2.AppendParameters("layer2", out);
    return out;
  }

  std::size_t ParameterCount() const {
    return layer1.ParameterCount() + layer2.ParameterCount();
  }

  void AnchorRelaxation() {
    layer1.AnchorRelaxation();
    layer2.AnchorRelaxation();
  }
  void ClearRelaxation() {
    layer1.ClearRelaxation();
    layer2.ClearRelaxation();
  }
};

// Single-vector FAM application.
inline std::vector<double> FamApply(const FamModel& fam,
                                    std::span<const double> image_feature) {
  Matrix in(1, image_feature.size());
  std::copy(image_feature.begin(), image_feature.end(), in.data.begin());
  return fam.Apply(in).data;
}

// Private classifier head: D -> H, ReLU, H -> C.
struct MlpModel {
  MaskedLinear hidden;
  MaskedLinear output;

  struct Cache {
    Matrix input;
    Matrix act1;
  };

  MlpModel() = default;
  MlpModel(std::size_t dim, std::size_t hidden_units, std::size_t classes)
      : hidden(dim, hidden_units), output(hidden_units, classes) {}

  std::size_t dim() const { return hidden.in_features(); }
  std::size_t classes() const { return output.out_features(); }

  void Init(CounterRng& rng) {
    hidden.InitUniform(rng);
    output.InitUniform(rng);
  }

  void SetMaskWindow(double window) {
    hidden.mask_window = window;
    output.mask_window = window;
  }

  Matrix Forward(const Matrix& features, Cache* cache = nullptr) const {
    Require(features.cols == dim(), ErrorCode::kInvalidInput,
            "MLP input has " + std::to_string(features.cols) +
                " features, expected " + std::to_string(dim()));
    Matrix act1 = hidden.Forward(features, Activation::kRelu);
    Matrix logits = output.Forward(act1);
    if (cache != nullptr) {
      cache->input = features;
      cache->act1 = std::move(act1);
    }
    return logits;
  }

  // Returns dL/d(input).
  Matrix Backward(const Cache& cache, const Matrix& d_logits,
                  MlpModel& grad) const {
    const Matrix d_act1 = output.Backward(cache.act1, d_logits, grad.output);
    return hidden.Backward(cache.input, d_act1, grad.hidden, Activation::kRelu);
  }

  MlpModel ZerosLike() const {
    MlpModel z;
    z.hidden = hidden.ZerosLike();
    z.output = output.ZerosLike();
    return z;
  }

  std::vector<ParamSlot> Parameters() {
    std::vector<ParamSlot> out;
    hidden.AppendParameters("hidden", out);
    output.AppendParameters("output", out);
    return out;
  }

  std::size_t ParameterCount() const {
    return hidden.ParameterCount() + output.ParameterCount();
  }

  void AnchorRelaxation() {
    hidden.AnchorRelaxation();
    output.AnchorRelaxation();
  }
  void ClearRelaxation() {
    hidden.ClearRelaxation();
    output.ClearRelaxation();
  }
};

}  // namespace maskfed

#endif  // MASKFED_MASKED_LAYERS_HPP_
