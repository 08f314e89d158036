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

// Self-check suite behind `maskfed verify`: every structural property of the
// library, each reported as one pass/fail line.

#ifndef MASKFED_VERIFY_HPP_
#define MASKFED_VERIFY_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <functional>
#include <numeric>
#include <set>
#include <string>
#include <vector>

#include "maskfed/client.hpp"
#include "maskfed/datastore.hpp"
#include "maskfed/losses.hpp"
#include "maskfed/masked_layers.hpp"
#include "maskfed/metrics.hpp"
#include "maskfed/numerics.hpp"
#include "maskfed/optimizer.hpp"
#include "maskfed/rng.hpp"
#include "maskfed/server.hpp"
#include "maskfed/wire_codec.hpp"

namespace maskfed {

struct PropertyResult {
  std::string name;
  bool passed = false;
  std::string detail;
};

struct VerifyOptions {
  // Mutation hook: adds this offset to every analytic gradient so the suite
  // can demonstrate that it catches a broken backward pass.
  double perturb_gradient = 0.0;
};

// A random small instance of the full local objective with all four masked
// layers relaxed around their current point and the dynamic weight frozen.
// Parameters are flattened FAM first, then MLP, in canonical slot order.
class GradientProbe {
 public:
  GradientProbe(std::uint64_t seed, std::size_t batch, std::size_t classes,
                std::size_t dim, std::size_t hidden = 16, TermWeights weights = {},
                double lambda = 0.04)
      : fam_(dim), mlp_(dim, hidden, classes), weights_(weights) {
    CounterRng rng(seed, streams::kVerify);
    fam_.Init(rng);
    mlp_.Init(rng);
    for (auto* l : {&fam_.layer1, &fam_.layer2, &mlp_.hidden, &mlp_.output}) {
      // Thresholds straddle the mean magnitudes so some units start masked.
      const auto u = MeanMagnitude(l->weight);
      for (std::size_t i = 0; i < u.size(); ++i) {
        l->kappa[i] = u[i] + rng.Uniform(-0.3, 0.3) * u[i];
      }
    }
    features_ = Matrix(batch, dim);
    for (double& v : features_.data) v = rng.Normal();
    text_ = Matrix(classes, dim);
    for (double& v : text_.data) v = rng.Normal();
    labels_.resize(batch);
    for (std::size_t j = 0; j < batch; ++j) {
      labels_[j] = static_cast<int>(rng.UniformInt(classes));
    }
    config_.hidden = hidden;
    config_.lambda = lambda;
    varpi_ = EvaluateObjective(fam_, mlp_, features_, labels_, text_, config_,
                               nullptr, nullptr, std::nullopt, weights_)
                 .varpi;
    fam_.AnchorRelaxation();
    mlp_.AnchorRelaxation();
  }

  std::vector<double> Parameters() {
    std::vector<double> out;
    for (const auto& s : Slots()) out.insert(out.end(), s.values.begin(), s.values.end());
    return out;
  }

  double Value(std::span<const double> theta) {
    Assign(theta);
    return EvaluateObjective(fam_, mlp_, features_, labels_, text_, config_,
                             nullptr, nullptr, varpi_, weights_)
        .total;
  }

  std::vector<double> Analytic() {
    FamModel fam_grad = fam_.ZerosLike();
    MlpModel mlp_grad = mlp_.ZerosLike();
    EvaluateObjective(fam_, mlp_, features_, labels_, text_, config_, &fam_grad,
                      &mlp_grad, varpi_, weights_);
    std::vector<double> out;
    for (const auto& s : fam_grad.Parameters()) out.insert(out.end(), s.values.begin(), s.values.end());
    for (const auto& s : mlp_grad.Parameters()) out.insert(out.end(), s.values.begin(), s.values.end());
    return out;
  }

  // Max relative error of the analytic gradient against central differences.
  double MaxError(double perturb = 0.0, double h = 1e-5) {
    const auto theta = Parameters();
    auto analytic = Analytic();
    for (double& g : analytic) g += perturb;
    const double err = GradCheck(
        [this](std::span<const double> t) { return Value(t); }, analytic, theta, h);
    Assign(theta);
    return err;
  }

 private:
  std::vector<ParamSlot> Slots() {
    auto slots = fam_.Parameters();
    auto more = mlp_.Parameters();
    slots.insert(slots.end(), more.begin(), more.end());
    return slots;
  }

  void Assign(std::span<const double> theta) {
    std::size_t k = 0;
    for (auto& s : Slots()) {
      for (double& v : s.values) v = theta[k++];
    }
  }

  FamModel fam_;
  MlpModel mlp_;
  Matrix features_;
  Matrix text_;
  std::vector<int> labels_;
  TrainingConfig config_;
  TermWeights weights_;
  double varpi_ = 0.5;
};

namespace verify_detail {

inline Matrix RandomMatrix(std::size_t r, std::size_t c, CounterRng& rng,
                           double scale = 1.0) {
  Matrix m(r, c);
  for (double& v : m.data) v = scale * rng.Normal();
  return m;
}

inline bool IsProbVector(std::span<const double> p) {
  double total = 0.0;
  for (double v : p) {
    if (!(v >= 0.0 && v <= 1.0)) return false;
    total += v;
  }
  return std::abs(total - 1.0) <= 1e-9;
}

inline std::string Sci(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2e", v);
  return buf;
}

// Generic finite-difference check of a matrix-input loss.
inline double MatrixGradError(const std::function<double(const Matrix&)>& f,
                              const Matrix& analytic, const Matrix& at,
                              double perturb) {
  std::vector<double> a = analytic.data;
  for (double& g : a) g += perturb;
  return GradCheck(
      [&](std::span<const double> theta) {
        Matrix m = at;
        std::copy(theta.begin(), theta.end(), m.data.begin());
        return f(m);
      },
      a, at.data);
}

inline EmbeddingBank TinyBank(std::size_t n, std::size_t dim, std::size_t classes,
                              CounterRng& rng) {
  EmbeddingBank b;
  b.dim = dim;
  for (std::size_t c = 0; c < classes; ++c) b.class_names.push_back("c" + std::to_string(c));
  b.text_features = Matrix(classes, dim);
  for (double& v : b.text_features.data) v = synth_detail::ToStored(rng.Normal());
  b.features = Matrix(n, dim);
  for (double& v : b.features.data) v = synth_detail::ToStored(rng.Normal());
  for (std::size_t i = 0; i < n; ++i) b.labels.push_back(static_cast<int>(rng.UniformInt(classes)));
  return b;
}

inline std::vector<std::uint64_t> SampleKeys(const EmbeddingBank& b) {
  // Features are distinct random draws, so the first coordinate identifies a
  // sample.
  std::vector<std::uint64_t> keys;
  for (std::size_t i = 0; i < b.size(); ++i) {
    float f = static_cast<float>(b.features(i, 0));
    std::uint32_t bits;
    std::memcpy(&bits, &f, 4);
    keys.push_back((static_cast<std::uint64_t>(bits) << 16) |
                   static_cast<std::uint64_t>(b.labels[i]));
  }
  std::sort(keys.begin(), keys.end());
  return keys;
}

}  // namespace verify_detail

inline std::vector<PropertyResult> RunVerification(const VerifyOptions& opts = {}) {
  using namespace verify_detail;
  std::vector<PropertyResult> out;
  const auto record = [&](const std::string& name, bool ok, std::string detail = {}) {
    out.push_back({name, ok, std::move(detail)});
  };
  const auto guarded = [&](const std::string& name, const std::function<void()>& body) {
    try {
      body();
    } catch (const std::exception& e) {
      record(name, false, std::string("threw: ") + e.what());
    }
  };

  // numerics
  guarded("softmax.prob_vector", [&] {
    CounterRng rng(0, streams::kVerify + 1);
    bool ok = true;
    for (double tau : {1e-3, 0.01, 1.0, 10.0, 1e6}) {
      for (int t = 0; t < 20; ++t) {
        std::vector<double> l(7);
        for (double& v : l) v = 50.0 * rng.Normal();
        ok = ok && IsProbVector(Softmax(l, tau));
      }
    }
    record("softmax.prob_vector", ok);
  });
  guarded("softmax.shift_invariance", [&] {
    CounterRng rng(0, streams::kVerify + 2);
    double worst = 0.0;
    for (int t = 0; t < 50; ++t) {
      std::vector<double> l(5), s(5);
      const double c = 100.0 * rng.Normal();
      for (std::size_t i = 0; i < 5; ++i) {
        l[i] = rng.Normal();
        s[i] = l[i] + c;
      }
      const auto a = Softmax(l, 0.5);
      const auto b = Softmax(s, 0.5);
      for (std::size_t i = 0; i < 5; ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
    }
    record("softmax.shift_invariance", worst <= 1e-12, "max diff " + Sci(worst));
  });
  guarded("entropy.bounds", [&] {
    CounterRng rng(0, streams::kVerify + 3);
    bool ok = true;
    for (std::size_t n : {2u, 5u, 16u}) {
      std::vector<double> uniform(n, 1.0 / static_cast<double>(n));
      ok = ok && std::abs(Entropy(uniform) - std::log(static_cast<double>(n))) <= 1e-12;
      for (int t = 0; t < 20; ++t) {
        std::vector<double> l(n);
        for (double& v : l) v = 3.0 * rng.Normal();
        const double h = Entropy(Softmax(l));
        ok = ok && h >= 0.0 && h <= std::log(static_cast<double>(n)) + 1e-12;
      }
    }
    record("entropy.bounds", ok);
  });
  guarded("cosine.scale", [&] {
    CounterRng rng(0, streams::kVerify + 4);
    bool ok = true;
    for (int t = 0; t < 20; ++t) {
      std::vector<double> a(6), pos(6), neg(6);
      const double s = std::exp(rng.Normal());
      for (std::size_t i = 0; i < 6; ++i) {
        a[i] = rng.Normal();
        pos[i] = s * a[i];
        neg[i] = -s * a[i];
      }
      ok = ok && std::abs(CosineSimilarity(a, pos) - 1.0) <= 1e-12 &&
           std::abs(CosineSimilarity(a, neg) + 1.0) <= 1e-12;
    }
    record("cosine.scale", ok);
  });

  // losses: per-term gradients
  guarded("gradient.losses", [&] {
    CounterRng rng(0, streams::kVerify + 5);
    double worst = 0.0;
    for (std::size_t batch : {2u, 4u}) {
      for (std::size_t classes : {2u, 3u}) {
        const Matrix sim = RandomMatrix(batch, batch, rng, 0.3);
        worst = std::max(worst, MatrixGradError(
            [](const Matrix& m) { return ContrastiveLoss(m, 0.01).value; },
            ContrastiveLoss(sim, 0.01).grad, sim, opts.perturb_gradient));
        const Matrix logits = RandomMatrix(batch, classes, rng);
        std::vector<int> labels(batch);
        for (auto& y : labels) y = static_cast<int>(rng.UniformInt(classes));
        worst = std::max(worst, MatrixGradError(
            [&](const Matrix& m) { return CrossEntropyLoss(m, labels).value; },
            CrossEntropyLoss(logits, labels).grad, logits, opts.perturb_gradient));
        const Matrix s = RandomMatrix(batch, classes, rng);
        const Matrix o = RandomMatrix(batch, classes, rng);
        const double varpi = rng.Uniform();
        const auto kl = ClasswiseKlLoss(s, o, 2.0, varpi);
        worst = std::max(worst, MatrixGradError(
            [&](const Matrix& m) { return ClasswiseKlLoss(m, o, 2.0, varpi).value; },
            kl.grad_fam, s, opts.perturb_gradient));
        worst = std::max(worst, MatrixGradError(
            [&](const Matrix& m) { return ClasswiseKlLoss(s, m, 2.0, varpi).value; },
            kl.grad_mlp, o, opts.perturb_gradient));
      }
    }
    record("gradient.losses", worst <= 1e-4, "max rel err " + Sci(worst));
  });

  // masked layers
  guarded("mask.kappa_monotone", [&] {
    CounterRng rng(0, streams::kVerify + 6);
    bool ok = true;
    for (int t = 0; t < 50; ++t) {
      MaskedLinear l(6, 5);
      l.InitUniform(rng);
      for (double& k : l.kappa) k = rng.Uniform(0.0, 0.6);
      const auto before = l.Mask();
      const std::size_t i = rng.UniformInt(5);
      l.kappa[i] += rng.Uniform(0.0, 0.5);
      const auto after = l.Mask();
      for (std::size_t j = 0; j < 5; ++j) ok = ok && after[j] <= before[j];
    }
    record("mask.kappa_monotone", ok);
  });
  guarded("fam.gating", [&] {
    CounterRng rng(0, streams::kVerify + 7);
    FamModel fam(8);
    fam.Init(rng);
    const Matrix x = RandomMatrix(5, 8, rng);
    const Matrix gate = fam.Gate(x);
    const Matrix y = fam.Apply(x);
    bool ok = true;
    for (std::size_t i = 0; i < x.data.size(); ++i) {
      ok = ok && gate.data[i] >= 0.0 && gate.data[i] <= 1.0 &&
           y.data[i] == x.data[i] * gate.data[i];
    }
    record("fam.gating", ok);
  });
  guarded("fam.parameter_count", [&] {
    const std::size_t n = FamModel(512).ParameterCount();
    record("fam.parameter_count", n >= 500000 && n <= 550000,
           std::to_string(n) + " parameters at D=512");
  });
  guarded("gradient.relaxed_objective", [&] {
    double worst = 0.0;
    std::size_t instances = 0;
    std::uint64_t seed = 0;
    for (std::size_t batch : {2u, 4u}) {
      for (std::size_t classes : {2u, 3u}) {
        for (std::size_t dim : {4u, 8u}) {
          for (int rep = 0; rep < 3; ++rep) {
            GradientProbe probe(seed++, batch, classes, dim);
            worst = std::max(worst, probe.MaxError(opts.perturb_gradient));
            ++instances;
          }
        }
      }
    }
    record("gradient.relaxed_objective", worst <= 1e-4,
           std::to_string(instances) + " instances, max rel err " + Sci(worst));
  });
  guarded("forward.determinism", [&] {
    CounterRng rng(0, streams::kVerify + 8);
    FamModel fam(8);
    fam.Init(rng);
    MlpModel mlp(8, 16, 3);
    mlp.Init(rng);
    const Matrix x = RandomMatrix(4, 8, rng);
    record("forward.determinism",
           fam.Apply(x) == fam.Apply(x) &&
               mlp.Forward(fam.Apply(x)) == mlp.Forward(fam.Apply(x)));
  });

  // losses: values
  guarded("losses.nonnegative", [&] {
    CounterRng rng(0, streams::kVerify + 9);
    bool ok = true;
    for (int t = 0; t < 30; ++t) {
      const Matrix sim = RandomMatrix(4, 4, rng, 0.5);
      const Matrix s = RandomMatrix(4, 3, rng);
      const Matrix o = RandomMatrix(4, 3, rng);
      std::vector<int> labels = {0, 1, 2, 1};
      ok = ok && ContrastiveLoss(sim, 0.01).value >= 0.0 &&
           CrossEntropyLoss(s, labels).value >= 0.0 &&
           ClasswiseKlLoss(s, o, 2.0, rng.Uniform()).value >= 0.0;
    }
    record("losses.nonnegative", ok);
  });
  guarded("kl.zero_iff_equal", [&] {
    CounterRng rng(0, streams::kVerify + 10);
    const Matrix s = RandomMatrix(4, 3, rng);
    Matrix shifted = s;
    // Adding a per-class constant leaves the batch-wise distributions equal.
    for (std::size_t j = 0; j < 4; ++j) {
      for (std::size_t c = 0; c < 3; ++c) shifted.data[j * 3 + c] += static_cast<double>(c);
    }
    const Matrix o = RandomMatrix(4, 3, rng);
    const double same = ClasswiseKlLoss(s, shifted, 2.0, 0.3).value;
    const double diff = ClasswiseKlLoss(s, o, 2.0, 0.3).value;
    record("kl.zero_iff_equal", std::abs(same) <= 1e-12 && diff > 1e-6);
  });
  guarded("varpi.range_complement", [&] {
    CounterRng rng(0, streams::kVerify + 11);
    bool ok = DynamicWeight(0.0, 0.0) == 0.5;
    for (int t = 0; t < 50; ++t) {
      const double a = rng.Uniform(0.0, 2.0);
      const double b = rng.Uniform(0.0, 2.0);
      const double w = DynamicWeight(a, b);
      ok = ok && w >= 0.0 && w <= 1.0 && std::abs(w + DynamicWeight(b, a) - 1.0) <= 1e-12;
    }
    record("varpi.range_complement", ok);
  });
  guarded("ensemble.prob_vector", [&] {
    CounterRng rng(0, streams::kVerify + 12);
    bool ok = true;
    for (int t = 0; t < 50; ++t) {
      std::vector<double> a(4), b(4);
      for (double& v : a) v = 4.0 * rng.Normal();
      for (double& v : b) v = 4.0 * rng.Normal();
      ok = ok && IsProbVector(EnsemblePredict(Softmax(a), Softmax(b)));
    }
    record("ensemble.prob_vector", ok);
  });
  guarded("classwise.scale_invariance", [&] {
    CounterRng rng(0, streams::kVerify + 13);
    const Matrix s = RandomMatrix(5, 3, rng);
    Matrix scaled = s;
    const double k = 3.7;
    for (double& v : scaled.data) v *= k;
    const Matrix a = ClasswiseTempSoftmax(s, 2.0);
    const Matrix b = ClasswiseTempSoftmax(scaled, 2.0 * k);
    double worst = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i) worst = std::max(worst, std::abs(a.data[i] - b.data[i]));
    record("classwise.scale_invariance", worst <= 1e-12, "max diff " + Sci(worst));
  });

  // client
  CounterRng bank_rng(0, streams::kVerify + 14);
  const EmbeddingBank tiny = TinyBank(40, 6, 3, bank_rng);
  const auto tiny_split = SplitBank(tiny, SplitSpec{});
  TrainingConfig tiny_cfg;
  tiny_cfg.hidden = 12;
  tiny_cfg.batch_size = 8;
  const auto make_client = [&](int id, const TrainingConfig& cfg) {
    FamModel fam(6);
    CounterRng r(0, streams::kFamInit);
    fam.Init(r);
    return Client(id, fam, tiny_split.train, tiny_split.val, tiny_split.test, cfg, 0);
  };
  guarded("client.import_keeps_mlp", [&] {
    Client c = make_client(0, tiny_cfg);
    c.LocalEpoch();
    const MlpModel before = c.mlp();
    FamModel other(6);
    CounterRng r(1, streams::kFamInit);
    other.Init(r);
    c.ImportFam(SnapshotParameters(other.Parameters()));
    const MlpModel& after = c.mlp();
    record("client.import_keeps_mlp",
           before.hidden.weight == after.hidden.weight &&
               before.hidden.bias == after.hidden.bias &&
               before.hidden.kappa == after.hidden.kappa &&
               before.output.weight == after.output.weight &&
               before.output.bias == after.output.bias &&
               before.output.kappa == after.output.kappa &&
               c.ExportFam() == SnapshotParameters(other.Parameters()));
  });
  guarded("client.lambda0_decoupled", [&] {
    TrainingConfig cfg = tiny_cfg;
    cfg.lambda = 0.0;
    cfg.mlp_grad_to_fam = false;
    CounterRng r(0, streams::kVerify + 15);
    FamModel fam(6);
    fam.Init(r);
    MlpModel mlp_a(6, 12, 3), mlp_b(6, 12, 3);
    mlp_a.Init(r);
    mlp_b.Init(r);
    const Matrix x = RandomMatrix(8, 6, r);
    std::vector<int> y = {0, 1, 2, 0, 1, 2, 0, 1};
    FamModel ga = fam.ZerosLike(), gb = fam.ZerosLike();
    MlpModel ma = mlp_a.ZerosLike(), mb = mlp_b.ZerosLike();
    EvaluateObjective(fam, mlp_a, x, y, tiny.text_features, cfg, &ga, &ma);
    EvaluateObjective(fam, mlp_b, x, y, tiny.text_features, cfg, &gb, &mb);
    // The MLP side must see only the masked features.
    MlpModel::Cache cache;
    const Matrix logits = mlp_a.Forward(fam.Apply(x), &cache);
    MlpModel direct = mlp_a.ZerosLike();
    mlp_a.Backward(cache, CrossEntropyLoss(logits, y).grad, direct);
    record("client.lambda0_decoupled",
           SnapshotParameters(ga.Parameters()) == SnapshotParameters(gb.Parameters()) &&
               SnapshotParameters(ma.Parameters()) == SnapshotParameters(direct.Parameters()));
  });
  guarded("client.lr_schedule", [&] {
    Client c = make_client(0, tiny_cfg);
    bool ok = true;
    for (int k = 0; k < 4; ++k) {
      ok = ok && c.lr_fam() == tiny_cfg.lr_fam * std::pow(0.97, k) &&
           c.lr_mlp() == tiny_cfg.lr_mlp * std::pow(0.97, k);
      c.LocalEpoch();
    }
    record("client.lr_schedule", ok);
  });
  guarded("optimizer.adamw_reference", [&] {
    OptimizerConfig oc;
    AdamW opt(oc);
    std::vector<double> w = {1.5, -0.7};
    std::vector<double> b = {0.3};
    std::vector<double> gw(2), gb(1);
    // Hand-rolled reference of the decoupled update.
    std::vector<double> rw = w, rb = b, m(3, 0.0), v(3, 0.0);
    double worst = 0.0;
    for (int t = 1; t <= 100; ++t) {
      const double lr = 0.01;
      const auto grad = [](double x0, double x1, double x2) {
        return std::vector<double>{2.0 * x0 + x1, x0 + 4.0 * x1 - x2, 2.0 * x2 - x1};
      };
      const auto g = grad(w[0], w[1], b[0]);
      gw = {g[0], g[1]};
      gb = {g[2]};
      std::vector<ParamSlot> ps = {{"w", {2}, w, true}, {"b", {1}, b, false}};
      std::vector<ParamSlot> gs = {{"w", {2}, gw, true}, {"b", {1}, gb, false}};
      opt.Step(ps, gs, lr);
      const auto rg = grad(rw[0], rw[1], rb[0]);
      double* ref[3] = {&rw[0], &rw[1], &rb[0]};
      for (int i = 0; i < 3; ++i) {
        if (i < 2) *ref[i] *= 1.0 - lr * oc.weight_decay;
        m[i] = oc.beta1 * m[i] + (1.0 - oc.beta1) * rg[i];
        v[i] = oc.beta2 * v[i] + (1.0 - oc.beta2) * rg[i] * rg[i];
        const double mh = m[i] / (1.0 - std::pow(oc.beta1, t));
        const double vh = v[i] / (1.0 - std::pow(oc.beta2, t));
        *ref[i] -= lr * mh / (std::sqrt(vh) + oc.eps);
      }
      worst = std::max({worst, std::abs(w[0] - rw[0]), std::abs(w[1] - rw[1]),
                        std::abs(b[0] - rb[0])});
    }
    record("optimizer.adamw_reference", worst <= 1e-10, "max diff " + Sci(worst));
  });

  // wire codec
  CounterRng wire_rng(0, streams::kVerify + 16);
  TensorList sample = {{"layer1.W", {3, 4}, {}}, {"layer1.b", {3}, {}}, {"x", {2, 1, 2}, {}}};
  for (auto& t : sample) {
    t.values.resize(t.element_count());
    for (double& v : t.values) v = wire_rng.Normal();
  }
  guarded("wire.roundtrip_structure", [&] {
    bool ok = true;
    for (bool compress : {true, false}) {
      const auto back = Unpack(Pack(sample, compress));
      ok = ok && back.size() == sample.size();
      for (std::size_t k = 0; ok && k < back.size(); ++k) {
        ok = back[k].name == sample[k].name && back[k].shape == sample[k].shape;
      }
    }
    record("wire.roundtrip_structure", ok);
  });
  guarded("wire.quantization_bound", [&] {
    bool ok = true;
    double worst_rel = 0.0;
    for (int t = 0; t < 20000; ++t) {
      const double mag = std::ldexp(wire_rng.Uniform(1.0, 2.0), static_cast<int>(wire_rng.UniformInt(30)) - 14);
      const double x = (wire_rng.Uniform() < 0.5 ? -1.0 : 1.0) * std::min(mag, 65504.0);
      const double rel = std::abs(QuantizeHalf(x) - x) / std::abs(x);
      worst_rel = std::max(worst_rel, rel);
      const double sub = wire_rng.Uniform(-1.0, 1.0) * std::ldexp(1.0, -14);
      ok = ok && std::abs(QuantizeHalf(sub) - sub) <= std::ldexp(1.0, -25);
    }
    ok = ok && worst_rel <= std::ldexp(1.0, -11);
    record("wire.quantization_bound", ok, "max rel err " + Sci(worst_rel));
  });
  guarded("wire.idempotent", [&] {
    const WirePacket once = Pack(sample);
    record("wire.idempotent", Pack(Unpack(once)).bytes == once.bytes);
  });
  guarded("wire.golden_header", [&] {
    const std::vector<std::uint8_t> golden = {
        0x46, 0x4D, 0x43, 0x31, 0x00, 0x01, 0x00, 0x00, 0x00, 0x01, 0x00, 0x01,
        0x77, 0x01, 0x01, 0x00, 0x00, 0x00, 0x02, 0x3C, 0x00, 0xC0, 0x00};
    record("wire.golden_header",
           SerializePayload({{"w", {2}, {1.0, -2.0}}}, WireDtype::kFloat16) == golden);
  });

  // server
  guarded("server.aggregate_permutation", [&] {
    CounterRng r(0, streams::kVerify + 17);
    std::vector<TensorList> ups(5, sample);
    for (auto& u : ups) {
      for (auto& t : u) {
        for (double& v : t.values) v = r.Normal();
      }
    }
    const TensorList base = Aggregate(ups);
    std::vector<TensorList> rev(ups.rbegin(), ups.rend());
    const TensorList perm = Aggregate(rev);
    double worst = 0.0;
    for (std::size_t k = 0; k < base.size(); ++k) {
      for (std::size_t i = 0; i < base[k].values.size(); ++i) {
        double loop = 0.0;
        for (const auto& u : ups) loop += u[k].values[i];
        loop /= 5.0;
        worst = std::max({worst, std::abs(base[k].values[i] - perm[k].values[i]),
                          std::abs(base[k].values[i] - loop)});
      }
    }
    record("server.aggregate_permutation", worst <= 1e-12, "max diff " + Sci(worst));
  });
  guarded("server.comm_accounting", [&] {
    std::vector<Client> clients;
    clients.push_back(make_client(0, tiny_cfg));
    clients.push_back(make_client(1, tiny_cfg));
    Server server(clients[0].ExportFam(), true);
    bool ok = true;
    std::size_t recount = 0;
    for (int round = 0; round < 2; ++round) {
      const std::size_t down = Pack(server.global_fam()).bytes.size();
      const auto report = server.RunRound(clients, 1);
      for (std::size_t k = 0; k < clients.size(); ++k) {
        const std::size_t up = Pack(clients[k].ExportFam()).bytes.size();
        ok = ok && report.clients[k].bytes_up == up && report.clients[k].bytes_down == down;
        recount += up + down;
      }
      // Every client now holds the broadcast global model through one
      // quantization round trip.
      const auto next = Unpack(Pack(server.global_fam()));
      for (auto& c : clients) {
        Client probe = c;
        probe.ImportFam(next);
        const auto got = probe.ExportFam();
        for (std::size_t t = 0; t < got.size(); ++t) {
          for (std::size_t i = 0; i < got[t].values.size(); ++i) {
            const double g = server.global_fam()[t].values[i];
            const double tol = std::max(std::abs(g) * std::ldexp(1.0, -11), std::ldexp(1.0, -25));
            ok = ok && std::abs(got[t].values[i] - g) <= tol;
          }
        }
      }
    }
    std::size_t logged = 0;
    std::size_t prev_round = 0;
    for (const auto& rec : server.comm_log()) {
      logged += rec.bytes_up + rec.bytes_down;
      ok = ok && rec.round >= prev_round;
      prev_round = rec.round;
    }
    record("server.comm_accounting", ok && logged == recount,
           std::to_string(logged) + " bytes logged");
  });

  // datastore
  guarded("bank.roundtrip", [&] {
    record("bank.roundtrip", ParseBank(SerializeBank(tiny)) == tiny);
  });
  guarded("partition.exact", [&] {
    bool ok = true;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      CounterRng r(seed, streams::kVerify + 18);
      const EmbeddingBank b = TinyBank(30 + r.UniformInt(60), 4, 2 + r.UniformInt(4), r);
      const auto keys = SampleKeys(b);
      const auto split = SplitBank(b, SplitSpec{0.6, 0.2, 0.2, seed});
      std::vector<std::uint64_t> got;
      for (const auto* part : {&split.train, &split.val, &split.test}) {
        const auto k = SampleKeys(*part);
        got.insert(got.end(), k.begin(), k.end());
      }
      std::sort(got.begin(), got.end());
      ok = ok && got == keys;
      const auto parts = DirichletPartition(b, 3, 0.5, seed);
      got.clear();
      for (const auto& p : parts) {
        const auto k = SampleKeys(p);
        got.insert(got.end(), k.begin(), k.end());
      }
      std::sort(got.begin(), got.end());
      ok = ok && got == keys;
    }
    record("partition.exact", ok);
  });
  guarded("split.stratified", [&] {
    bool ok = true;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      CounterRng r(seed, streams::kVerify + 19);
      const EmbeddingBank b = TinyBank(40 + r.UniformInt(80), 4, 3, r);
      const auto split = SplitBank(b, SplitSpec{0.6, 0.2, 0.2, seed});
      for (int c = 0; c < 3; ++c) {
        const auto n = std::count(b.labels.begin(), b.labels.end(), c);
        if (n < 5) continue;
        const auto tr = std::count(split.train.labels.begin(), split.train.labels.end(), c);
        ok = ok && std::abs(static_cast<double>(tr) - 0.6 * static_cast<double>(n)) <= 1.0;
      }
    }
    record("split.stratified", ok);
  });

  // metrics
  guarded("ece.calibrated_zero", [&] {
    // Each occupied bin's accuracy equals its confidence.
    std::vector<double> conf = {0.8, 0.8, 0.8, 0.8, 0.8, 0.5, 0.5};
    std::vector<std::uint8_t> hit = {1, 1, 1, 1, 0, 1, 0};
    const double ece = ExpectedCalibrationError(conf, hit);
    record("ece.calibrated_zero", std::abs(ece) <= 1e-12, "ece " + Sci(ece));
  });
  guarded("f1.relabel_invariance", [&] {
    CounterRng r(0, streams::kVerify + 20);
    bool ok = true;
    for (int t = 0; t < 20; ++t) {
      std::vector<int> p(30), y(30);
      for (auto& v : p) v = static_cast<int>(r.UniformInt(4));
      for (auto& v : y) v = static_cast<int>(r.UniformInt(4));
      std::vector<int> perm = {0, 1, 2, 3};
      r.Shuffle(perm);
      std::vector<int> pp(30), yp(30);
      for (std::size_t i = 0; i < 30; ++i) {
        pp[i] = perm[static_cast<std::size_t>(p[i])];
        yp[i] = perm[static_cast<std::size_t>(y[i])];
      }
      ok = ok && std::abs(MacroF1(p, y, 4) - MacroF1(pp, yp, 4)) <= 1e-12;
    }
    record("f1.relabel_invariance", ok);
  });
  guarded("wilcoxon.pmf_sums_to_one", [&] {
    double worst = 0.0;
    for (const auto& mags : std::vector<std::vector<double>>{
             {1, 2, 3, 4, 5, 6}, {1, 1, 2, 3, 3, 3, 7}, {0.5, 0.5, 0.5, 0.5, 0.5}}) {
      const auto pmf = WilcoxonNullPmf(AverageRanks(mags));
      worst = std::max(worst, std::abs(std::accumulate(pmf.begin(), pmf.end(), 0.0) - 1.0));
    }
    record("wilcoxon.pmf_sums_to_one", worst <= 1e-12, "max dev " + Sci(worst));
  });
  return out;
}

inline std::string RenderVerification(const std::vector<PropertyResult>& results) {
  std::string text;
  std::size_t failed = 0;
  for (const auto& r : results) {
    text += r.passed ? "PASS  " : "FAIL  ";
    text += r.name;
    if (!r.detail.empty()) text += "  (" + r.detail + ")";
    text += "\n";
    if (!r.passed) ++failed;
  }
  text += std::to_string(results.size() - failed) + "/" +
          std::to_string(results.size()) + " properties passed\n";
  return text;
}

}  // namespace maskfed

#endif  // MASKFED_VERIFY_HPP_
