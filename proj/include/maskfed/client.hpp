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

// One federated client: a communicated FAM, a private masked MLP head, their
// optimizers, and the client's train/val/test embedding banks.

#ifndef MASKFED_CLIENT_HPP_
#define MASKFED_CLIENT_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "maskfed/datastore.hpp"
#include "maskfed/error.hpp"
#include "maskfed/losses.hpp"
#include "maskfed/masked_layers.hpp"
#include "maskfed/metrics.hpp"
#include "maskfed/numerics.hpp"
#include "maskfed/optimizer.hpp"
#include "maskfed/rng.hpp"
#include "maskfed/tensors.hpp"

namespace maskfed {

struct TrainingConfig {
  double lambda = 0.04;
  double temperature = 2.0;  // T of the class-wise softmax
  double tau = 0.01;         // CLIP softmax temperature
  double lr_fam = 5e-4;
  double lr_mlp = 1e-3;
  double gamma = 0.97;
  std::size_t batch_size = 32;
  std::size_t hidden = 256;
  OptimizerConfig optimizer;
  double mask_window = 1.0;
  bool mask_fam = true;
  bool reset_fam_optimizer = false;
  // Whether the MLP losses backpropagate through the masked features into the
  // FAM. On by default so the total objective is differentiated exactly.
  bool mlp_grad_to_fam = true;
};

struct ObjectiveTerms {
  double contrastive = 0.0;
  double mlp = 0.0;
  double similarity = 0.0;
  double total = 0.0;
  double varpi = 0.5;
};

// Multipliers on each term, for isolating one loss in gradient checks.
struct TermWeights {
  double contrastive = 1.0;
  double mlp = 1.0;
  double similarity = 1.0;
};

// FAM-path logits s_jc = cos(masked_j, text_c) / tau.
inline Matrix FamLogits(const Matrix& masked, const Matrix& text_features,
                        double tau) {
  Matrix s = CosineMatrix(masked, text_features);
  for (double& v : s.data) v /= tau;
  return s;
}

// Full local objective on one batch. Gradients are accumulated into the
// optional accumulators. The dynamic weight is computed from batch-mean
// entropies unless `fixed_varpi` is given; it is a constant for
// backpropagation either way.
inline ObjectiveTerms EvaluateObjective(
    const FamModel& fam, const MlpModel& mlp, const Matrix& features,
    std::span<const int> labels, const Matrix& text_features,
    const TrainingConfig& config, FamModel* fam_grad, MlpModel* mlp_grad,
    std::optional<double> fixed_varpi = std::nullopt,
    TermWeights weights = {}) {
  const std::size_t batch = features.rows;
  const std::size_t classes = text_features.rows;
  Require(batch > 0, ErrorCode::kEmptyInput, "objective of empty batch");
  Require(labels.size() == batch, ErrorCode::kInvalidInput,
          "label count does not match batch");

  FamModel::Cache fam_cache;
  const Matrix masked = fam.Apply(features, &fam_cache);
  const Matrix class_sim = CosineMatrix(masked, text_features);
  Matrix fam_logits = class_sim;
  for (double& v : fam_logits.data) v /= config.tau;

  // S_jk = cos(masked_j, text_{y_k}).
  Matrix batch_sim(batch, batch);
  for (std::size_t j = 0; j < batch; ++j)
    for (std::size_t k = 0; k < batch; ++k)
      batch_sim(j, k) = class_sim(j, static_cast<std::size_t>(labels[k]));
  const auto contrastive = ContrastiveLoss(batch_sim, config.tau);

  MlpModel::Cache mlp_cache;
  const Matrix mlp_logits = mlp.Forward(masked, &mlp_cache);
  const auto ce = CrossEntropyLoss(mlp_logits, labels);

  ObjectiveTerms terms;
  terms.varpi = fixed_varpi ? *fixed_varpi
                            : DynamicWeight(SoftmaxRows(fam_logits),
                                            SoftmaxRows(mlp_logits));
  const auto sim =
      ClasswiseKlLoss(fam_logits, mlp_logits, config.temperature, terms.varpi);
  terms.contrastive = contrastive.value;
  terms.mlp = ce.value;
  terms.similarity = sim.value;
  terms.total = TotalLoss(weights.contrastive * contrastive.value,
                          weights.mlp * ce.value,
                          weights.similarity * sim.value, config.lambda);
  if (fam_grad == nullptr && mlp_grad == nullptr) return terms;

  const double sim_scale = config.lambda * weights.similarity;
  Matrix d_class_sim(batch, classes);
  for (std::size_t j = 0; j < batch; ++j) {
    for (std::size_t k = 0; k < batch; ++k) {
      d_class_sim(j, static_cast<std::size_t>(labels[k])) +=
          weights.contrastive * contrastive.grad(j, k);
    }
    for (std::size_t c = 0; c < classes; ++c) {
      d_class_sim(j, c) += sim_scale * sim.grad_fam(j, c) / config.tau;
    }
  }
  Matrix d_masked = CosineMatrixBackward(masked, text_features, d_class_sim);

  Matrix d_mlp_logits(batch, classes);
  for (std::size_t k = 0; k < d_mlp_logits.size(); ++k) {
    d_mlp_logits.data[k] =
        weights.mlp * ce.grad.data[k] + sim_scale * sim.grad_mlp.data[k];
  }
  MlpModel scratch;
  if (mlp_grad == nullptr) scratch = mlp.ZerosLike();
  MlpModel& mlp_target = mlp_grad != nullptr ? *mlp_grad : scratch;
  const Matrix d_from_mlp = mlp.Backward(mlp_cache, d_mlp_logits, mlp_target);
  if (config.mlp_grad_to_fam) {
    for (std::size_t k = 0; k < d_masked.size(); ++k)
      d_masked.data[k] += d_from_mlp.data[k];
  }
  if (fam_grad != nullptr) fam.Backward(fam_cache, d_masked, *fam_grad);
  return terms;
}

struct EpochReport {
  double contrastive = 0.0;
  double mlp = 0.0;
  double similarity = 0.0;
  double total = 0.0;
  std::size_t batches = 0;
  bool operator==(const EpochReport&) const = default;
};

struct Metrics {
  double accuracy = 0.0;
  double macro_f1 = 0.0;
  double ece = 0.0;
};

struct Evaluation {
  Metrics ensemble;
  Metrics fam_only;
  Metrics mlp_only;
  CalibrationReport calibration;  // of the ensemble
  Matrix ensemble_probs;          // N x C
  std::vector<int> predictions;   // argmax of ensemble_probs
};

inline Metrics ScoreProbabilities(const Matrix& probs,
                                  std::span<const int> labels,
                                  CalibrationReport* calibration = nullptr) {
  std::vector<int> preds(probs.rows);
  std::vector<double> confidence(probs.rows);
  std::vector<std::uint8_t> correct(probs.rows);
  for (std::size_t i = 0; i < probs.rows; ++i) {
    const auto row = probs.row(i);
    preds[i] = static_cast<int>(ArgMax(row));
    confidence[i] = std::clamp(row[static_cast<std::size_t>(preds[i])], 0.0, 1.0);
    correct[i] = preds[i] == labels[i];
  }
  Metrics m;
  m.accuracy = Accuracy(preds, labels);
  m.macro_f1 = MacroF1(preds, labels, probs.cols);
  auto report = Calibration(confidence, correct);
  m.ece = report.ece;
  if (calibration != nullptr) *calibration = std::move(report);
  return m;
}

// p^FAM for every sample of `bank`.
inline Matrix FamProbabilities(const FamModel& fam, const EmbeddingBank& bank,
                               double tau) {
  const Matrix masked = fam.Apply(bank.features);
  return SoftmaxRows(FamLogits(masked, bank.text_features, tau));
}

inline Evaluation EvaluateModels(const FamModel& fam, const MlpModel& mlp,
                                 const EmbeddingBank& bank, double tau) {
  Require(!bank.empty(), ErrorCode::kEmptyInput, "evaluation on empty split");
  const Matrix masked = fam.Apply(bank.features);
  const Matrix fam_probs = SoftmaxRows(FamLogits(masked, bank.text_features, tau));
  const Matrix mlp_probs = SoftmaxRows(mlp.Forward(masked));
  Evaluation eval;
  eval.ensemble_probs = Matrix(bank.size(), bank.classes());
  eval.predictions.resize(bank.size());
  for (std::size_t i = 0; i < bank.size(); ++i) {
    const auto p = EnsemblePredict(mlp_probs.row(i), fam_probs.row(i));
    std::copy(p.begin(), p.end(), eval.ensemble_probs.row(i).begin());
    eval.predictions[i] = static_cast<int>(ArgMax(p));
  }
  eval.ensemble =
      ScoreProbabilities(eval.ensemble_probs, bank.labels, &eval.calibration);
  eval.fam_only = ScoreProbabilities(fam_probs, bank.labels);
  eval.mlp_only = ScoreProbabilities(mlp_probs, bank.labels);
  return eval;
}

enum class Split { kTrain, kVal, kTest };

class Client {
 public:
  Client(int id, FamModel initial_fam, EmbeddingBank train, EmbeddingBank val,
         EmbeddingBank test, const TrainingConfig& config, std::uint64_t seed)
      : id_(id),
        config_(config),
        fam_(std::move(initial_fam)),
        fam_optimizer_(config.optimizer),
        mlp_optimizer_(config.optimizer),
        train_(std::make_shared<const EmbeddingBank>(std::move(train))),
        val_(std::make_shared<const EmbeddingBank>(std::move(val))),
        test_(std::make_shared<const EmbeddingBank>(std::move(test))),
        shuffle_rng_(seed, streams::kShuffleBase + static_cast<std::uint64_t>(id)) {
    Require(fam_.dim() == train_->dim, ErrorCode::kInvalidInput,
            "FAM dimension does not match client bank");
    fam_.SetMasking(config.mask_fam, config.mask_window);
    mlp_ = MlpModel(train_->dim, config.hidden, train_->classes());
    CounterRng init_rng(seed,
                        streams::kMlpInitBase + static_cast<std::uint64_t>(id));
    mlp_.Init(init_rng);
    mlp_.SetMaskWindow(config.mask_window);
  }

  int id() const { return id_; }
  const FamModel& fam() const { return fam_; }
  FamModel& mutable_fam() { return fam_; }
  const MlpModel& mlp() const { return mlp_; }
  MlpModel& mutable_mlp() { return mlp_; }
  const TrainingConfig& config() const { return config_; }
  const EmbeddingBank& bank(Split split) const {
    switch (split) {
      case Split::kTrain: return *train_;
      case Split::kVal: return *val_;
      case Split::kTest: return *test_;
    }
    return *train_;
  }
  std::size_t epochs() const { return epochs_; }

  // Learning rates after the exponential schedule: lr0 * gamma^epochs.
  double lr_fam() const {
    return config_.lr_fam * std::pow(config_.gamma, static_cast<double>(epochs_));
  }
  double lr_mlp() const {
    return config_.lr_mlp * std::pow(config_.gamma, static_cast<double>(epochs_));
  }

  // One pass over the shuffled training bank; the trailing partial batch is
  // kept.
  EpochReport LocalEpoch() {
    const EmbeddingBank& bank = *train_;
    Require(!bank.empty(), ErrorCode::kEmptyInput,
            "client " + std::to_string(id_) + " has an empty training bank");
    Require(config_.batch_size >= 1, ErrorCode::kInvalidInput,
            "batch size must be >= 1");
    std::vector<std::size_t> order(bank.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    shuffle_rng_.Shuffle(order);

    const double lr_f = lr_fam();
    const double lr_m = lr_mlp();
    EpochReport report;
    const double n = static_cast<double>(bank.size());
    for (std::size_t start = 0; start < order.size();
         start += config_.batch_size) {
      const std::size_t end = std::min(order.size(), start + config_.batch_size);
      Matrix x(end - start, bank.dim);
      std::vector<int> y(end - start);
      for (std::size_t k = start; k < end; ++k) {
        const auto src = bank.features.row(order[k]);
        std::copy(src.begin(), src.end(), x.row(k - start).begin());
        y[k - start] = bank.labels[order[k]];
      }
      const std::string where = "client " + std::to_string(id_) + " batch " +
                                std::to_string(report.batches);
      if (!AllFinite(x.data) || !ParametersFinite()) {
        throw Error(ErrorCode::kTrainingDiverged,
                    where + " has non-finite inputs or parameters");
      }
      FamModel fam_grad = fam_.ZerosLike();
      MlpModel mlp_grad = mlp_.ZerosLike();
      ObjectiveTerms terms;
      try {
        terms = EvaluateObjective(fam_, mlp_, x, y, bank.text_features, config_,
                                  &fam_grad, &mlp_grad);
      } catch (const Error& e) {
        throw Error(e.code(), where + ": " + e.what());
      }
      if (!std::isfinite(terms.total)) {
        throw Error(ErrorCode::kTrainingDiverged,
                    where + " produced a non-finite loss");
      }
      fam_optimizer_.Step(fam_.Parameters(), fam_grad.Parameters(), lr_f);
      mlp_optimizer_.Step(mlp_.Parameters(), mlp_grad.Parameters(), lr_m);
      if (!ParametersFinite()) {
        throw Error(ErrorCode::kTrainingDiverged,
                    where + " left non-finite parameters");
      }
      const double share = static_cast<double>(end - start) / n;
      report.contrastive += share * terms.contrastive;
      report.mlp += share * terms.mlp;
      report.similarity += share * terms.similarity;
      report.total += share * terms.total;
      ++report.batches;
    }
    ++epochs_;
    return report;
  }

  Evaluation Evaluate(Split split) const {
    return EvaluateModels(fam_, mlp_, bank(split), config_.tau);
  }

  // FAM parameters only; the MLP head never leaves the client.
  TensorList ExportFam() const {
    FamModel copy = fam_;
    return SnapshotParameters(copy.Parameters());
  }

  void ImportFam(const TensorList& tensors) {
    RestoreParameters(fam_.Parameters(), tensors);
    if (config_.reset_fam_optimizer) fam_optimizer_.Reset();
  }

 private:
  bool ParametersFinite() {
    for (const auto& slot : fam_.Parameters()) {
      if (!AllFinite(slot.values)) return false;
    }
    for (const auto& slot : mlp_.Parameters()) {
      if (!AllFinite(slot.values)) return false;
    }
    return true;
  }

  int id_;
  TrainingConfig config_;
  FamModel fam_;
  MlpModel mlp_;
  AdamW fam_optimizer_;
  AdamW mlp_optimizer_;
  std::shared_ptr<const EmbeddingBank> train_;
  std::shared_ptr<const EmbeddingBank> val_;
  std::shared_ptr<const EmbeddingBank> test_;
  CounterRng shuffle_rng_;
  std::size_t epochs_ = 0;
};

}  // namespace maskfed

#endif  // MASKFED_CLIENT_HPP_
