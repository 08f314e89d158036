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

// Training objectives: image-text contrastive loss, MLP cross-entropy, the
// class-wise symmetric KL between FAM and MLP logits, the entropy-ratio weight
// that balances the two KL directions, and ensemble inference.

#ifndef MASKFED_LOSSES_HPP_
#define MASKFED_LOSSES_HPP_

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "maskfed/error.hpp"
#include "maskfed/numerics.hpp"

namespace maskfed {

struct LossWithGrad {
  double value = 0.0;
  Matrix grad;  // same shape as the differentiated input
};

struct PairLossWithGrad {
  double value = 0.0;
  Matrix grad_fam;  // d/ds
  Matrix grad_mlp;  // d/do
};

// Symmetric image-text contrastive loss over a B x B similarity matrix:
// P = rowsoftmax(S/tau), Q = rowsoftmax(S^T/tau),
// L = -(1/B) sum_j (ln P_jj + ln Q_jj) / 2.
inline LossWithGrad ContrastiveLoss(const Matrix& similarities, double tau) {
  const std::size_t batch = similarities.rows;
  Require(batch > 0, ErrorCode::kEmptyInput, "contrastive loss of empty batch");
  Require(similarities.cols == batch, ErrorCode::kInvalidInput,
          "contrastive similarity matrix must be square");
  Require(tau > 0.0, ErrorCode::kInvalidInput, "tau must be positive");
  const double inv_tau = 1.0 / tau;
  Matrix transposed(batch, batch);
  for (std::size_t i = 0; i < batch; ++i)
    for (std::size_t j = 0; j < batch; ++j)
      transposed(j, i) = similarities(i, j);
  const Matrix p = SoftmaxRows(similarities, tau);
  const Matrix q = SoftmaxRows(transposed, tau);

  LossWithGrad out;
  out.grad = Matrix(batch, batch);
  double total = 0.0;
  for (std::size_t j = 0; j < batch; ++j) {
    const double log_p = similarities(j, j) * inv_tau -
                         LogSumExp(similarities.row(j), inv_tau);
    const double log_q =
        similarities(j, j) * inv_tau - LogSumExp(transposed.row(j), inv_tau);
    total += 0.5 * (log_p + log_q);
  }
  out.value = -total / static_cast<double>(batch);
  // dL/dS_ab = -(1 / (2 B tau)) [(d_ab - P_ab) + (d_ab - Q_ba)]
  const double scale = -0.5 * inv_tau / static_cast<double>(batch);
  for (std::size_t a = 0; a < batch; ++a) {
    for (std::size_t b = 0; b < batch; ++b) {
      const double delta = a == b ? 1.0 : 0.0;
      out.grad(a, b) = scale * ((delta - p(a, b)) + (delta - q(b, a)));
    }
  }
  return out;
}

// Mean cross-entropy from logits, L = -(1/B) sum_j ln softmax(o_j)[y_j].
inline LossWithGrad CrossEntropyLoss(const Matrix& logits,
                                     std::span<const int> labels) {
  const std::size_t batch = logits.rows;
  Require(batch > 0, ErrorCode::kEmptyInput, "cross-entropy of empty batch");
  Require(labels.size() == batch, ErrorCode::kInvalidInput,
          "label count does not match batch");
  LossWithGrad out;
  out.grad = Matrix(batch, logits.cols);
  const double inv_b = 1.0 / static_cast<double>(batch);
  for (std::size_t j = 0; j < batch; ++j) {
    const int y = labels[j];
    Require(y >= 0 && static_cast<std::size_t>(y) < logits.cols,
            ErrorCode::kInvalidInput,
            "label " + std::to_string(y) + " out of range");
    const auto row = logits.row(j);
    out.value += (LogSumExp(row) - row[y]) * inv_b;
    const auto p = Softmax(row);
    for (std::size_t c = 0; c < logits.cols; ++c) {
      out.grad(j, c) = (p[c] - (static_cast<int>(c) == y ? 1.0 : 0.0)) * inv_b;
    }
  }
  return out;
}

// Temperature softmax down each column: entry (i, c) is
// exp(l_ic / T) / sum_b exp(l_bc / T). Normalizes over the batch, per class.
inline Matrix ClasswiseTempSoftmax(const Matrix& logits, double temperature) {
  Require(logits.rows > 0, ErrorCode::kEmptyInput,
          "class-wise softmax of empty batch");
  Require(temperature > 0.0, ErrorCode::kInvalidInput,
          "temperature must be positive");
  Matrix out(logits.rows, logits.cols);
  std::vector<double> column(logits.rows);
  for (std::size_t c = 0; c < logits.cols; ++c) {
    for (std::size_t i = 0; i < logits.rows; ++i) column[i] = logits(i, c);
    const auto p = Softmax(column, temperature);
    for (std::size_t i = 0; i < logits.rows; ++i) out(i, c) = p[i];
  }
  return out;
}

// Class-wise weighted symmetric KL:
//   L = (1/C) sum_c sum_i [ w q ln(q/p) + (1-w) p ln(p/q) ]
// with q = ClasswiseTempSoftmax(s, T) (FAM side) and p = that of o (MLP side).
// Both sides receive gradients; w is a constant.
inline PairLossWithGrad ClasswiseKlLoss(const Matrix& fam_logits,
                                        const Matrix& mlp_logits,
                                        double temperature, double varpi) {
  Require(fam_logits.rows == mlp_logits.rows &&
              fam_logits.cols == mlp_logits.cols,
          ErrorCode::kInvalidInput, "distillation logits differ in shape");
  Require(varpi >= 0.0 && varpi <= 1.0, ErrorCode::kInvalidInput,
          "dynamic weight outside [0, 1]");
  const std::size_t batch = fam_logits.rows;
  const std::size_t classes = fam_logits.cols;
  const Matrix q = ClasswiseTempSoftmax(fam_logits, temperature);
  const Matrix p = ClasswiseTempSoftmax(mlp_logits, temperature);
  // Log-probabilities via log-sum-exp so saturated columns stay finite.
  Matrix log_q(batch, classes);
  Matrix log_p(batch, classes);
  std::vector<double> col_s(batch);
  std::vector<double> col_o(batch);
  const double inv_t = 1.0 / temperature;
  for (std::size_t c = 0; c < classes; ++c) {
    for (std::size_t i = 0; i < batch; ++i) {
      col_s[i] = fam_logits(i, c);
      col_o[i] = mlp_logits(i, c);
    }
    const double lse_s = LogSumExp(col_s, inv_t);
    const double lse_o = LogSumExp(col_o, inv_t);
    for (std::size_t i = 0; i < batch; ++i) {
      log_q(i, c) = col_s[i] * inv_t - lse_s;
      log_p(i, c) = col_o[i] * inv_t - lse_o;
    }
  }

  PairLossWithGrad out;
  out.grad_fam = Matrix(batch, classes);
  out.grad_mlp = Matrix(batch, classes);
  const double inv_c = 1.0 / static_cast<double>(classes);
  for (std::size_t c = 0; c < classes; ++c) {
    double kl_qp = 0.0;
    double kl_pq = 0.0;
    for (std::size_t i = 0; i < batch; ++i) {
      const double diff = log_q(i, c) - log_p(i, c);
      kl_qp += q(i, c) * diff;
      kl_pq -= p(i, c) * diff;
    }
    out.value += inv_c * (varpi * kl_qp + (1.0 - varpi) * kl_pq);
    // d KL(q||p)/ds_k = q_k (ln q_k - ln p_k - KL(q||p)) / T,
    // d KL(q||p)/do_k = (p_k - q_k) / T, and symmetrically for KL(p||q).
    for (std::size_t i = 0; i < batch; ++i) {
      const double diff = log_q(i, c) - log_p(i, c);
      const double qi = q(i, c);
      const double pi = p(i, c);
      const double d_qp_ds = qi * (diff - kl_qp);
      const double d_qp_do = pi - qi;
      const double d_pq_do = pi * (-diff - kl_pq);
      const double d_pq_ds = qi - pi;
      out.grad_fam(i, c) =
          inv_c * inv_t * (varpi * d_qp_ds + (1.0 - varpi) * d_pq_ds);
      out.grad_mlp(i, c) =
          inv_c * inv_t * (varpi * d_qp_do + (1.0 - varpi) * d_pq_do);
    }
  }
  return out;
}

// w = H(p_v) / (H(p_m) + H(p_v)); 0.5 when both entropies vanish.
inline double DynamicWeight(double fam_entropy, double mlp_entropy) {
  const double total = fam_entropy + mlp_entropy;
  if (total <= 0.0) return 0.5;
  return std::clamp(fam_entropy / total, 0.0, 1.0);
}

// Batch form: entropies are averaged over the rows of each probability matrix.
inline double DynamicWeight(const Matrix& fam_probs, const Matrix& mlp_probs) {
  Require(fam_probs.rows > 0 && fam_probs.rows == mlp_probs.rows,
          ErrorCode::kEmptyInput, "dynamic weight needs matching nonempty batches");
  double h_fam = 0.0;
  double h_mlp = 0.0;
  for (std::size_t j = 0; j < fam_probs.rows; ++j) {
    h_fam += Entropy(fam_probs.row(j));
    h_mlp += Entropy(mlp_probs.row(j));
  }
  const double n = static_cast<double>(fam_probs.rows);
  return DynamicWeight(h_fam / n, h_mlp / n);
}

// Per-sample form.
inline double DynamicWeight(std::span<const double> fam_probs,
                            std::span<const double> mlp_probs) {
  Require(!fam_probs.empty() && fam_probs.size() == mlp_probs.size(),
          ErrorCode::kInvalidInput, "dynamic weight inputs differ in length");
  return DynamicWeight(Entropy(fam_probs), Entropy(mlp_probs));
}

inline double TotalLoss(double contrastive, double mlp, double similarity,
                        double lambda) {
  Require(lambda >= 0.0, ErrorCode::kInvalidInput, "lambda must be >= 0");
  return contrastive + mlp + lambda * similarity;
}

// p_ens = w p_mlp + (1 - w) p_fam with w from this sample's entropies.
inline std::vector<double> EnsemblePredict(std::span<const double> mlp_probs,
                                           std::span<const double> fam_probs) {
  Require(mlp_probs.size() == fam_probs.size(), ErrorCode::kInvalidInput,
          "ensemble inputs differ in length");
  const double w = DynamicWeight(fam_probs, mlp_probs);
  std::vector<double> out(mlp_probs.size());
  for (std::size_t c = 0; c < out.size(); ++c) {
    out[c] = w * mlp_probs[c] + (1.0 - w) * fam_probs[c];
  }
  return out;
}

}  // namespace maskfed

#endif  // MASKFED_LOSSES_HPP_
