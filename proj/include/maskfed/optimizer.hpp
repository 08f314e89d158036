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

#ifndef MASKFED_OPTIMIZER_HPP_
#define MASKFED_OPTIMIZER_HPP_

#include <cmath>
#include <cstddef>
#include <vector>

#include "maskfed/error.hpp"
#include "maskfed/masked_layers.hpp"

namespace maskfed {

struct OptimizerConfig {
  double weight_decay = 0.02;
  double beta1 = 0.99;
  double beta2 = 0.98;
  double eps = 1e-8;
};

// Adam with decoupled weight decay, in the same operation order as
// torch.optim.AdamW: decay, moment update, bias-corrected step. Decay only
// touches slots flagged `decay` (weights; not biases or thresholds).
class AdamW {
 public:
  explicit AdamW(OptimizerConfig config = {}) : config_(config) {
    Require(config.beta1 > 0.0 && config.beta1 < 1.0 && config.beta2 > 0.0 &&
                config.beta2 < 1.0,
            ErrorCode::kInvalidInput, "AdamW betas must lie in (0, 1)");
  }

  void Step(const std::vector<ParamSlot>& params,
            const std::vector<ParamSlot>& grads, double lr) {
    Require(params.size() == grads.size(), ErrorCode::kInvalidInput,
            "parameter and gradient lists differ");
    if (first_.empty()) {
      for (const auto& p : params) {
        first_.emplace_back(p.values.size(), 0.0);
        second_.emplace_back(p.values.size(), 0.0);
      }
    }
    Require(first_.size() == params.size(), ErrorCode::kInvalidInput,
            "optimizer state does not match parameters");
    ++steps_;
    const double t = static_cast<double>(steps_);
    const double bias1 = 1.0 - std::pow(config_.beta1, t);
    const double bias2 = 1.0 - std::pow(config_.beta2, t);
    const double step_size = lr / bias1;
    const double bias2_sqrt = std::sqrt(bias2);
    for (std::size_t k = 0; k < params.size(); ++k) {
      auto p = params[k].values;
      const auto g = grads[k].values;
      auto& m = first_[k];
      auto& v = second_[k];
      const double decay =
          params[k].decay ? 1.0 - lr * config_.weight_decay : 1.0;
      for (std::size_t i = 0; i < p.size(); ++i) {
        p[i] *= decay;
        m[i] = config_.beta1 * m[i] + (1.0 - config_.beta1) * g[i];
        v[i] = config_.beta2 * v[i] + (1.0 - config_.beta2) * g[i] * g[i];
        const double denom = std::sqrt(v[i]) / bias2_sqrt + config_.eps;
        p[i] -= step_size * m[i] / denom;
      }
    }
  }

  void Reset() {
    first_.clear();
    second_.clear();
    steps_ = 0;
  }

  std::size_t steps() const { return steps_; }
  const OptimizerConfig& config() const { return config_; }

 private:
  OptimizerConfig config_;
  std::vector<std::vector<double>> first_;
  std::vector<std::vector<double>> second_;
  std::size_t steps_ = 0;
};

}  // namespace maskfed

#endif  // MASKFED_OPTIMIZER_HPP_
